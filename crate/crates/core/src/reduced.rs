//! Finite-dimensional model of the first N modes, controllability test and
//! gain synthesis.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shapes::ShapeSet;
use crate::spectral::{EigenSystem, SLProblem};

const RANK_TOL: f64 = 1e-10;
const DET_TOL: f64 = 1e-10;
const ENTRY_TOL: f64 = 1e-10;
pub const INEQUALITY_TOL: f64 = 1e-9;

/// `dc/dt = C c + B v` with `C = -diag(lambda_1..lambda_N)` and
/// `B[n, i] = -<varphi_i, phi_n>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedModel {
    pub lambdas: Vec<f64>,
    pub lambda_next: f64,
    pub c: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl ReducedModel {
    pub fn from_parts(lambdas: Vec<f64>, lambda_next: f64, b: DMatrix<f64>) -> Result<Self> {
        if b.nrows() != lambdas.len() {
            return Err(Error::DimensionMismatch {
                expected: lambdas.len(),
                got: b.nrows(),
            });
        }
        let c = DMatrix::from_diagonal(&DVector::from_iterator(
            lambdas.len(),
            lambdas.iter().map(|l| -l),
        ));
        Ok(Self {
            lambdas,
            lambda_next,
            c,
            b,
        })
    }

    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    pub fn j(&self) -> usize {
        self.b.ncols()
    }
}

pub fn build_reduced_model(
    eigsys: &EigenSystem,
    shapes: &ShapeSet,
    cutoff: usize,
) -> Result<ReducedModel> {
    if cutoff == 0 || cutoff >= eigsys.len() {
        return Err(Error::CutoffExceedsComputedModes {
            cutoff: cutoff + 1,
            computed: eigsys.len(),
        });
    }
    let lambda_next = eigsys.lambda(cutoff + 1);
    if !(lambda_next > 0.0) {
        return Err(Error::CutoffNotStrictlyStable {
            cutoff,
            lambda: lambda_next,
        });
    }
    let b = -shapes.coupling(eigsys, cutoff)?;
    ReducedModel::from_parts(eigsys.lambdas()[..cutoff].to_vec(), lambda_next, b)
}

/// `B[n] = p(1) (a2 phi_n(1) - a1 phi_n'(1)) / (mu - lambda_n)`, n = 1..=count.
pub fn input_vector_closed_form(
    problem: &SLProblem,
    eigsys: &EigenSystem,
    mu: f64,
    count: usize,
) -> Result<Vec<f64>> {
    if count > eigsys.len() {
        return Err(Error::CutoffExceedsComputedModes {
            cutoff: count,
            computed: eigsys.len(),
        });
    }
    let p1 = problem.p.eval(1.0);
    (1..=count)
        .map(|n| {
            let lam = eigsys.lambda(n);
            if (mu - lam).abs() <= 1e-6 * (1.0 + mu.abs()) {
                return Err(Error::MuCollidesWithSpectrum {
                    mu,
                    index: n,
                    lambda: lam,
                });
            }
            let phi = eigsys.phi(n);
            let (_, d1) = eigsys.boundary_derivatives(n);
            Ok(p1 * (problem.a2 * phi[phi.len() - 1] - problem.a1 * d1) / (mu - lam))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllabilityReport {
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// Rows n with `|B[n, 0]| <= 1e-10`.
    pub zero_entries: Vec<usize>,
    pub distinct_eigenvalues: bool,
    /// Nonzero first-input entries and distinct eigenvalues (diagonal times
    /// Vandermonde factorization of the Kalman matrix).
    pub structural: bool,
    pub pass: bool,
}

/// Kalman matrix of `(C, B_1)`, with column k scaled by `s^-k` where
/// `s = max(1, max |lambda|)` to keep the powers comparable.
pub fn kalman_matrix(model: &ReducedModel) -> DMatrix<f64> {
    let n = model.n();
    let s = model.lambdas.iter().fold(1.0_f64, |m, l| m.max(l.abs()));
    DMatrix::from_fn(n, n, |row, k| {
        model.b[(row, 0)] * (-model.lambdas[row] / s).powi(k as i32)
    })
}

pub fn check_controllability(model: &ReducedModel) -> ControllabilityReport {
    let n = model.n();
    let q = kalman_matrix(model);
    let mut singular_values: Vec<f64> = q.singular_values().iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let smax = singular_values.first().copied().unwrap_or(0.0);
    let rank = singular_values
        .iter()
        .filter(|&&s| smax > 0.0 && s > RANK_TOL * smax)
        .count();
    let zero_entries: Vec<usize> = (0..n)
        .filter(|&row| !(model.b[(row, 0)].abs() > ENTRY_TOL))
        .map(|row| row + 1)
        .collect();
    let distinct_eigenvalues = model.lambdas.windows(2).all(|w| w[0] != w[1]);
    let structural = zero_entries.is_empty() && distinct_eigenvalues;
    ControllabilityReport {
        rank,
        singular_values,
        zero_entries,
        distinct_eigenvalues,
        structural,
        pass: rank == n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    ClosedForm,
    PolePlacement,
}

/// Gains `K` (row i is `K_i^T`), Lyapunov matrix `R` and decay margin `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainDesign {
    pub mode: GainMode,
    pub k: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub sigma: f64,
    pub c1: f64,
    pub c2: f64,
    /// `lambda_max(R A + A^T R) + 2 sigma` for the closed-loop matrix A.
    pub inequality_margin: f64,
}

impl GainDesign {
    /// Euclidean norm of `K_i` for 1-based `i`.
    pub fn k_norm(&self, i: usize) -> f64 {
        self.k.row(i - 1).norm()
    }

    pub fn closed_loop(&self, model: &ReducedModel) -> DMatrix<f64> {
        &model.c + &model.b * &self.k
    }
}

fn sym_max_eig(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
}

/// Checks the matrix inequality and fills in the coercivity constants.
pub fn verify_gains(
    model: &ReducedModel,
    mode: GainMode,
    k: DMatrix<f64>,
    r: DMatrix<f64>,
    sigma: f64,
) -> Result<GainDesign> {
    if k.nrows() != model.j() || k.ncols() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.j() * model.n(),
            got: k.nrows() * k.ncols(),
        });
    }
    let asym = (&r - r.transpose()).amax();
    if asym > 1e-12 * r.amax().max(1.0) {
        return Err(Error::LyapunovIndefinite(format!(
            "R is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let eig = SymmetricEigen::new(r.clone()).eigenvalues;
    let c1 = eig.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let c2 = eig.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !(c1 > 0.0) {
        return Err(Error::LyapunovIndefinite(format!(
            "R is not positive definite (min eigenvalue {c1:e})"
        )));
    }
    let a = &model.c + &model.b * &k;
    let lhs = &r * &a + a.transpose() * &r;
    let inequality_margin = sym_max_eig(&lhs) + 2.0 * sigma;
    if !(inequality_margin <= INEQUALITY_TOL) {
        return Err(Error::LyapunovIndefinite(format!(
            "lambda_max(RA + A^T R) + 2 sigma = {inequality_margin:e}"
        )));
    }
    Ok(GainDesign {
        mode,
        k,
        r,
        sigma,
        c1,
        c2,
        inequality_margin,
    })
}

/// Solves `A^T R + R A = -Q` through the Kronecker form.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    // Column-major vec: vec(A^T R) = (I (x) A^T) vec R, vec(R A) = (A^T (x) I) vec R.
    let big = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = big
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::LyapunovIndefinite("Lyapunov system is singular".into()))?;
    let r = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&r + r.transpose()) * 0.5)
}

pub fn design_gains(
    model: &ReducedModel,
    sigma_targets: &[f64],
    mode: GainMode,
) -> Result<GainDesign> {
    let n = model.n();
    if sigma_targets.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: sigma_targets.len(),
        });
    }
    if sigma_targets.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidProblem("decay targets must be positive".into()));
    }
    let sigma = sigma_targets.iter().copied().fold(f64::INFINITY, f64::min);
    match mode {
        GainMode::ClosedForm => {
            if model.j() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: model.j(),
                });
            }
            let det = model.b.determinant();
            if !(det.abs() > DET_TOL) {
                return Err(Error::SingularB { det: det.abs() });
            }
            let binv = model
                .b
                .clone()
                .try_inverse()
                .ok_or(Error::SingularB { det: det.abs() })?;
            let shift = DMatrix::from_diagonal(&DVector::from_iterator(
                n,
                sigma_targets
                    .iter()
                    .zip(&model.lambdas)
                    .map(|(s, l)| s - l),
            ));
            let k = -(binv * shift);
            verify_gains(model, mode, k, DMatrix::identity(n, n), sigma)
        }
        GainMode::PolePlacement => {
            let report = check_controllability(model);
            if !report.pass {
                return Err(Error::PlacementFailed(format!(
                    "(C, B_1) has rank {} < {n}",
                    report.rank
                )));
            }
            // Ackermann: K_1^T = -e_N^T Q^-1 Delta(C), Delta(s) = prod (s + sigma_i).
            let b1 = model.b.column(0).into_owned();
            let q = DMatrix::from_fn(n, n, |row, k| {
                b1[row] * (-model.lambdas[row]).powi(k as i32)
            });
            let qinv = q
                .try_inverse()
                .ok_or_else(|| Error::PlacementFailed("Kalman matrix is singular".into()))?;
            let delta: Vec<f64> = model
                .lambdas
                .iter()
                .map(|l| sigma_targets.iter().map(|s| s - l).product())
                .collect();
            let mut k = DMatrix::zeros(model.j(), n);
            for col in 0..n {
                k[(0, col)] = -qinv[(n - 1, col)] * delta[col];
            }
            let a = &model.c + &model.b * &k;
            let r = solve_lyapunov(&a, &(DMatrix::identity(n, n) * (2.0 * sigma)))?;
            verify_gains(model, mode, k, r, sigma)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::spectral::eigensolve;
    use std::f64::consts::{PI, SQRT_2};

    fn example33() -> (SLProblem, EigenSystem, ShapeSet) {
        let prob = SLProblem::dirichlet_constant(1.0, -5.0 * PI * PI);
        let sys = eigensolve(&prob, &Grid::uniform(2049).unwrap(), 16).unwrap();
        let shapes = ShapeSet::new(&prob, &sys, &[1.25 * PI * PI, 7.25 * PI * PI]).unwrap();
        (prob, sys, shapes)
    }

    #[test]
    fn example_three_three_input_matrix() {
        let (prob, sys, shapes) = example33();
        let model = build_reduced_model(&sys, &shapes, 2).unwrap();
        let s = 4.0 * SQRT_2 / (3.0 * PI);
        let expected = [[s / 7.0, s / 15.0], [-2.0 * s / 3.0, -2.0 * s / 11.0]];
        for n in 0..2 {
            for i in 0..2 {
                let rel = (model.b[(n, i)] - expected[n][i]).abs() / expected[n][i].abs();
                assert!(rel < 1e-6, "B[{n},{i}] rel {rel:e}");
            }
        }
        for i in 0..2 {
            let cf = input_vector_closed_form(&prob, &sys, shapes.mus()[i], 2).unwrap();
            for n in 0..2 {
                assert!((cf[n] - model.b[(n, i)]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn closed_form_sign_pattern_and_decay() {
        let (prob, sys, _) = example33();
        let b = input_vector_closed_form(&prob, &sys, 1.25 * PI * PI, 10).unwrap();
        // phi_n'(1) = sqrt2 n pi (-1)^n; mu - lambda_n changes sign between n = 2 and 3.
        for n in 1..10 {
            let flip = if n == 2 { 1.0 } else { -1.0 };
            assert!(flip * b[n] * b[n - 1] > 0.0, "n = {n}");
        }
        let far = input_vector_closed_form(&prob, &sys, 1e6, 1).unwrap()[0];
        let farther = input_vector_closed_form(&prob, &sys, 1e7, 1).unwrap()[0];
        assert!((far / farther - 10.0).abs() < 1e-3);
    }

    #[test]
    fn cutoff_checks() {
        let (_, sys, shapes) = example33();
        assert!(matches!(
            build_reduced_model(&sys, &shapes, 1),
            Err(Error::CutoffNotStrictlyStable { .. })
        ));
        assert!(matches!(
            build_reduced_model(&sys, &shapes, 16),
            Err(Error::CutoffExceedsComputedModes { .. })
        ));
    }

    #[test]
    fn controllability_reports() {
        let (_, sys, shapes) = example33();
        let model = build_reduced_model(&sys, &shapes, 2).unwrap();
        let rep = check_controllability(&model);
        assert!(rep.pass && rep.structural && rep.rank == 2);

        let single = ReducedModel::from_parts(vec![-1.0], 3.0, DMatrix::from_element(1, 1, 0.2))
            .unwrap();
        assert!(check_controllability(&single).pass);

        let mut b = model.b.clone();
        b[(1, 0)] = 0.0;
        let broken = ReducedModel::from_parts(model.lambdas.clone(), 1.0, b).unwrap();
        let rep = check_controllability(&broken);
        assert!(!rep.pass && !rep.structural);
        assert_eq!(rep.zero_entries, vec![2]);
    }

    #[test]
    fn example_three_three_gain_matrix() {
        let (_, sys, shapes) = example33();
        let model = build_reduced_model(&sys, &shapes, 2).unwrap();
        let g = -model.b.clone().try_inverse().unwrap();
        let s = PI / (256.0 * SQRT_2);
        let expected = [[1890.0 * s, 693.0 * s], [-6930.0 * s, -1485.0 * s]];
        for a in 0..2 {
            for b in 0..2 {
                assert!((g[(a, b)] - expected[a][b]).abs() / expected[a][b].abs() < 1e-6);
            }
        }
        let design = design_gains(&model, &[1.0, 1.0], GainMode::ClosedForm).unwrap();
        assert_eq!(design.r, DMatrix::identity(2, 2));
        assert!(design.inequality_margin <= 1e-9);
        let acl = design.closed_loop(&model);
        assert!((acl + DMatrix::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn example_two_four_gain() {
        let (p, q, sigma) = (1.0, -2.0 * PI * PI, 1.0);
        let prob = SLProblem::dirichlet_constant(p, q);
        let sys = eigensolve(&prob, &Grid::uniform(2049).unwrap(), 8).unwrap();
        let mu = 6.25 * p * PI * PI + q;
        let shapes = ShapeSet::new(&prob, &sys, &[mu]).unwrap();
        let model = build_reduced_model(&sys, &shapes, 1).unwrap();
        assert!((model.b[(0, 0)] - 4.0 * SQRT_2 / (21.0 * PI)).abs() < 1e-9);
        let d = design_gains(&model, &[sigma], GainMode::ClosedForm).unwrap();
        let expected = -(21.0 * PI / (4.0 * SQRT_2)) * (sigma - p * PI * PI - q);
        assert!((d.k[(0, 0)] - expected).abs() / expected.abs() < 1e-7);
        assert_eq!(d.c1, 1.0);
    }

    #[test]
    fn pole_placement_places_poles() {
        let (_, sys, shapes) = example33();
        let model = build_reduced_model(&sys, &shapes, 2).unwrap();
        for targets in [[1.0, 1.0], [0.5, 3.0]] {
            let d = design_gains(&model, &targets, GainMode::PolePlacement).unwrap();
            assert!(d.k.row(1).iter().all(|&v| v == 0.0));
            let acl = d.closed_loop(&model);
            // Characteristic polynomial s^2 - tr s + det must equal prod (s + sigma_i).
            let tr = acl.trace();
            let det = acl.determinant();
            assert!((tr + targets[0] + targets[1]).abs() < 1e-8);
            assert!((det - targets[0] * targets[1]).abs() < 1e-8 * (1.0 + det.abs()));
            assert!(d.c1 > 0.0 && d.inequality_margin <= 1e-9);
        }
    }

    #[test]
    fn open_loop_stable_identity() {
        let model = ReducedModel::from_parts(
            vec![3.0, 5.0],
            7.0,
            DMatrix::from_row_slice(2, 1, &[0.1, 0.2]),
        )
        .unwrap();
        let d = verify_gains(
            &model,
            GainMode::ClosedForm,
            DMatrix::zeros(1, 2),
            DMatrix::identity(2, 2),
            1.5,
        )
        .unwrap();
        assert!(d.inequality_margin <= 0.0);
        assert!(matches!(
            verify_gains(
                &model,
                GainMode::ClosedForm,
                DMatrix::zeros(1, 2),
                DMatrix::identity(2, 2),
                3.5,
            ),
            Err(Error::LyapunovIndefinite(_))
        ));
    }

    #[test]
    fn singular_b_rejected() {
        let model = ReducedModel::from_parts(
            vec![-1.0, 2.0],
            3.0,
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]),
        )
        .unwrap();
        assert!(matches!(
            design_gains(&model, &[1.0, 1.0], GainMode::ClosedForm),
            Err(Error::SingularB { .. })
        ));
    }

    #[test]
    fn lyapunov_solution_satisfies_equation() {
        let a = DMatrix::from_row_slice(3, 3, &[-2.0, 1.0, 0.0, 0.5, -3.0, 1.0, 0.0, 0.2, -1.0]);
        let q = DMatrix::identity(3, 3) * 2.0;
        let r = solve_lyapunov(&a, &q).unwrap();
        let res = a.transpose() * &r + &r * &a + q;
        assert!(res.amax() < 1e-12);
    }
}
