//! Sturm–Liouville operator `A f = (-(p f')' + q f) / r` with separated
//! boundary conditions `b1 f(0) + b2 f'(0) = 0`, `a1 f(1) + a2 f'(1) = 0`.
//!
//! The operator is discretized with second-order finite differences in
//! self-adjoint (flux) form. Robin ends use half-cell finite volumes, Dirichlet
//! ends are eliminated. The resulting generalized problem `S f = lambda W f`
//! is symmetrized to a tridiagonal matrix whose eigenvalues come from Sturm
//! bisection and whose eigenvectors come from inverse iteration. Eigenpairs
//! from the grid and its refinement are combined by one Richardson step, which
//! removes the `h^2` error term.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::tridiag::{inverse_iteration, smallest_eigenvalues, TridiagLu};

const BC_ZERO: f64 = 1e-14;
const NORMALIZATION_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-5;

/// Coefficient function on [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coefficient {
    Constant(f64),
    /// `c[0] + c[1] x + c[2] x^2 + ...`
    Polynomial(Vec<f64>),
    /// Samples `y` at abscissae `x`, interpolated with local Lagrange
    /// polynomials of degree `order` (1 or 3).
    Table { x: Vec<f64>, y: Vec<f64>, order: usize },
}

impl Coefficient {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Polynomial(c) => c.iter().rev().fold(0.0, |acc, a| acc * x + a),
            Coefficient::Table { x: xs, y: ys, order } => table_eval(xs, ys, *order, x),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        match self {
            Coefficient::Constant(c) if !c.is_finite() => Err(Error::InvalidProblem(format!(
                "{name}: constant is not finite"
            ))),
            Coefficient::Polynomial(c) if c.is_empty() || c.iter().any(|v| !v.is_finite()) => Err(
                Error::InvalidProblem(format!("{name}: polynomial needs finite coefficients")),
            ),
            Coefficient::Table { x, y, order } => {
                if x.len() != y.len() || x.len() < 2 {
                    return Err(Error::InvalidProblem(format!(
                        "{name}: table needs matching x/y with at least two samples"
                    )));
                }
                if !matches!(order, 1 | 3) || (*order == 3 && x.len() < 4) {
                    return Err(Error::InvalidProblem(format!(
                        "{name}: interpolation order must be 1 or 3 (3 needs 4 samples)"
                    )));
                }
                if x.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidProblem(format!(
                        "{name}: table abscissae must increase strictly"
                    )));
                }
                if x[0] > 0.0 || x[x.len() - 1] < 1.0 {
                    return Err(Error::InvalidProblem(format!(
                        "{name}: table must cover [0, 1]"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn table_eval(xs: &[f64], ys: &[f64], order: usize, x: f64) -> f64 {
    let n = xs.len();
    let k = match xs.partition_point(|&v| v <= x) {
        0 => 0,
        i if i >= n => n - 2,
        i => i - 1,
    };
    let (start, len) = if order == 1 {
        (k, 2)
    } else {
        (k.saturating_sub(1).min(n - 4), 4)
    };
    let mut acc = 0.0;
    for i in start..start + len {
        let mut l = 1.0;
        for j in start..start + len {
            if i != j {
                l *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += l * ys[i];
    }
    acc
}

/// Regular Sturm–Liouville problem on [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SLProblem {
    pub p: Coefficient,
    pub q: Coefficient,
    pub r: Coefficient,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl SLProblem {
    pub fn new(
        p: Coefficient,
        q: Coefficient,
        r: Coefficient,
        (b1, b2): (f64, f64),
        (a1, a2): (f64, f64),
    ) -> Result<Self> {
        let prob = Self {
            p,
            q,
            r,
            b1,
            b2,
            a1,
            a2,
        };
        prob.validate()?;
        Ok(prob)
    }

    /// Constant coefficients with Dirichlet conditions at both ends.
    pub fn dirichlet_constant(p: f64, q: f64) -> Self {
        Self {
            p: Coefficient::Constant(p),
            q: Coefficient::Constant(q),
            r: Coefficient::Constant(1.0),
            b1: 1.0,
            b2: 0.0,
            a1: 1.0,
            a2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.p.validate("p")?;
        self.q.validate("q")?;
        self.r.validate("r")?;
        for (name, u, v) in [("a", self.a1, self.a2), ("b", self.b1, self.b2)] {
            if !(u.is_finite() && v.is_finite()) || (u * u + v * v - 1.0).abs() > NORMALIZATION_TOL
            {
                return Err(Error::InvalidProblem(format!(
                    "{name}1^2 + {name}2^2 must equal 1 (got {})",
                    u * u + v * v
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn dirichlet_left(&self) -> bool {
        self.b2.abs() < BC_ZERO
    }

    pub(crate) fn dirichlet_right(&self) -> bool {
        self.a2.abs() < BC_ZERO
    }

    fn check_positive(&self, grid: &Grid) -> Result<()> {
        let h = grid.h();
        let mids = grid.x()[..grid.len() - 1].iter().map(|x| x + 0.5 * h);
        for x in grid.x().iter().copied().chain(mids) {
            let p = self.p.eval(x);
            if !(p > 0.0) {
                return Err(Error::NonPositiveCoefficient {
                    name: "p",
                    x,
                    value: p,
                });
            }
            let r = self.r.eval(x);
            if !(r > 0.0) {
                return Err(Error::NonPositiveCoefficient {
                    name: "r",
                    x,
                    value: r,
                });
            }
        }
        Ok(())
    }

    /// Applies `-(p f')' + q f` with fourth-order stencils (used for residuals).
    pub fn apply_unweighted(&self, grid: &Grid, f: &[f64]) -> Vec<f64> {
        let d = grid.derivative(f);
        let flux: Vec<f64> = grid
            .x()
            .iter()
            .zip(&d)
            .map(|(&x, dv)| self.p.eval(x) * dv)
            .collect();
        let dd = grid.derivative(&flux);
        grid.x()
            .iter()
            .zip(dd.iter().zip(f))
            .map(|(&x, (ddv, fv))| -ddv + self.q.eval(x) * fv)
            .collect()
    }
}

/// Flux-form finite-difference discretization on one grid.
pub(crate) struct Discretization {
    /// Index of the first and last unknown node.
    pub lo: usize,
    pub hi: usize,
    pub s_diag: Vec<f64>,
    pub s_off: Vec<f64>,
    pub w: Vec<f64>,
}

impl Discretization {
    pub fn new(problem: &SLProblem, grid: &Grid) -> Self {
        let n = grid.len() - 1;
        let h = grid.h();
        let x = grid.x();
        let pm: Vec<f64> = (0..n).map(|i| problem.p.eval(x[i] + 0.5 * h)).collect();
        let lo = usize::from(problem.dirichlet_left());
        let hi = if problem.dirichlet_right() { n - 1 } else { n };
        let h2 = h * h;
        let mut s_diag = Vec::with_capacity(hi - lo + 1);
        let mut w = Vec::with_capacity(hi - lo + 1);
        for i in lo..=hi {
            let q = problem.q.eval(x[i]);
            let r = problem.r.eval(x[i]);
            if i == 0 {
                let p0 = problem.p.eval(0.0);
                s_diag.push(pm[0] / h2 - p0 * problem.b1 / (problem.b2 * h) + 0.5 * q);
                w.push(0.5 * r);
            } else if i == n {
                let p1 = problem.p.eval(1.0);
                s_diag.push(pm[n - 1] / h2 + p1 * problem.a1 / (problem.a2 * h) + 0.5 * q);
                w.push(0.5 * r);
            } else {
                s_diag.push((pm[i - 1] + pm[i]) / h2 + q);
                w.push(r);
            }
        }
        let s_off = (lo..hi).map(|i| -pm[i] / h2).collect();
        Self {
            lo,
            hi,
            s_diag,
            s_off,
            w,
        }
    }

    /// Right-hand side of `(S - mu W) f = rhs` for the inhomogeneous condition
    /// `a1 f(1) + a2 f'(1) = 1`, plus the prescribed value at x = 1 if the
    /// right end is Dirichlet.
    pub fn unit_right_forcing(&self, problem: &SLProblem, grid: &Grid) -> (Vec<f64>, Option<f64>) {
        let n = grid.len() - 1;
        let h = grid.h();
        let mut rhs = vec![0.0; self.hi - self.lo + 1];
        if problem.dirichlet_right() {
            let value = 1.0 / problem.a1;
            let pm = problem.p.eval(1.0 - 0.5 * h);
            *rhs.last_mut().unwrap() = pm / (h * h) * value;
            (rhs, Some(value))
        } else {
            let p1 = problem.p.eval(1.0);
            *rhs.last_mut().unwrap() = p1 / (problem.a2 * h);
            debug_assert_eq!(self.hi, n);
            (rhs, None)
        }
    }

    fn symmetric(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self
            .s_diag
            .iter()
            .zip(&self.w)
            .map(|(s, w)| s / w)
            .collect();
        let e = self
            .s_off
            .iter()
            .enumerate()
            .map(|(i, s)| s / (self.w[i] * self.w[i + 1]).sqrt())
            .collect();
        (d, e)
    }

    /// Solve `(S - mu W) f = rhs` and embed into a full grid vector.
    pub fn solve_shifted(&self, mu: f64, rhs: &[f64], n_points: usize, right_value: Option<f64>) -> Vec<f64> {
        let diag: Vec<f64> = self
            .s_diag
            .iter()
            .zip(&self.w)
            .map(|(s, w)| s - mu * w)
            .collect();
        let lu = TridiagLu::factor(&self.s_off, &diag, &self.s_off);
        let mut sol = rhs.to_vec();
        lu.solve(&mut sol);
        let mut full = vec![0.0; n_points];
        full[self.lo..=self.hi].copy_from_slice(&sol);
        if let Some(v) = right_value {
            full[n_points - 1] = v;
        }
        full
    }
}

/// Eigenpairs of the Sturm–Liouville operator sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem {
    grid: Grid,
    weight: Vec<f64>,
    lambdas: Vec<f64>,
    phis: Vec<Vec<f64>>,
}

impl EigenSystem {
    /// Build from explicit data (analytic test fixtures, reloaded exports).
    pub fn from_parts(
        grid: Grid,
        weight: Vec<f64>,
        lambdas: Vec<f64>,
        phis: Vec<Vec<f64>>,
    ) -> Result<Self> {
        grid.check_len(&weight)?;
        if phis.len() != lambdas.len() {
            return Err(Error::DimensionMismatch {
                expected: lambdas.len(),
                got: phis.len(),
            });
        }
        for phi in &phis {
            grid.check_len(phi)?;
        }
        Ok(Self {
            grid,
            weight,
            lambdas,
            phis,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    /// Number of computed modes K.
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Eigenvalues, `lambdas()[n - 1]` is lambda_n.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Eigenfunction phi_n for 1-based `n`.
    pub fn phi(&self, n: usize) -> &[f64] {
        &self.phis[n - 1]
    }

    pub fn lambda(&self, n: usize) -> f64 {
        self.lambdas[n - 1]
    }

    pub fn phis(&self) -> &[Vec<f64>] {
        &self.phis
    }

    /// r-weighted inner product on the eigen-system grid.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.grid.weighted_dot(f, g, &self.weight)
    }

    pub fn norm_sq(&self, f: &[f64]) -> Result<f64> {
        self.inner(f, f)
    }

    /// `<phi_n, f>` for n = 1..=count.
    pub fn coefficients(&self, f: &[f64], count: usize) -> Result<Vec<f64>> {
        if count > self.len() {
            return Err(Error::CutoffExceedsComputedModes {
                cutoff: count,
                computed: self.len(),
            });
        }
        self.grid.check_len(f)?;
        let wf: Vec<f64> = self
            .grid
            .weights()
            .iter()
            .zip(&self.weight)
            .zip(f)
            .map(|((a, b), c)| a * b * c)
            .collect();
        Ok(self.phis[..count]
            .iter()
            .map(|phi| phi.iter().zip(&wf).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `sum_n coeffs[n] phi_{n+1}` on the grid.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (c, phi) in coeffs.iter().zip(&self.phis) {
            if *c != 0.0 {
                out.iter_mut().zip(phi).for_each(|(o, p)| *o += c * p);
            }
        }
        out
    }

    /// phi_n'(0) and phi_n'(1) from fourth-order one-sided stencils.
    pub fn boundary_derivatives(&self, n: usize) -> (f64, f64) {
        let phi = self.phi(n);
        (self.grid.derivative_left(phi), self.grid.derivative_right(phi))
    }

    /// CSV with one row per mode: `n, lambda, phi_n(x_0), ..., phi_n(x_last)`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let mut header = String::from("n,lambda");
        for i in 0..self.grid.len() {
            header.push_str(&format!(",phi_{i}"));
        }
        writeln!(out, "{header}")?;
        for (k, (lam, phi)) in self.lambdas.iter().zip(&self.phis).enumerate() {
            let mut line = format!("{},{}", k + 1, lam);
            for v in phi {
                line.push_str(&format!(",{v}"));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Simpson approximation of `int_0^1 r f g dx`.
pub fn inner_product(f: &[f64], g: &[f64], grid: &Grid, weight: &[f64]) -> Result<f64> {
    grid.weighted_dot(f, g, weight)
}

fn solve_on_grid(problem: &SLProblem, grid: &Grid, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let disc = Discretization::new(problem, grid);
    let (d, e) = disc.symmetric();
    let lambdas = smallest_eigenvalues(&d, &e, k);
    let r = grid.sample(|x| problem.r.eval(x));
    let phis = lambdas
        .iter()
        .enumerate()
        .map(|(idx, &lam)| {
            let g = inverse_iteration(&d, &e, lam, idx as u64 + 1);
            let mut full = vec![0.0; grid.len()];
            for (j, gv) in g.iter().enumerate() {
                full[disc.lo + j] = gv / disc.w[j].sqrt();
            }
            normalize_and_orient(problem, grid, &r, &mut full);
            full
        })
        .collect();
    (lambdas, phis)
}

fn normalize_and_orient(problem: &SLProblem, grid: &Grid, r: &[f64], f: &mut [f64]) {
    let norm = grid.weighted_dot(f, f, r).expect("grid length").sqrt();
    let sign_ref = if problem.dirichlet_left() {
        grid.derivative_left(f)
    } else {
        f[0]
    };
    let s = if sign_ref < 0.0 { -1.0 } else { 1.0 } / norm;
    f.iter_mut().for_each(|v| *v *= s);
}

/// Computes the `k` lowest eigenpairs on `grid`.
///
/// Eigenvalues and eigenvector samples are Richardson-extrapolated from the
/// grid and its uniform refinement.
pub fn eigensolve(problem: &SLProblem, grid: &Grid, k: usize) -> Result<EigenSystem> {
    problem.validate()?;
    if k == 0 {
        return Err(Error::InvalidGrid("mode count K must be at least 1".into()));
    }
    if grid.len() < 8 * k {
        return Err(Error::GridTooCoarse {
            modes: k,
            reason: format!("n_points = {} < 8 K = {}", grid.len(), 8 * k),
        });
    }
    let fine = grid.refined();
    problem.check_positive(&fine)?;

    let (lam_c, phi_c) = solve_on_grid(problem, grid, k);
    let (lam_f, phi_f) = solve_on_grid(problem, &fine, k);
    let r = grid.sample(|x| problem.r.eval(x));

    let lambdas: Vec<f64> = lam_c
        .iter()
        .zip(&lam_f)
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect();
    let phis: Vec<Vec<f64>> = phi_c
        .iter()
        .zip(&phi_f)
        .map(|(c, f)| {
            let mut e: Vec<f64> = c
                .iter()
                .enumerate()
                .map(|(i, cv)| (4.0 * f[2 * i] - cv) / 3.0)
                .collect();
            normalize_and_orient(problem, grid, &r, &mut e);
            e
        })
        .collect();

    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::GridTooCoarse {
            modes: k,
            reason: "computed eigenvalues are not strictly increasing".into(),
        });
    }

    let sys = EigenSystem {
        grid: grid.clone(),
        weight: r,
        lambdas,
        phis,
    };
    for n in 1..=(k / 2).max(1) {
        let res = operator_residual(problem, &sys, n);
        let lam = sys.lambda(n);
        if !(res <= RESIDUAL_TOL * (1.0 + lam.abs())) {
            return Err(Error::GridTooCoarse {
                modes: k,
                reason: format!("operator residual {res:e} for mode {n} (lambda = {lam})"),
            });
        }
    }
    Ok(sys)
}

/// `|| A phi_n - lambda_n phi_n ||_r` with fourth-order stencils.
pub fn operator_residual(problem: &SLProblem, sys: &EigenSystem, n: usize) -> f64 {
    let grid = sys.grid();
    let phi = sys.phi(n);
    let lam = sys.lambda(n);
    let lphi = problem.apply_unweighted(grid, phi);
    // (L phi - lambda r phi) / r, measured in the r-weighted norm.
    let res: Vec<f64> = lphi
        .iter()
        .zip(phi)
        .zip(sys.weight())
        .map(|((l, p), r)| (l - lam * r * p) / r)
        .collect();
    sys.norm_sq(&res).unwrap_or(f64::INFINITY).sqrt()
}

/// Orthogonal projection onto the first N eigenfunctions.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coeffs: Vec<f64>,
    pub remainder: Vec<f64>,
}

pub fn project_p(w: &[f64], sys: &EigenSystem, cutoff: usize) -> Result<Projection> {
    let coeffs = sys.coefficients(w, cutoff)?;
    let pw = sys.synthesize(&coeffs);
    let remainder = w.iter().zip(&pw).map(|(a, b)| a - b).collect();
    Ok(Projection { coeffs, remainder })
}

/// Numerical diagnostic for the summability assumption on the tail modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSummabilityReport {
    pub cutoff: usize,
    pub lambda_next: f64,
    pub lambda_next_positive: bool,
    /// `sum_{n=N+1}^{k} |phi_n|_inf / lambda_n` for k = N+1..=K.
    pub partial_sums: Vec<f64>,
    /// Fitted exponent alpha of `term_n ~ n^-alpha` over the upper half of
    /// the computed tail; alpha > 1 suggests convergence.
    pub decay_exponent: Option<f64>,
    pub converging: bool,
    /// Fewer than N + 20 modes were available.
    pub insufficient_modes: bool,
    pub pass: bool,
}

pub fn check_tail_summability(sys: &EigenSystem, cutoff: usize) -> TailSummabilityReport {
    let k = sys.len();
    let insufficient_modes = k < cutoff + 20;
    let lambda_next = if cutoff < k {
        sys.lambda(cutoff + 1)
    } else {
        f64::NAN
    };
    let lambda_next_positive = lambda_next > 0.0;

    let mut partial_sums = Vec::new();
    let mut terms = Vec::new();
    if lambda_next_positive {
        let mut acc = 0.0;
        for n in cutoff + 1..=k {
            let sup = sys.phi(n).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let t = sup / sys.lambda(n);
            acc += t;
            terms.push((n as f64, t));
            partial_sums.push(acc);
        }
    }
    let decay_exponent = if terms.len() >= 4 {
        let upper = &terms[terms.len() / 2..];
        let pts: Vec<(f64, f64)> = upper.iter().map(|(n, t)| (n.ln(), t.ln())).collect();
        Some(-least_squares_slope(&pts))
    } else {
        None
    };
    let converging = decay_exponent.is_some_and(|a| a > 1.0);
    TailSummabilityReport {
        cutoff,
        lambda_next,
        lambda_next_positive,
        partial_sums,
        decay_exponent,
        converging,
        insufficient_modes,
        pass: lambda_next_positive,
    }
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
