//! Shape functions: solutions of `A f = mu f` with the homogeneous condition
//! at x = 0 and `a1 f(1) + a2 f'(1) = 1` at x = 1.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::spectral::{Discretization, EigenSystem, SLProblem};

const GAP_TOL: f64 = 1e-6;
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSet {
    grid: Grid,
    weight: Vec<f64>,
    mus: Vec<f64>,
    varphis: Vec<Vec<f64>>,
    norms_sq: Vec<f64>,
}

impl ShapeSet {
    /// Solves one shape BVP per `mu`.
    pub fn new(problem: &SLProblem, eigsys: &EigenSystem, mus: &[f64]) -> Result<Self> {
        let varphis = mus
            .iter()
            .map(|&mu| solve_shape_bvp(problem, eigsys, mu, eigsys.grid()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(
            eigsys.grid().clone(),
            eigsys.weight().to_vec(),
            mus.to_vec(),
            varphis,
        )
    }

    pub fn from_parts(
        grid: Grid,
        weight: Vec<f64>,
        mus: Vec<f64>,
        varphis: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if mus.len() != varphis.len() {
            return Err(Error::DimensionMismatch {
                expected: mus.len(),
                got: varphis.len(),
            });
        }
        grid.check_len(&weight)?;
        let norms_sq = varphis
            .iter()
            .map(|f| grid.weighted_dot(f, f, &weight))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            weight,
            mus,
            varphis,
            norms_sq,
        })
    }

    /// Number of inputs j.
    pub fn len(&self) -> usize {
        self.mus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mus.is_empty()
    }

    pub fn mus(&self) -> &[f64] {
        &self.mus
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Shape function for 1-based `i`.
    pub fn varphi(&self, i: usize) -> &[f64] {
        &self.varphis[i - 1]
    }

    pub fn varphis(&self) -> &[Vec<f64>] {
        &self.varphis
    }

    pub fn norms_sq(&self) -> &[f64] {
        &self.norms_sq
    }

    /// `count x j` table of `<phi_n, varphi_i>`.
    pub fn coupling(&self, eigsys: &EigenSystem, count: usize) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(count, self.len());
        for (i, f) in self.varphis.iter().enumerate() {
            let c = eigsys.coefficients(f, count)?;
            out.column_mut(i).copy_from_slice(&c);
        }
        Ok(out)
    }

    /// `sum_i varphi_i y_i` on the grid.
    pub fn combine(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: y.len(),
            });
        }
        let mut out = vec![0.0; self.grid.len()];
        for (f, yi) in self.varphis.iter().zip(y) {
            out.iter_mut().zip(f).for_each(|(o, v)| *o += yi * v);
        }
        Ok(out)
    }

    /// Columns `x, varphi_1, ..., varphi_j`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let mut header = String::from("x");
        for i in 1..=self.len() {
            header.push_str(&format!(",varphi_{i}"));
        }
        writeln!(out, "{header}")?;
        for (k, x) in self.grid.x().iter().enumerate() {
            let mut line = format!("{x}");
            for f in &self.varphis {
                line.push_str(&format!(",{}", f[k]));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

fn nearest_eigenvalue(mu: f64, eigsys: &EigenSystem) -> Option<(usize, f64)> {
    eigsys
        .lambdas()
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - mu).abs().total_cmp(&(b.1 - mu).abs()))
        .map(|(i, &l)| (i + 1, l))
}

fn check_mu(mu: f64, eigsys: &EigenSystem) -> Result<()> {
    if !(mu > 0.0) {
        return Err(Error::MuNotPositive { mu });
    }
    if let Some((index, lambda)) = nearest_eigenvalue(mu, eigsys) {
        if (mu - lambda).abs() <= GAP_TOL * (1.0 + mu.abs()) {
            return Err(Error::MuCollidesWithSpectrum { mu, index, lambda });
        }
    }
    Ok(())
}

fn solve_on_grid(problem: &SLProblem, grid: &Grid, mu: f64) -> Vec<f64> {
    let disc = Discretization::new(problem, grid);
    let (rhs, right_value) = disc.unit_right_forcing(problem, grid);
    disc.solve_shifted(mu, &rhs, grid.len(), right_value)
}

/// Shape function for parameter `mu` sampled on `grid`, Richardson-extrapolated
/// from `grid` and its refinement.
pub fn solve_shape_bvp(
    problem: &SLProblem,
    eigsys: &EigenSystem,
    mu: f64,
    grid: &Grid,
) -> Result<Vec<f64>> {
    problem.validate()?;
    check_mu(mu, eigsys)?;
    let coarse = solve_on_grid(problem, grid, mu);
    let fine = solve_on_grid(problem, &grid.refined(), mu);
    Ok(coarse
        .iter()
        .enumerate()
        .map(|(i, c)| (4.0 * fine[2 * i] - c) / 3.0)
        .collect())
}

/// Residuals of a candidate shape function: r-weighted interior residual of
/// `A f - mu f`, and the two boundary-condition residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeResidual {
    pub interior: f64,
    pub left: f64,
    pub right: f64,
}

pub fn shape_residual(problem: &SLProblem, grid: &Grid, mu: f64, f: &[f64]) -> ShapeResidual {
    let lf = problem.apply_unweighted(grid, f);
    let r = grid.sample(|x| problem.r.eval(x));
    let res: Vec<f64> = lf
        .iter()
        .zip(f)
        .zip(&r)
        .map(|((l, v), rv)| (l - mu * rv * v) / rv)
        .collect();
    let interior = grid.weighted_dot(&res, &res, &r).unwrap_or(f64::INFINITY).sqrt();
    let n = f.len() - 1;
    let left = (problem.b1 * f[0] + problem.b2 * grid.derivative_left(f)).abs();
    let right = (problem.a1 * f[n] + problem.a2 * grid.derivative_right(f) - 1.0).abs();
    ShapeResidual {
        interior,
        left,
        right,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuVerdict {
    pub mu: f64,
    pub nearest_index: usize,
    pub nearest_lambda: f64,
    pub gap: f64,
    pub positive: bool,
    pub off_spectrum: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuReport {
    pub verdicts: Vec<MuVerdict>,
    pub pass: bool,
}

pub fn validate_mu_set(mus: &[f64], eigsys: &EigenSystem) -> MuReport {
    let verdicts: Vec<MuVerdict> = mus
        .iter()
        .map(|&mu| {
            let (nearest_index, nearest_lambda) =
                nearest_eigenvalue(mu, eigsys).unwrap_or((0, f64::NAN));
            let gap = (mu - nearest_lambda).abs();
            let positive = mu > 0.0;
            let off_spectrum = !(gap <= GAP_TOL * (1.0 + mu.abs()));
            MuVerdict {
                mu,
                nearest_index,
                nearest_lambda,
                gap,
                positive,
                off_spectrum,
                pass: positive && off_spectrum,
            }
        })
        .collect();
    let pass = verdicts.iter().all(|v| v.pass);
    MuReport { verdicts, pass }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityReport {
    pub gram: DMatrix<f64>,
    pub max_off_diagonal: f64,
    pub pass: bool,
}

pub fn check_orthogonality(shapes: &ShapeSet) -> OrthogonalityReport {
    let j = shapes.len();
    let gram = DMatrix::from_fn(j, j, |a, b| {
        shapes
            .grid
            .weighted_dot(&shapes.varphis[a], &shapes.varphis[b], &shapes.weight)
            .unwrap_or(f64::NAN)
    });
    let mut max_off_diagonal: f64 = 0.0;
    for a in 0..j {
        for b in 0..j {
            if a != b {
                max_off_diagonal = max_off_diagonal.max(gram[(a, b)].abs());
            }
        }
    }
    OrthogonalityReport {
        gram,
        max_off_diagonal,
        pass: max_off_diagonal <= ORTHOGONALITY_TOL,
    }
}
