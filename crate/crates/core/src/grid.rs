//! Uniform grids on [0, 1], composite Simpson quadrature and fourth-order
//! finite-difference derivative stencils.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_POINTS: usize = 2049;
pub const MIN_POINTS: usize = 129;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    /// Uniform grid with `n_points` nodes (odd, at least 129).
    pub fn uniform(n_points: usize) -> Result<Self> {
        if n_points < MIN_POINTS {
            return Err(Error::InvalidGrid(format!(
                "n_points = {n_points} is below the minimum {MIN_POINTS}"
            )));
        }
        Self::uniform_unchecked(n_points)
    }

    /// Same as [`Grid::uniform`] without the lower bound; used for the
    /// refined grids of the extrapolation steps and small tests.
    pub(crate) fn uniform_unchecked(n_points: usize) -> Result<Self> {
        if n_points < 3 || n_points.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "n_points = {n_points} must be odd and at least 3"
            )));
        }
        let intervals = n_points - 1;
        let h = 1.0 / intervals as f64;
        let x = (0..n_points).map(|i| i as f64 / intervals as f64).collect();
        let weights = (0..n_points)
            .map(|i| {
                let c = if i == 0 || i == intervals {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                c * h / 3.0
            })
            .collect();
        Ok(Self { x, weights })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.x.len() - 1) as f64
    }

    /// Grid with half the spacing; every other node coincides with `self`.
    pub fn refined(&self) -> Self {
        Self::uniform_unchecked(2 * self.len() - 1).expect("refined grid is odd")
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.x.iter().map(|&x| f(x)).collect()
    }

    /// Simpson approximation of the integral of `f` over [0, 1].
    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        Ok(self.weights.iter().zip(f).map(|(w, v)| w * v).sum())
    }

    /// Simpson approximation of `int_0^1 r f g dx`.
    pub fn weighted_dot(&self, f: &[f64], g: &[f64], r: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        self.check_len(g)?;
        self.check_len(r)?;
        Ok(self
            .weights
            .iter()
            .zip(f)
            .zip(g)
            .zip(r)
            .map(|(((w, a), b), c)| w * a * b * c)
            .sum())
    }

    pub(crate) fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: f.len(),
            });
        }
        Ok(())
    }

    /// First derivative at x = 0 from the one-sided fourth-order stencil.
    pub fn derivative_left(&self, f: &[f64]) -> f64 {
        let h = self.h();
        (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h)
    }

    /// First derivative at x = 1 from the one-sided fourth-order stencil.
    pub fn derivative_right(&self, f: &[f64]) -> f64 {
        let n = f.len() - 1;
        let h = self.h();
        (25.0 * f[n] - 48.0 * f[n - 1] + 36.0 * f[n - 2] - 16.0 * f[n - 3] + 3.0 * f[n - 4])
            / (12.0 * h)
    }

    /// Fourth-order first derivative at every node (central in the interior,
    /// shifted stencils in the two layers next to each end).
    pub fn derivative(&self, f: &[f64]) -> Vec<f64> {
        let n = f.len();
        let h = self.h();
        let mut d = vec![0.0; n];
        d[0] = self.derivative_left(f);
        d[n - 1] = self.derivative_right(f);
        d[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h);
        d[n - 2] = (3.0 * f[n - 1] + 10.0 * f[n - 2] - 18.0 * f[n - 3] + 6.0 * f[n - 4]
            - f[n - 5])
            / (12.0 * h);
        for i in 2..n - 2 {
            d[i] = (-f[i + 2] + 8.0 * f[i + 1] - 8.0 * f[i - 1] + f[i - 2]) / (12.0 * h);
        }
        d
    }
}
