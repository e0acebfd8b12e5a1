//! Semilinear plants `w_t + A w = F(u) - sum varphi_i v_i` with `j = N` inputs:
//! the cancelling (nonlinear) and dominating (linear) controllers, their
//! admissibility conditions, and the explicit Lyapunov parameters.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduced::ReducedModel;
use crate::shapes::{check_orthogonality, ShapeSet};
use crate::spectral::EigenSystem;

/// Strict margin required of a grid point before it is accepted.
pub const SEARCH_MARGIN: f64 = 1e-9;
pub const KAPPA_MIN: f64 = 1e-4;
pub const KAPPA_MAX: f64 = 1e4;
pub const KAPPA_POINTS: usize = 4097;
pub const UNIT_POINTS: usize = 64;
pub const ZETA_DECADES: f64 = 10.0;

/// Pointwise nonlinearity `F(u)(x) = f(u(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonlinearityKind {
    Zero,
    /// `f(s) = gain * s`
    LinearGain { gain: f64 },
    /// `f(s) = amplitude * sin(s)`
    SineType { amplitude: f64 },
    /// `f(s) = clamp(slope * s, -level, level)`
    Saturation { slope: f64, level: f64 },
    /// Piecewise-linear through `(s, f)`, constant beyond the ends.
    UserTable { s: Vec<f64>, f: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    #[serde(flatten)]
    pub kind: NonlinearityKind,
    /// Declared growth constant: `|f(s)| <= lbar |s|`.
    pub lbar: f64,
}

impl NonlinearitySpec {
    pub fn new(kind: NonlinearityKind, lbar: f64) -> Result<Self> {
        let spec = Self { kind, lbar };
        spec.validate()?;
        Ok(spec)
    }

    pub fn zero() -> Self {
        Self {
            kind: NonlinearityKind::Zero,
            lbar: 0.0,
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Zero => 0.0,
            NonlinearityKind::LinearGain { gain } => gain * s,
            NonlinearityKind::SineType { amplitude } => amplitude * s.sin(),
            NonlinearityKind::Saturation { slope, level } => (slope * s).clamp(-level, *level),
            NonlinearityKind::UserTable { s: xs, f: ys } => {
                let n = xs.len();
                if s <= xs[0] {
                    return ys[0];
                }
                if s >= xs[n - 1] {
                    return ys[n - 1];
                }
                let k = xs.partition_point(|&v| v <= s) - 1;
                let t = (s - xs[k]) / (xs[k + 1] - xs[k]);
                ys[k] + t * (ys[k + 1] - ys[k])
            }
        }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|&s| self.eval(s)).collect()
    }

    /// `f(0) = 0` and `|f(s)| <= lbar |s|` on a dense sample of [-10, 10].
    pub fn validate(&self) -> Result<()> {
        if !(self.lbar >= 0.0) || !self.lbar.is_finite() {
            return Err(Error::InvalidNonlinearity(format!(
                "growth constant must be finite and >= 0 (got {})",
                self.lbar
            )));
        }
        match &self.kind {
            NonlinearityKind::Saturation { level, .. } if !(*level >= 0.0) => {
                return Err(Error::InvalidNonlinearity("saturation level must be >= 0".into()));
            }
            NonlinearityKind::UserTable { s, f }
                if (s.len() != f.len() || s.len() < 2 || s.windows(2).any(|w| w[1] <= w[0])) => {
                    return Err(Error::InvalidNonlinearity(
                        "table needs strictly increasing s with matching f values".into(),
                    ));
                }
            _ => {}
        }
        if self.eval(0.0) != 0.0 {
            return Err(Error::InvalidNonlinearity("f(0) must be 0".into()));
        }
        for k in 0..=20_000 {
            let s = -10.0 + 1e-3 * k as f64;
            let v = self.eval(s);
            if !(v.abs() <= self.lbar * s.abs() * (1.0 + 1e-12) + 1e-15) {
                return Err(Error::InvalidNonlinearity(format!(
                    "|f({s})| = {} exceeds lbar |s| = {}",
                    v.abs(),
                    self.lbar * s.abs()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Nonlinear,
    Linear,
}

/// Data shared by both controllers: `g = -B^-1`, the decay target and the
/// spectral quantities entering the admissibility conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemilinearDesign {
    pub g: DMatrix<f64>,
    pub sigma: f64,
    pub lambdas: Vec<f64>,
    pub lambda_next: f64,
    pub mus: Vec<f64>,
    pub norms_sq: Vec<f64>,
    /// Largest off-diagonal Gram entry of the shape functions.
    pub shape_orthogonality: f64,
}

impl SemilinearDesign {
    pub fn new(model: &ReducedModel, shapes: &ShapeSet, sigma: f64) -> Result<Self> {
        let n = model.n();
        if model.j() != n || shapes.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: model.j(),
            });
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidProblem("sigma must be positive".into()));
        }
        let det = model.b.determinant();
        if !(det.abs() > 1e-10) {
            return Err(Error::SingularB { det: det.abs() });
        }
        let g = -model
            .b
            .clone()
            .try_inverse()
            .ok_or(Error::SingularB { det: det.abs() })?;
        Ok(Self {
            g,
            sigma,
            lambdas: model.lambdas.clone(),
            lambda_next: model.lambda_next,
            mus: shapes.mus().to_vec(),
            norms_sq: shapes.norms_sq().to_vec(),
            shape_orthogonality: check_orthogonality(shapes).max_off_diagonal,
        })
    }

    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    fn nf(&self) -> f64 {
        self.n() as f64
    }

    /// `sum_m g_im^2`.
    fn g_sq(&self, i: usize) -> f64 {
        self.g.row(i).iter().map(|v| v * v).sum()
    }

    /// `sum_m g_im^2 (sigma - lambda_m)^2`.
    fn gs_sq(&self, i: usize) -> f64 {
        (0..self.n())
            .map(|m| (self.g[(i, m)] * (self.sigma - self.lambdas[m])).powi(2))
            .sum()
    }

    /// `sum_i ||varphi_i||^2 sum_m g_im^2`.
    fn weighted_g_sq(&self) -> f64 {
        (0..self.n()).map(|i| self.norms_sq[i] * self.g_sq(i)).sum()
    }

    /// `sum_i ||varphi_i||^2 sum_m g_im^2 (sigma - lambda_m)^2`.
    fn weighted_gs_sq(&self) -> f64 {
        (0..self.n()).map(|i| self.norms_sq[i] * self.gs_sq(i)).sum()
    }
}

/// `v_i = sum_m g_im ((sigma - lambda_m) c_m + f_m)`.
pub fn eval_nonlinear_controller(
    design: &SemilinearDesign,
    w_coeffs: &[f64],
    f_coeffs: &[f64],
) -> Vec<f64> {
    let n = design.n();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|m| {
                    design.g[(i, m)]
                        * ((design.sigma - design.lambdas[m]) * w_coeffs[m] + f_coeffs[m])
                })
                .sum()
        })
        .collect()
}

/// `v_i = sum_m g_im (sigma - lambda_m) c_m`.
pub fn eval_linear_controller(design: &SemilinearDesign, w_coeffs: &[f64]) -> Vec<f64> {
    eval_nonlinear_controller(design, w_coeffs, &vec![0.0; design.n()])
}

pub fn eval_controller(
    kind: ControllerKind,
    design: &SemilinearDesign,
    w_coeffs: &[f64],
    f_coeffs: &[f64],
) -> Vec<f64> {
    match kind {
        ControllerKind::Nonlinear => eval_nonlinear_controller(design, w_coeffs, f_coeffs),
        ControllerKind::Linear => eval_linear_controller(design, w_coeffs),
    }
}

/// `(a_bar, b_bar)` of the single-condition growth bound.
pub fn growth_bound_constants(design: &SemilinearDesign) -> Result<(f64, f64)> {
    let nf = design.nf();
    let mut a_bar = f64::INFINITY;
    for i in 0..design.n() {
        let den = 2.0 * nf * design.norms_sq[i] * design.g_sq(i);
        if !(den > 0.0) || !den.is_finite() {
            return Err(Error::DegenerateDenominator(format!(
                "2 N ||varphi_{}||^2 sum_m g^2 = {den}",
                i + 1
            )));
        }
        a_bar = a_bar.min(design.mus[i].powi(2) / den);
    }
    let b_bar = design.lambda_next.powi(2) / (1.0 + 2.0 * nf * design.weighted_g_sq());
    Ok((a_bar, b_bar))
}

/// `sqrt(2 a b / (a + b + sqrt((a - b)^2 + 4 N a b)))`.
pub fn growth_bound_from_constants(a_bar: f64, b_bar: f64, n: usize) -> Result<f64> {
    let nf = n as f64;
    let den = a_bar + b_bar + ((a_bar - b_bar).powi(2) + 4.0 * nf * a_bar * b_bar).sqrt();
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::DegenerateDenominator(format!(
            "growth bound denominator {den}"
        )));
    }
    Ok((2.0 * a_bar * b_bar / den).sqrt())
}

/// Supremum of the growth constants admitted by the cancelling controller.
pub fn growth_bound_limit(design: &SemilinearDesign) -> Result<f64> {
    let (a, b) = growth_bound_constants(design)?;
    growth_bound_from_constants(a, b, design.n())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub lbar: f64,
    pub kappa: f64,
    /// `sigma^2 - lbar^2 (1 + kappa N)`; only meaningful for the linear controller.
    pub sigma_margin: Option<f64>,
    pub mu_margins: Vec<f64>,
    pub lambda_margin: f64,
    pub pass: bool,
}

impl ConditionCheck {
    pub fn min_margin(&self) -> f64 {
        self.mu_margins
            .iter()
            .copied()
            .chain(std::iter::once(self.lambda_margin))
            .chain(self.sigma_margin)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Conditions for the cancelling controller.
pub fn check_cancelling(design: &SemilinearDesign, lbar: f64, kappa: f64) -> ConditionCheck {
    let nf = design.nf();
    let l2 = lbar * lbar;
    let mu_margins: Vec<f64> = (0..design.n())
        .map(|i| {
            design.mus[i].powi(2)
                - 2.0 * nf * l2 * (1.0 + 1.0 / kappa) * design.norms_sq[i] * design.g_sq(i)
        })
        .collect();
    let lambda_margin = design.lambda_next.powi(2)
        - l2 * (1.0 + kappa * nf) * (1.0 + 2.0 * nf * design.weighted_g_sq());
    let pass = kappa > 0.0 && lambda_margin > 0.0 && mu_margins.iter().all(|&m| m > 0.0);
    ConditionCheck {
        lbar,
        kappa,
        sigma_margin: None,
        mu_margins,
        lambda_margin,
        pass,
    }
}

/// Conditions for the dominating controller.
pub fn check_dominating(design: &SemilinearDesign, lbar: f64, kappa: f64) -> ConditionCheck {
    let nf = design.nf();
    let l2 = lbar * lbar;
    let sigma_margin = design.sigma.powi(2) - l2 * (1.0 + kappa * nf);
    if !(sigma_margin > 0.0) {
        return ConditionCheck {
            lbar,
            kappa,
            sigma_margin: Some(sigma_margin),
            mu_margins: vec![f64::NEG_INFINITY; design.n()],
            lambda_margin: f64::NEG_INFINITY,
            pass: false,
        };
    }
    let mu_margins: Vec<f64> = (0..design.n())
        .map(|i| {
            design.mus[i].powi(2)
                - 2.0 * nf * l2 * (1.0 + 1.0 / kappa) * design.norms_sq[i] * design.gs_sq(i)
                    / sigma_margin
        })
        .collect();
    let lambda_margin = design.lambda_next.powi(2)
        - l2 * (1.0 + kappa * nf) * (1.0 + 2.0 * nf * design.weighted_gs_sq() / sigma_margin);
    let pass = kappa > 0.0 && lambda_margin > 0.0 && mu_margins.iter().all(|&m| m > 0.0);
    ConditionCheck {
        lbar,
        kappa,
        sigma_margin: Some(sigma_margin),
        mu_margins,
        lambda_margin,
        pass,
    }
}

/// Log-spaced grid on `[KAPPA_MIN, KAPPA_MAX]`.
pub fn kappa_grid(points: usize) -> Vec<f64> {
    let (lo, hi) = (KAPPA_MIN.ln(), KAPPA_MAX.ln());
    (0..points)
        .map(|k| (lo + (hi - lo) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

/// `10^(-ZETA_DECADES (1 - k / (UNIT_POINTS + 1)))` for k = 1..=UNIT_POINTS,
/// increasing and strictly inside (0, 1).
pub fn zeta_grid() -> Vec<f64> {
    (1..=UNIT_POINTS)
        .map(|k| 10f64.powf(-ZETA_DECADES * (1.0 - k as f64 / (UNIT_POINTS + 1) as f64)))
        .collect()
}

/// `k / (UNIT_POINTS + 1)` for k = 1..=UNIT_POINTS, all strictly inside (0, 1).
pub fn unit_grid() -> Vec<f64> {
    (1..=UNIT_POINTS)
        .map(|k| k as f64 / (UNIT_POINTS + 1) as f64)
        .collect()
}

/// First kappa on the default grid at which the conditions for `kind` hold
/// with margin.
pub fn find_kappa(design: &SemilinearDesign, lbar: f64, kind: ControllerKind) -> Option<f64> {
    kappa_grid(KAPPA_POINTS).into_iter().find(|&kappa| {
        let c = match kind {
            ControllerKind::Nonlinear => check_cancelling(design, lbar, kappa),
            ControllerKind::Linear => check_dominating(design, lbar, kappa),
        };
        c.pass && c.min_margin() > SEARCH_MARGIN
    })
}

/// Lyapunov parameters `V = R/2 |Pw|^2 + gamma/2 |w - Pw|^2 + 1/2 sum omega_i y_i^2`
/// produced by the constructive proofs, with the resulting dissipation rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemilinearParams {
    pub controller: ControllerKind,
    pub lbar: f64,
    pub kappa: f64,
    /// zeta for the cancelling controller, a for the dominating one.
    pub search_value: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub r: f64,
    pub omegas: Vec<f64>,
    /// Coefficients of `|Pw|^2`, `|w - Pw|^2` and `y_i^2` in the dissipation bound.
    pub coef_head: f64,
    pub coef_tail: f64,
    pub coef_y: Vec<f64>,
    /// `min` of the coefficients: `Vdot <= -theta (|w|^2 + |y|^2)`.
    pub theta: f64,
}

fn theta_of(head: f64, tail: f64, y: &[f64]) -> f64 {
    y.iter().copied().fold(head.min(tail), f64::min)
}

fn h_zeta(zeta: f64, lbar: f64, kappa: f64, nf: f64) -> f64 {
    2.0 * zeta / ((1.0 - zeta) * (1.0 + lbar * lbar) * (1.0 + kappa * nf))
}

/// Left-hand sides of the two zeta conditions for the cancelling controller.
pub fn zeta_margins(design: &SemilinearDesign, lbar: f64, kappa: f64, zeta: f64) -> (Vec<f64>, f64) {
    let nf = design.nf();
    let l2 = lbar * lbar;
    let h = h_zeta(zeta, lbar, kappa, nf);
    let mu = (0..design.n())
        .map(|i| {
            design.mus[i].powi(2) / (h * design.gs_sq(i) + 2.0 * design.g_sq(i))
                - nf * l2 * (1.0 + 1.0 / kappa) * design.norms_sq[i]
        })
        .collect();
    let lam = design.lambda_next.powi(2)
        / (1.0 + nf * h * design.weighted_gs_sq() + 2.0 * nf * design.weighted_g_sq())
        - l2 * (1.0 + kappa * nf);
    (mu, lam)
}

/// Parameters for the cancelling controller at a given `(lbar, kappa, zeta)`.
pub fn params_cancelling(
    design: &SemilinearDesign,
    lbar: f64,
    kappa: f64,
    zeta: f64,
) -> SemilinearParams {
    let n = design.n();
    let nf = design.nf();
    let l2 = lbar * lbar;
    let sigma = design.sigma;
    let r = nf * (1.0 + l2) * (1.0 + kappa * nf) / sigma;
    let beta = (1.0 - zeta) * sigma * r / nf;
    let epsilon = 1.0 / (2.0 * nf * zeta);
    let s_i: Vec<f64> = (0..n)
        .map(|i| design.gs_sq(i) / beta + design.g_sq(i) / zeta)
        .collect();
    let s_total: f64 = (0..n).map(|i| design.norms_sq[i] * s_i[i]).sum();
    let gamma = design.lambda_next / (epsilon + s_total);
    let omegas: Vec<f64> = (0..n).map(|i| design.mus[i] / s_i[i]).collect();

    // sigma R - N beta, written without cancellation
    let coef_head = zeta * sigma * r - nf * zeta * l2 * (1.0 + kappa * nf);
    let coef_y: Vec<f64> = (0..n)
        .map(|i| {
            omegas[i] * design.mus[i]
                - 0.5 * omegas[i].powi(2) * s_i[i]
                - nf * zeta * l2 * (1.0 + 1.0 / kappa) * design.norms_sq[i]
        })
        .collect();
    let coef_tail = gamma * design.lambda_next
        - 0.5 * gamma * gamma * (epsilon + s_total)
        - nf * zeta * l2 * (1.0 + kappa * nf);
    SemilinearParams {
        controller: ControllerKind::Nonlinear,
        lbar,
        kappa,
        search_value: zeta,
        beta,
        epsilon,
        gamma,
        r,
        omegas,
        coef_head,
        coef_tail,
        theta: theta_of(coef_head, coef_tail, &coef_y),
        coef_y,
    }
}

/// The same coefficients written directly in terms of `zeta` and `h(zeta)`.
pub fn cancelling_closed_coefficients(
    design: &SemilinearDesign,
    lbar: f64,
    kappa: f64,
    zeta: f64,
) -> (f64, f64, Vec<f64>) {
    let nf = design.nf();
    let (mu, lam) = zeta_margins(design, lbar, kappa, zeta);
    (
        zeta * nf * (1.0 + kappa * nf),
        nf * zeta * lam,
        mu.into_iter().map(|m| zeta * m).collect(),
    )
}

pub fn select_params_cancelling(
    design: &SemilinearDesign,
    lbar: f64,
    kappa: f64,
) -> Result<SemilinearParams> {
    let zeta = zeta_grid()
        .into_iter()
        .find(|&z| {
            let (mu, lam) = zeta_margins(design, lbar, kappa, z);
            lam > SEARCH_MARGIN && mu.iter().all(|&m| m > SEARCH_MARGIN)
        })
        .ok_or(Error::NoAdmissibleZeta)?;
    Ok(params_cancelling(design, lbar, kappa, zeta))
}

/// Left-hand sides of the three `a` conditions for the dominating controller
/// (with the undefined epsilon set to zero).
pub fn a_margins(design: &SemilinearDesign, lbar: f64, kappa: f64, a: f64) -> (f64, Vec<f64>, f64) {
    let nf = design.nf();
    let l2 = lbar * lbar;
    let d = design.sigma.powi(2) - a - l2 * (1.0 + kappa * nf);
    if !(d > 0.0) {
        return (d, vec![f64::NEG_INFINITY; design.n()], f64::NEG_INFINITY);
    }
    let mu = (0..design.n())
        .map(|i| {
            design.mus[i].powi(2)
                - (1.0 + 1.0 / kappa) * 2.0 * nf * l2 * design.norms_sq[i] / d * design.gs_sq(i)
        })
        .collect();
    let lam = design.lambda_next.powi(2)
        - l2 * (1.0 + kappa * nf) * (1.0 + 2.0 * nf * design.weighted_gs_sq() / d);
    (d, mu, lam)
}

/// Parameters for the dominating controller at a given `(lbar, kappa, a)`.
pub fn params_dominating(design: &SemilinearDesign, lbar: f64, kappa: f64, a: f64) -> SemilinearParams {
    let n = design.n();
    let nf = design.nf();
    let l2 = lbar * lbar;
    let sigma = design.sigma;
    let epsilon = 0.0;
    let beta = (sigma * sigma - a - l2 * (1.0 + kappa * nf)) / (2.0 * nf);
    let t = design.weighted_gs_sq();
    let gamma = beta * design.lambda_next / (beta + t);
    let r = sigma;
    let omegas: Vec<f64> = (0..n)
        .map(|i| beta * design.mus[i] / (epsilon + design.gs_sq(i)))
        .collect();

    let coef_head = sigma * r - 0.5 * r * r - nf * beta - 0.5 * l2 * (1.0 + kappa * nf);
    let coef_tail = gamma * design.lambda_next
        - 0.5 * gamma * gamma
        - 0.5 * gamma * gamma * t / beta
        - 0.5 * l2 * (1.0 + kappa * nf);
    let coef_y: Vec<f64> = (0..n)
        .map(|i| {
            omegas[i] * design.mus[i]
                - omegas[i].powi(2) / (2.0 * beta) * (epsilon + design.gs_sq(i))
                - (1.0 + 1.0 / kappa) * 0.5 * l2 * design.norms_sq[i]
        })
        .collect();
    SemilinearParams {
        controller: ControllerKind::Linear,
        lbar,
        kappa,
        search_value: a,
        beta,
        epsilon,
        gamma,
        r,
        omegas,
        coef_head,
        coef_tail,
        theta: theta_of(coef_head, coef_tail, &coef_y),
        coef_y,
    }
}

pub fn select_params_dominating(
    design: &SemilinearDesign,
    lbar: f64,
    kappa: f64,
) -> Result<SemilinearParams> {
    let nf = design.nf();
    let room = (design.sigma.powi(2) - lbar * lbar * (1.0 + kappa * nf)).min(1.0);
    if !(room > 0.0) {
        return Err(Error::NoAdmissibleA);
    }
    let a = unit_grid()
        .into_iter()
        .map(|t| t * room)
        .find(|&a| {
            let (d, mu, lam) = a_margins(design, lbar, kappa, a);
            d > SEARCH_MARGIN && lam > SEARCH_MARGIN && mu.iter().all(|&m| m > SEARCH_MARGIN)
        })
        .ok_or(Error::NoAdmissibleA)?;
    Ok(params_dominating(design, lbar, kappa, a))
}

/// Semilinear Lyapunov functional, its derivative along the closed loop and
/// the bound `-theta (|w|^2 + |y|^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemilinearVdot {
    pub v: f64,
    pub vdot: f64,
    pub bound: f64,
}

impl SemilinearVdot {
    pub fn holds(&self) -> bool {
        self.vdot <= self.bound + 1e-6 * (1.0 + self.bound.abs())
    }
}

/// `V` from modal coefficients of w (all computed modes), y and parameters.
pub fn semilinear_v(c: &[f64], y: &[f64], params: &SemilinearParams, n: usize) -> f64 {
    let head: f64 = c[..n].iter().map(|v| v * v).sum();
    let tail: f64 = c[n..].iter().map(|v| v * v).sum();
    let ys: f64 = params.omegas.iter().zip(y).map(|(o, v)| o * v * v).sum();
    0.5 * params.r * head + 0.5 * params.gamma * tail + 0.5 * ys
}

pub fn eval_semilinear_v_and_vdot(
    w: &[f64],
    y: &[f64],
    params: &SemilinearParams,
    design: &SemilinearDesign,
    eigsys: &EigenSystem,
    shapes: &ShapeSet,
    f: &NonlinearitySpec,
) -> Result<SemilinearVdot> {
    let n = design.n();
    let k = eigsys.len();
    let (c, norm_sq) = crate::clf::modal_state(eigsys, w)?;
    let s = shapes.combine(y)?;
    let u: Vec<f64> = w.iter().zip(&s).map(|(a, b)| a + b).collect();
    let fc = eigsys.coefficients(&f.apply(&u), k)?;
    let v = eval_controller(params.controller, design, &c[..n], &fc[..n]);
    let coupling = shapes.coupling(eigsys, k)?;
    let cdot: Vec<f64> = (0..k)
        .map(|m| {
            let bv: f64 = (0..n).map(|i| coupling[(m, i)] * v[i]).sum();
            -eigsys.lambda(m + 1) * c[m] - bv + fc[m]
        })
        .collect();
    let head: f64 = (0..n).map(|m| c[m] * cdot[m]).sum();
    let tail: f64 = (n..k).map(|m| c[m] * cdot[m]).sum();
    let ys: f64 = (0..n)
        .map(|i| params.omegas[i] * y[i] * (-design.mus[i] * y[i] + v[i]))
        .sum();
    let vdot = params.r * head + params.gamma * tail + ys;
    let ysq: f64 = y.iter().map(|v| v * v).sum();
    Ok(SemilinearVdot {
        v: semilinear_v(&c, y, params, n),
        vdot,
        bound: -params.theta * (norm_sq + ysq),
    })
}

/// Rows `i, m, g, sigma_minus_lambda, state_gain, nonlinear_gain` with
/// `state_gain = g_im (sigma - lambda_m)` and `nonlinear_gain = g_im`.
pub fn write_coefficient_csv(design: &SemilinearDesign, mut out: impl Write) -> Result<()> {
    writeln!(out, "i,m,g,sigma_minus_lambda,state_gain,nonlinear_gain")?;
    for i in 0..design.n() {
        for m in 0..design.n() {
            let g = design.g[(i, m)];
            let s = design.sigma - design.lambdas[m];
            writeln!(out, "{},{},{},{},{},{}", i + 1, m + 1, g, s, g * s, g)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::reduced::build_reduced_model;
    use crate::spectral::{eigensolve, SLProblem};
    use std::f64::consts::{PI, SQRT_2};

    fn example33(sigma: f64) -> (EigenSystem, ShapeSet, SemilinearDesign) {
        let prob = SLProblem::dirichlet_constant(1.0, -5.0 * PI * PI);
        let sys = eigensolve(&prob, &Grid::uniform(2049).unwrap(), 32).unwrap();
        let shapes = ShapeSet::new(&prob, &sys, &[1.25 * PI * PI, 7.25 * PI * PI]).unwrap();
        let model = build_reduced_model(&sys, &shapes, 2).unwrap();
        let design = SemilinearDesign::new(&model, &shapes, sigma).unwrap();
        (sys, shapes, design)
    }

    #[test]
    fn g_inverts_b() {
        let (sys, shapes, design) = example33(1.0);
        let model = build_reduced_model(&sys, &shapes, 2).unwrap();
        let prod = &design.g * &model.b;
        assert!((prod + DMatrix::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn example_three_three_controller_coefficients() {
        let sigma = 1.3;
        let (_, _, design) = example33(sigma);
        // c_n in the example is int sin(n pi x) w dx = <phi_n, w> / sqrt2.
        let (c1, c2, f1, f2) = (0.3, -0.7, 0.11, 0.05);
        let v = eval_nonlinear_controller(&design, &[SQRT_2 * c1, SQRT_2 * c2], &[SQRT_2 * f1, SQRT_2 * f2]);
        let a = (sigma + 4.0 * PI * PI) * c1 + f1;
        let b = (sigma + PI * PI) * c2 + f2;
        let v1 = 63.0 * PI / 256.0 * (30.0 * a + 11.0 * b);
        let v2 = -495.0 * PI / 256.0 * (14.0 * a + 3.0 * b);
        assert!((v[0] - v1).abs() < 1e-6 * v1.abs());
        assert!((v[1] - v2).abs() < 1e-6 * v2.abs());
        let lin = eval_linear_controller(&design, &[SQRT_2 * c1, SQRT_2 * c2]);
        let nl0 = eval_nonlinear_controller(&design, &[SQRT_2 * c1, SQRT_2 * c2], &[0.0, 0.0]);
        assert_eq!(lin, nl0);
        assert_eq!(eval_linear_controller(&design, &[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn example_three_three_growth_bound() {
        let (_, _, design) = example33(1.0);
        let (a, b) = growth_bound_constants(&design).unwrap();
        assert!((a - 0.2493).abs() < 1e-3, "{a}");
        assert!((b - 0.19065).abs() < 1e-3, "{b}");
        let lmax = growth_bound_limit(&design).unwrap();
        assert!((lmax - 0.299).abs() / 0.299 < 3e-3, "{lmax}");
    }

    #[test]
    fn growth_bound_is_supremum_over_kappa() {
        let (_, _, design) = example33(1.0);
        let lmax = growth_bound_limit(&design).unwrap();
        let dense = kappa_grid(20_001);
        let feasible = |l: f64| dense.iter().any(|&k| check_cancelling(&design, l, k).pass);
        assert!(feasible(0.999 * lmax));
        assert!(!feasible(1.001 * lmax));
        // Default search grid resolves the bound to within 1 %.
        assert!(find_kappa(&design, 0.99 * lmax, ControllerKind::Nonlinear).is_some());
    }

    #[test]
    fn growth_bound_monotone_in_a() {
        let b = 0.3;
        let mut last = 0.0;
        for a in [0.01, 0.1, 1.0, 10.0, 1e3, 1e6] {
            let l = growth_bound_from_constants(a, b, 2).unwrap();
            assert!(l > last);
            last = l;
        }
        assert!(last < b.sqrt());
        assert!(growth_bound_from_constants(0.0, 0.0, 2).is_err());
    }

    #[test]
    fn condition_checks() {
        let (_, _, design) = example33(1.0);
        assert!(check_cancelling(&design, 0.0, 3.7).pass);
        assert!(find_kappa(&design, 0.29, ControllerKind::Nonlinear).is_some());
        assert!(find_kappa(&design, 0.31, ControllerKind::Nonlinear).is_none());
        assert!(check_dominating(&design, 0.0, 1.0).pass);
        let c = check_dominating(&design, 1.0, 1.0);
        assert!(!c.pass && c.sigma_margin.unwrap() <= 0.0);
    }

    #[test]
    fn dominating_conditions_are_stricter() {
        let (_, _, design) = example33(1.0);
        assert!(design.lambdas.iter().all(|&l| l < 0.0));
        let kappas = kappa_grid(KAPPA_POINTS);
        let mut strict = false;
        for k in 1..=35 {
            let l = 0.01 * k as f64;
            for &kappa in kappas.iter().step_by(16) {
                let a = check_cancelling(&design, l, kappa).pass;
                let b = check_dominating(&design, l, kappa).pass;
                assert!(!b || a, "lbar {l}, kappa {kappa}");
                strict |= a && !b;
            }
        }
        assert!(strict);
    }

    #[test]
    fn cancelling_parameters() {
        let (_, _, design) = example33(1.0);
        let zero = select_params_cancelling(&design, 0.0, 1.0).unwrap();
        assert_eq!(zero.search_value, zeta_grid()[0]);
        let kappa = find_kappa(&design, 0.29, ControllerKind::Nonlinear).unwrap();
        let p = select_params_cancelling(&design, 0.29, kappa).unwrap();
        assert!(p.theta > 0.0);
        let (h, t, y) = cancelling_closed_coefficients(&design, 0.29, kappa, p.search_value);
        assert!((h - p.coef_head).abs() < 1e-9 * h.abs());
        assert!((t - p.coef_tail).abs() < 1e-9 * (1.0 + t.abs()));
        for (a, b) in y.iter().zip(&p.coef_y) {
            assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
        assert!(zeta_grid().iter().all(|&z| z > 0.0 && z < 0.99));
    }

    #[test]
    fn dominating_parameters() {
        let (_, _, design) = example33(30.0);
        let p = select_params_dominating(&design, 0.0, 1.0).unwrap();
        assert_eq!(p.r, 30.0);
        assert_eq!(p.search_value, 1.0 / 65.0);
        let beta = (900.0 - p.search_value) / 4.0;
        assert!((p.beta - beta).abs() < 1e-12);
        assert!((p.coef_head - p.search_value / 2.0).abs() < 1e-9);
        assert!(p.theta > 0.0);
        let kappa = find_kappa(&design, 0.05, ControllerKind::Linear).unwrap();
        let q = select_params_dominating(&design, 0.05, kappa).unwrap();
        assert!(q.beta > 0.0 && q.theta > 0.0);
    }

    #[test]
    fn nonlinearity_validation() {
        assert!(NonlinearitySpec::new(NonlinearityKind::SineType { amplitude: 0.29 }, 0.29).is_ok());
        assert!(NonlinearitySpec::new(NonlinearityKind::SineType { amplitude: 0.29 }, 0.2).is_err());
        assert!(NonlinearitySpec::new(
            NonlinearityKind::Saturation {
                slope: 0.5,
                level: 1.0
            },
            0.5
        )
        .is_ok());
        assert!(NonlinearitySpec::new(
            NonlinearityKind::UserTable {
                s: vec![-1.0, 0.0, 1.0],
                f: vec![-0.1, 0.1, 0.1]
            },
            1.0
        )
        .is_err());
        let t = NonlinearitySpec::new(
            NonlinearityKind::UserTable {
                s: vec![-1.0, 0.0, 2.0],
                f: vec![0.2, 0.0, 0.4],
            },
            0.2,
        )
        .unwrap();
        assert!((t.eval(1.0) - 0.2).abs() < 1e-15);
        assert_eq!(t.eval(-5.0), 0.2);
    }

    #[test]
    fn closed_loop_dissipation_on_random_states() {
        use rand::{Rng, SeedableRng};
        let (sys, shapes, design) = example33(1.0);
        let kappa = find_kappa(&design, 0.29, ControllerKind::Nonlinear).unwrap();
        let params = select_params_cancelling(&design, 0.29, kappa).unwrap();
        let f = NonlinearitySpec::new(NonlinearityKind::SineType { amplitude: 0.29 }, 0.29).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let coeffs: Vec<f64> = (1..=12)
                .map(|n| rng.gen_range(-1.0..1.0) / (n * n) as f64)
                .collect();
            let w = sys.synthesize(&coeffs);
            let y = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let r = eval_semilinear_v_and_vdot(&w, &y, &params, &design, &sys, &shapes, &f).unwrap();
            assert!(r.holds(), "{r:?}");
        }
        let zero = vec![0.0; sys.grid().len()];
        let z = eval_semilinear_v_and_vdot(&zero, &[0.0, 0.0], &params, &design, &sys, &shapes, &f)
            .unwrap();
        assert_eq!((z.v, z.vdot, z.bound), (0.0, 0.0, 0.0));
    }

    #[test]
    fn coefficient_csv_rows() {
        let (_, _, design) = example33(1.0);
        let mut buf = Vec::new();
        write_coefficient_csv(&design, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("i,m,g,sigma_minus_lambda,state_gain,nonlinear_gain\n"));
    }
}
