//! Control Lyapunov functional, its parameters, and the boundary feedback
//! kernels built from it.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::reduced::GainDesign;
use crate::shapes::ShapeSet;
use crate::spectral::EigenSystem;

pub const SAFETY: f64 = 2.0;
pub const M_MAX: usize = 512;
const REMAINDER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CLFParams {
    pub cutoff: usize,
    pub omegas: Vec<f64>,
    pub gamma: f64,
    pub sigma: f64,
    /// Kernel truncation index M.
    pub m: usize,
    pub ls: Vec<f64>,
    pub lambda_next: f64,
}

impl CLFParams {
    /// Lower and upper coercivity constants `min/max(c1|c2, gamma, omega_i)`.
    pub fn coercivity(&self, design: &GainDesign) -> (f64, f64) {
        let lo = self
            .omegas
            .iter()
            .fold(design.c1.min(self.gamma), |a, &b| a.min(b));
        let hi = self
            .omegas
            .iter()
            .fold(design.c2.max(self.gamma), |a, &b| a.max(b));
        (lo, hi)
    }

    /// Decay constant in the dissipation bound, `min(gamma lambda_{N+1}, sigma)`.
    pub fn dissipation_rate(&self) -> f64 {
        (self.gamma * self.lambda_next).min(self.sigma)
    }
}

/// Upper bound for `sum_{n > m} <phi_n, varphi>^2` from the computed
/// coefficients `beta[0..K]`, plus `C / K` for the modes beyond K, where
/// `C = max_{K/2 < n <= K} n^2 beta_n^2`.
pub fn tail_bound(beta: &[f64], m: usize) -> f64 {
    let k = beta.len();
    let head: f64 = beta[m.min(k)..].iter().map(|b| b * b).sum();
    let c = (k / 2 + 1..=k)
        .map(|n| (n as f64).powi(2) * beta[n - 1].powi(2))
        .fold(0.0, f64::max);
    head + c / k as f64
}

pub fn select_clf_params(
    design: &GainDesign,
    shapes: &ShapeSet,
    eigsys: &EigenSystem,
    ls: &[f64],
) -> Result<CLFParams> {
    let n = design.k.ncols();
    let j = shapes.len();
    if ls.len() != j || design.k.nrows() != j {
        return Err(Error::DimensionMismatch {
            expected: j,
            got: ls.len(),
        });
    }
    if ls.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::InvalidProblem("controller parameters L_i must be >= 0".into()));
    }
    let k_modes = eigsys.len();
    if n + 2 > k_modes {
        return Err(Error::CutoffExceedsComputedModes {
            cutoff: n + 2,
            computed: k_modes,
        });
    }
    let sigma = design.sigma;
    let lambda_next = eigsys.lambda(n + 1);
    let jf = j as f64;
    let omegas = (1..=j)
        .map(|i| {
            let k2 = design.k_norm(i).powi(2);
            let mu = shapes.mus()[i - 1];
            if k2 == 0.0 {
                sigma * mu
            } else {
                sigma * mu / (2.0 * SAFETY * jf * k2)
            }
        })
        .collect();
    let s: f64 = (1..=j)
        .map(|i| shapes.norms_sq()[i - 1] * design.k_norm(i).powi(2))
        .sum();
    let gamma = if s == 0.0 {
        sigma * lambda_next
    } else {
        sigma * lambda_next / (2.0 * SAFETY * jf * s)
    };

    let coupling = shapes.coupling(eigsys, k_modes)?;
    let betas: Vec<Vec<f64>> = (0..j)
        .map(|i| coupling.column(i).iter().copied().collect())
        .collect();
    let m_max = (k_modes - 1).min(M_MAX);
    let m = (n + 1..=m_max)
        .find(|&m| {
            let rhs: f64 = ls
                .iter()
                .zip(&betas)
                .map(|(l, b)| if *l == 0.0 { 0.0 } else { l * tail_bound(b, m) })
                .sum::<f64>()
                * gamma;
            4.0 * (eigsys.lambda(m + 1) - lambda_next) >= rhs
        })
        .ok_or(Error::TailBoundFailed { max: m_max })?;

    Ok(CLFParams {
        cutoff: n,
        omegas,
        gamma,
        sigma,
        m,
        ls: ls.to_vec(),
        lambda_next,
    })
}

/// Modal coefficients of `G w`.
pub fn apply_g(w_coeffs: &[f64], r: &DMatrix<f64>) -> Vec<f64> {
    (r * DVector::from_column_slice(w_coeffs)).iter().copied().collect()
}

pub fn eval_v(
    w: &[f64],
    y: &[f64],
    params: &CLFParams,
    design: &GainDesign,
    eigsys: &EigenSystem,
) -> Result<f64> {
    let c = eigsys.coefficients(w, params.cutoff)?;
    let norm_sq = eigsys.norm_sq(w)?;
    Ok(v_from_parts(&c, norm_sq, y, params, design))
}

/// V from the first-N coefficients and `||w||^2`.
pub fn v_from_parts(
    c: &[f64],
    norm_sq: f64,
    y: &[f64],
    params: &CLFParams,
    design: &GainDesign,
) -> f64 {
    let gc = apply_g(c, &design.r);
    let quad: f64 = c.iter().zip(&gc).map(|(a, b)| a * b).sum();
    let head: f64 = c.iter().map(|a| a * a).sum();
    let ys: f64 = params.omegas.iter().zip(y).map(|(o, v)| o * v * v).sum();
    0.5 * quad + 0.5 * params.gamma * (norm_sq - head) + 0.5 * ys
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackLaw {
    /// `j x M` modal coefficients of the kernels.
    pub kernel_coeffs: DMatrix<f64>,
    pub kernels: Vec<Vec<f64>>,
    /// `omega_i L_i`.
    pub y_gains: Vec<f64>,
    pub mus: Vec<f64>,
    grid: Grid,
    weight: Vec<f64>,
}

impl FeedbackLaw {
    pub fn from_coefficients(
        kernel_coeffs: DMatrix<f64>,
        y_gains: Vec<f64>,
        mus: Vec<f64>,
        eigsys: &EigenSystem,
    ) -> Result<Self> {
        if kernel_coeffs.ncols() > eigsys.len() {
            return Err(Error::KernelTruncationExceedsModes {
                m: kernel_coeffs.ncols(),
                computed: eigsys.len(),
            });
        }
        let kernels = kernel_coeffs
            .row_iter()
            .map(|row| eigsys.synthesize(&row.iter().copied().collect::<Vec<_>>()))
            .collect();
        Ok(Self {
            kernel_coeffs,
            kernels,
            y_gains,
            mus,
            grid: eigsys.grid().clone(),
            weight: eigsys.weight().to_vec(),
        })
    }

    pub fn j(&self) -> usize {
        self.kernels.len()
    }

    /// Kernel truncation index M.
    pub fn m(&self) -> usize {
        self.kernel_coeffs.ncols()
    }

    /// Columns `x, k_1, ..., k_j`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let mut header = String::from("x");
        for i in 1..=self.j() {
            header.push_str(&format!(",k_{i}"));
        }
        writeln!(out, "{header}")?;
        for (idx, x) in self.grid.x().iter().enumerate() {
            let mut line = format!("{x}");
            for k in &self.kernels {
                line.push_str(&format!(",{}", k[idx]));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

pub fn build_feedback_kernels(
    design: &GainDesign,
    params: &CLFParams,
    shapes: &ShapeSet,
    eigsys: &EigenSystem,
) -> Result<FeedbackLaw> {
    let m = params.m;
    if m > eigsys.len() {
        return Err(Error::KernelTruncationExceedsModes {
            m,
            computed: eigsys.len(),
        });
    }
    let n = params.cutoff;
    let j = shapes.len();
    let coupling = shapes.coupling(eigsys, m)?;
    let head = &design.r * coupling.rows(0, n);
    let mut coeffs = DMatrix::zeros(j, m);
    for i in 0..j {
        let l = params.ls[i];
        for col in 0..n {
            coeffs[(i, col)] = design.k[(i, col)] + l * head[(col, i)];
        }
        for col in n..m {
            coeffs[(i, col)] = params.gamma * l * coupling[(col, i)];
        }
    }
    let y_gains = params
        .omegas
        .iter()
        .zip(&params.ls)
        .map(|(o, l)| o * l)
        .collect();
    FeedbackLaw::from_coefficients(coeffs, y_gains, shapes.mus().to_vec(), eigsys)
}

/// `v_i = <k_i, w> - omega_i L_i y_i`.
pub fn eval_feedback(law: &FeedbackLaw, w: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != law.j() {
        return Err(Error::DimensionMismatch {
            expected: law.j(),
            got: y.len(),
        });
    }
    law.kernels
        .iter()
        .zip(&law.y_gains)
        .zip(y)
        .map(|((k, g), yi)| Ok(law.grid.weighted_dot(k, w, &law.weight)? - g * yi))
        .collect()
}

/// Same law from modal coefficients `c` (length >= M).
pub fn eval_feedback_modal(law: &FeedbackLaw, c: &[f64], y: &[f64]) -> Vec<f64> {
    let m = law.m();
    (0..law.j())
        .map(|i| {
            let s: f64 = (0..m).map(|n| law.kernel_coeffs[(i, n)] * c[n]).sum();
            s - law.y_gains[i] * y[i]
        })
        .collect()
}

/// The feedback written through G, the projection and the truncated shapes:
/// `v_i = sum K_in <phi_n, w> + L_i (<Gw, varphi_i> + gamma <w - Pw, varphi~_i> - omega_i y_i)`.
pub fn eval_feedback_projected(
    design: &GainDesign,
    params: &CLFParams,
    shapes: &ShapeSet,
    eigsys: &EigenSystem,
    w: &[f64],
    y: &[f64],
) -> Result<Vec<f64>> {
    let n = params.cutoff;
    let c = eigsys.coefficients(w, n)?;
    let gw = eigsys.synthesize(&apply_g(&c, &design.r));
    let pw = eigsys.synthesize(&c);
    let rem: Vec<f64> = w.iter().zip(&pw).map(|(a, b)| a - b).collect();
    (0..shapes.len())
        .map(|i| {
            let varphi = shapes.varphi(i + 1);
            let beta = eigsys.coefficients(varphi, params.m)?;
            let truncated = eigsys.synthesize(&beta);
            let kc: f64 = (0..n).map(|col| design.k[(i, col)] * c[col]).sum();
            let inner = eigsys.inner(&gw, varphi)? + params.gamma * eigsys.inner(&rem, &truncated)?
                - params.omegas[i] * y[i];
            Ok(kc + params.ls[i] * inner)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateDirection {
    ToW,
    ToU,
}

/// `w = u - sum varphi_i y_i` or the inverse.
pub fn transform_state(
    state: &[f64],
    y: &[f64],
    shapes: &ShapeSet,
    direction: StateDirection,
) -> Result<Vec<f64>> {
    shapes.grid().check_len(state)?;
    let s = shapes.combine(y)?;
    let sign = match direction {
        StateDirection::ToW => -1.0,
        StateDirection::ToU => 1.0,
    };
    Ok(state.iter().zip(&s).map(|(a, b)| a + sign * b).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputDirection {
    ToVbar,
    ToV,
}

/// `vbar_i = -mu_i y_i + v_i` or the inverse.
pub fn transform_input(
    v: &[f64],
    y: &[f64],
    mus: &[f64],
    direction: InputDirection,
) -> Result<Vec<f64>> {
    if v.len() != y.len() || v.len() != mus.len() {
        return Err(Error::DimensionMismatch {
            expected: mus.len(),
            got: v.len(),
        });
    }
    let sign = match direction {
        InputDirection::ToVbar => -1.0,
        InputDirection::ToV => 1.0,
    };
    Ok(v.iter()
        .zip(y)
        .zip(mus)
        .map(|((vi, yi), mu)| vi + sign * mu * yi)
        .collect())
}

/// `V` derivative along the modal closed loop of the computed modes and the
/// dissipation bound `-1/2 sum omega_i mu_i y_i^2 - min(gamma lambda_{N+1}, sigma)/2 ||w||^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VdotBound {
    pub vdot: f64,
    pub bound: f64,
}

impl VdotBound {
    pub fn holds(&self) -> bool {
        self.vdot <= self.bound + 1e-6 * (1.0 + self.bound.abs())
    }
}

/// Modal expansion of a state together with a representability check.
pub(crate) fn modal_state(eigsys: &EigenSystem, w: &[f64]) -> Result<(Vec<f64>, f64)> {
    let c = eigsys.coefficients(w, eigsys.len())?;
    let norm_sq = eigsys.norm_sq(w)?;
    let modal: f64 = c.iter().map(|a| a * a).sum();
    let rem = norm_sq - modal;
    if norm_sq > 0.0 && rem > REMAINDER_TOL * norm_sq {
        return Err(Error::RemainderTooLarge {
            ratio: rem / norm_sq,
        });
    }
    Ok((c, modal))
}

pub fn eval_vdot_bound(
    w: &[f64],
    y: &[f64],
    law: &FeedbackLaw,
    params: &CLFParams,
    design: &GainDesign,
    shapes: &ShapeSet,
    eigsys: &EigenSystem,
) -> Result<VdotBound> {
    let (c, norm_sq) = modal_state(eigsys, w)?;
    let v = eval_feedback_modal(law, &c, y);
    let coupling = shapes.coupling(eigsys, eigsys.len())?;
    Ok(vdot_modal(&c, norm_sq, y, &v, &coupling, params, design, eigsys.lambdas(), shapes.mus()))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn vdot_modal(
    c: &[f64],
    norm_sq: f64,
    y: &[f64],
    v: &[f64],
    coupling: &DMatrix<f64>,
    params: &CLFParams,
    design: &GainDesign,
    lambdas: &[f64],
    mus: &[f64],
) -> VdotBound {
    let n = params.cutoff;
    let cdot: Vec<f64> = c
        .iter()
        .enumerate()
        .map(|(k, ck)| {
            let bv: f64 = v.iter().enumerate().map(|(i, vi)| coupling[(k, i)] * vi).sum();
            -lambdas[k] * ck - bv
        })
        .collect();
    let rc = apply_g(&c[..n], &design.r);
    let head: f64 = rc.iter().zip(&cdot[..n]).map(|(a, b)| a * b).sum();
    let tail: f64 = c[n..].iter().zip(&cdot[n..]).map(|(a, b)| a * b).sum();
    let ys: f64 = (0..y.len())
        .map(|i| params.omegas[i] * y[i] * (-mus[i] * y[i] + v[i]))
        .sum();
    let vdot = head + params.gamma * tail + ys;
    let bound = -0.5
        * (0..y.len())
            .map(|i| params.omegas[i] * mus[i] * y[i] * y[i])
            .sum::<f64>()
        - 0.5 * params.dissipation_rate() * norm_sq;
    VdotBound { vdot, bound }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduced::{build_reduced_model, design_gains, GainMode};
    use crate::spectral::{eigensolve, SLProblem};
    use std::f64::consts::{PI, SQRT_2};

    struct Ex24 {
        sys: EigenSystem,
        shapes: ShapeSet,
        design: GainDesign,
        p: f64,
        q: f64,
        sigma: f64,
    }

    fn ex24() -> Ex24 {
        let (p, q, sigma) = (1.0, -2.0 * PI * PI, 1.0);
        let prob = SLProblem::dirichlet_constant(p, q);
        let sys = eigensolve(&prob, &Grid::uniform(2049).unwrap(), 48).unwrap();
        let shapes = ShapeSet::new(&prob, &sys, &[6.25 * p * PI * PI + q]).unwrap();
        let model = build_reduced_model(&sys, &shapes, 1).unwrap();
        let design = design_gains(&model, &[sigma], GainMode::ClosedForm).unwrap();
        Ex24 {
            sys,
            shapes,
            design,
            p,
            q,
            sigma,
        }
    }

    #[test]
    fn example_two_four_parameters_satisfy_inequalities() {
        let e = ex24();
        let params = select_clf_params(&e.design, &e.shapes, &e.sys, &[0.0]).unwrap();
        let (p, q, s) = (e.p, e.q, e.sigma);
        let kk = 441.0 * PI * PI * (s - p * PI * PI - q).powi(2);
        let w = params.omegas[0];
        let g = params.gamma;
        // Margin factor 2 on both inequalities.
        assert!(4.0 * s * (25.0 * p * PI * PI + 4.0 * q) >= 2.0 * kk * w * (1.0 - 1e-9));
        assert!(32.0 * s * (4.0 * p * PI * PI + q) >= 2.0 * kk * g * (1.0 - 1e-9));
        // The printed form drops q and is implied by the line above.
        assert!(128.0 * p * PI * PI * s >= kk * g);
        assert_eq!(params.m, 2);
    }

    fn beta_24(n: usize) -> f64 {
        let nf = n as f64;
        let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
        4.0 * SQRT_2 * sign * nf / (PI * (25.0 - 4.0 * nf * nf))
    }

    #[test]
    fn example_two_four_tail_condition() {
        let e = ex24();
        let big_l = 2.0e6;
        let params = select_clf_params(&e.design, &e.shapes, &e.sys, &[big_l]).unwrap();
        let closed_tail = |m: usize| (m + 1..200_000).map(|n| beta_24(n).powi(2)).sum::<f64>();
        let cond = |m: usize| {
            let lhs = e.p * PI.powi(4) * (((m + 1) * (m + 1)) as f64 - 4.0);
            let series: f64 = (m + 1..200_000)
                .map(|n| {
                    let nf = n as f64;
                    nf * nf / (25.0 - 4.0 * nf * nf).powi(2)
                })
                .sum();
            lhs >= 8.0 * params.gamma * big_l * series
        };
        assert!(params.m > 2);
        assert!(cond(params.m));
        let beta: Vec<f64> = e.shapes.coupling(&e.sys, e.sys.len()).unwrap().column(0).iter().copied().collect();
        for (n, b) in beta.iter().enumerate().take(10) {
            assert!((b - beta_24(n + 1)).abs() < 1e-9);
        }
        assert!(tail_bound(&beta, 3) >= closed_tail(3));
    }

    #[test]
    fn example_two_four_kernel() {
        let e = ex24();
        let l = 0.7;
        let mut params = select_clf_params(&e.design, &e.shapes, &e.sys, &[l]).unwrap();
        params.m = 6;
        let law = build_feedback_kernels(&e.design, &params, &e.shapes, &e.sys).unwrap();
        let (p, q, s, g) = (e.p, e.q, e.sigma, params.gamma);
        let k = |x: f64| {
            let mut v = -((21.0 * PI / 4.0) * (s - p * PI * PI - q) + 8.0 * l / (21.0 * PI))
                * (PI * x).sin();
            for n in 2..=6 {
                let nf = n as f64;
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                v += 8.0 * g * l / PI * sign * nf / (25.0 - 4.0 * nf * nf) * (nf * PI * x).sin();
            }
            v
        };
        let err = law.kernels[0]
            .iter()
            .zip(e.sys.grid().x())
            .map(|(a, &x)| (a - k(x)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-7, "{err}");
        let v = eval_feedback(&law, e.sys.phi(1), &[0.0]).unwrap();
        assert!((v[0] - law.kernel_coeffs[(0, 0)]).abs() < 1e-9);
    }

    #[test]
    fn zero_l_gives_reduced_model_kernel() {
        let e = ex24();
        let params = select_clf_params(&e.design, &e.shapes, &e.sys, &[0.0]).unwrap();
        let law = build_feedback_kernels(&e.design, &params, &e.shapes, &e.sys).unwrap();
        let reduced = e.sys.synthesize(&[e.design.k[(0, 0)]]);
        let err = law.kernels[0]
            .iter()
            .zip(&reduced)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-10);
        let w = e.sys.phi(1).to_vec();
        let v1 = eval_feedback(&law, &w, &[0.0]).unwrap();
        let v2 = eval_feedback(&law, &w, &[5.0]).unwrap();
        assert_eq!(v1, v2);
        let z = eval_feedback(&law, &vec![0.0; w.len()], &[0.0]).unwrap();
        assert_eq!(z, vec![0.0]);
    }

    #[test]
    fn apply_g_examples() {
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert_eq!(apply_g(&[1.0, 0.0], &r), vec![2.0, 1.0]);
        assert_eq!(apply_g(&[0.3, -0.4], &DMatrix::identity(2, 2)), vec![0.3, -0.4]);
        let (a, b) = ([0.2, -1.3], [0.7, 0.4]);
        let ga = apply_g(&a, &r);
        let gb = apply_g(&b, &r);
        let lhs: f64 = ga.iter().zip(&b).map(|(x, y)| x * y).sum();
        let rhs: f64 = gb.iter().zip(&a).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn v_examples() {
        let e = ex24();
        let params = select_clf_params(&e.design, &e.shapes, &e.sys, &[0.0]).unwrap();
        let zero = vec![0.0; e.sys.grid().len()];
        assert_eq!(eval_v(&zero, &[0.0], &params, &e.design, &e.sys).unwrap(), 0.0);
        let v = eval_v(e.sys.phi(1), &[0.0], &params, &e.design, &e.sys).unwrap();
        assert!((v - 0.5).abs() < 1e-10);
    }

    #[test]
    fn transforms_round_trip() {
        let e = ex24();
        let u = e.sys.grid().sample(|x| x * (1.0 - x));
        let w = transform_state(&u, &[0.4], &e.shapes, StateDirection::ToW).unwrap();
        let back = transform_state(&w, &[0.4], &e.shapes, StateDirection::ToU).unwrap();
        assert!(u.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-12));
        assert_eq!(transform_state(&u, &[0.0], &e.shapes, StateDirection::ToW).unwrap(), u);
        let mus = [2.0, 3.0];
        let vb = transform_input(&[1.0, -1.0], &[0.5, 0.25], &mus, InputDirection::ToVbar).unwrap();
        assert_eq!(vb, vec![0.0, -1.75]);
        let v = transform_input(&vb, &[0.5, 0.25], &mus, InputDirection::ToV).unwrap();
        assert_eq!(v, vec![1.0, -1.0]);
    }

    #[test]
    fn tail_only_states_dissipate_through_gamma() {
        let e = ex24();
        let params = select_clf_params(&e.design, &e.shapes, &e.sys, &[0.0]).unwrap();
        let mut law = build_feedback_kernels(&e.design, &params, &e.shapes, &e.sys).unwrap();
        law.kernel_coeffs.fill(0.0);
        let w = e.sys.synthesize(&[0.0, 0.3, -0.2, 0.1]);
        let res = eval_vdot_bound(&w, &[0.0], &law, &params, &e.design, &e.shapes, &e.sys).unwrap();
        let expected = -params.gamma
            * (2..=4)
                .map(|n| e.sys.lambda(n) * [0.3, -0.2, 0.1][n - 2] * [0.3f64, -0.2, 0.1][n - 2])
                .sum::<f64>();
        assert!((res.vdot - expected).abs() < 1e-10);
        assert!(res.vdot <= -params.gamma * e.sys.lambda(2) * 0.14 + 1e-12);
        let zero = vec![0.0; w.len()];
        let z = eval_vdot_bound(&zero, &[0.0], &law, &params, &e.design, &e.shapes, &e.sys)
            .unwrap();
        assert_eq!((z.vdot, z.bound), (0.0, 0.0));
    }

    #[test]
    fn rough_states_are_rejected() {
        let e = ex24();
        let params = select_clf_params(&e.design, &e.shapes, &e.sys, &[0.0]).unwrap();
        let law = build_feedback_kernels(&e.design, &params, &e.shapes, &e.sys).unwrap();
        let w = e.sys.grid().sample(|x| if x < 0.5 { 1.0 } else { 0.0 });
        assert!(matches!(
            eval_vdot_bound(&w, &[0.0], &law, &params, &e.design, &e.shapes, &e.sys),
            Err(Error::RemainderTooLarge { .. })
        ));
    }
}
