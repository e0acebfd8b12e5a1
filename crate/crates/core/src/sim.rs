//! Modal Galerkin simulation of the closed loops, trajectory recording and
//! exponential decay fitting.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::clf::{eval_feedback_modal, v_from_parts, CLFParams, FeedbackLaw};
use crate::error::{Error, Result};
use crate::reduced::GainDesign;
use crate::semilinear::{
    eval_controller, semilinear_v, ControllerKind, NonlinearitySpec, SemilinearDesign,
    SemilinearParams,
};
use crate::shapes::ShapeSet;
use crate::spectral::EigenSystem;

const GROWTH_LIMIT: f64 = 1e6;
const RK4_STABILITY: f64 = 2.78;
const W0_REMAINDER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    ExponentialMidpoint,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_modes: usize,
    pub dt: f64,
    pub t_final: f64,
    pub integrator: Integrator,
    pub record_stride: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_modes: 64,
            dt: 1e-4,
            t_final: 10.0,
            integrator: Integrator::ExponentialMidpoint,
            record_stride: 100,
        }
    }
}

impl SimConfig {
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self, kernel_modes: usize) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidSimConfig(format!("dt must be positive (got {})", self.dt)));
        }
        if !(self.t_final >= 100.0 * self.dt) {
            return Err(Error::InvalidSimConfig(format!(
                "t_final {} is shorter than 100 steps of {}",
                self.t_final, self.dt
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidSimConfig("record_stride must be >= 1".into()));
        }
        if self.n_modes <= kernel_modes {
            return Err(Error::InvalidSimConfig(format!(
                "n_modes {} must exceed the kernel truncation {}",
                self.n_modes, kernel_modes
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub w_coeffs: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub norm_w: Vec<f64>,
    pub norm_y: Vec<f64>,
    pub v_values: Vec<f64>,
    pub controls: Vec<Vec<f64>>,
    pub controls_bar: Vec<Vec<f64>>,
    /// Boundary value `U = sum y_i`.
    pub boundary: Vec<f64>,
    /// Number of leading modal coefficients written to CSV.
    pub csv_modes: usize,
    pub certified: bool,
    /// Largest relative defect of `|u|^2 = |w|^2 + 2 sum y_i <varphi_i, w> + sum |varphi_i|^2 y_i^2`.
    pub energy_defect: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn total_norm(&self, k: usize) -> f64 {
        self.norm_w[k] + self.norm_y[k]
    }

    /// `V(t_{k+1}) <= V(t_k) (1 + tol)` for every recorded k.
    pub fn v_non_increasing(&self, tol: f64) -> bool {
        self.v_values.windows(2).all(|p| p[1] <= p[0] * (1.0 + tol))
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let j = self.controls.first().map_or(0, Vec::len);
        let mut header = String::from("t,norm_w,norm_y,V,U");
        for i in 1..=j {
            header.push_str(&format!(",v_{i}"));
        }
        for i in 1..=j {
            header.push_str(&format!(",vbar_{i}"));
        }
        for n in 1..=self.csv_modes {
            header.push_str(&format!(",c_{n}"));
        }
        writeln!(out, "{header}")?;
        for k in 0..self.len() {
            let mut line = format!(
                "{},{},{},{},{}",
                self.times[k], self.norm_w[k], self.norm_y[k], self.v_values[k], self.boundary[k]
            );
            for v in self.controls[k].iter().chain(&self.controls_bar[k]) {
                line.push_str(&format!(",{v}"));
            }
            for c in &self.w_coeffs[k][..self.csv_modes] {
                line.push_str(&format!(",{c}"));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Closed-loop linear plant under the CLF feedback.
#[derive(Debug, Clone, Copy)]
pub struct LinearLoop<'a> {
    pub eigsys: &'a EigenSystem,
    pub shapes: &'a ShapeSet,
    pub design: &'a GainDesign,
    pub params: &'a CLFParams,
    pub law: &'a FeedbackLaw,
}

/// Closed-loop semilinear plant under the cancelling or dominating controller.
#[derive(Debug, Clone, Copy)]
pub struct SemilinearLoop<'a> {
    pub eigsys: &'a EigenSystem,
    pub shapes: &'a ShapeSet,
    pub design: &'a SemilinearDesign,
    /// Lyapunov parameters of a certified design; `None` marks the run uncertified.
    pub params: Option<&'a SemilinearParams>,
    pub nonlinearity: &'a NonlinearitySpec,
    pub controller: ControllerKind,
}

enum Control<'a> {
    Open,
    Linear(&'a LinearLoop<'a>),
    Semilinear(&'a SemilinearLoop<'a>),
}

struct Plant<'a> {
    eigsys: &'a EigenSystem,
    shapes: &'a ShapeSet,
    lambdas: Vec<f64>,
    mus: Vec<f64>,
    coupling: DMatrix<f64>,
    control: Control<'a>,
}

/// Controls and nonlinear forcing (length `n_modes`) at a modal state.
struct Eval {
    v: Vec<f64>,
    f: Option<Vec<f64>>,
}

impl Plant<'_> {
    fn n_modes(&self) -> usize {
        self.lambdas.len()
    }

    fn j(&self) -> usize {
        self.mus.len()
    }

    fn u_on_grid(&self, c: &[f64], y: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.eigsys.grid().len()];
        for (n, cn) in c.iter().enumerate() {
            for (ux, p) in u.iter_mut().zip(self.eigsys.phi(n + 1)) {
                *ux += cn * p;
            }
        }
        for (i, yi) in y.iter().enumerate() {
            for (ux, p) in u.iter_mut().zip(self.shapes.varphi(i + 1)) {
                *ux += yi * p;
            }
        }
        u
    }

    fn eval(&self, c: &[f64], y: &[f64]) -> Result<Eval> {
        match self.control {
            Control::Open => Ok(Eval {
                v: vec![0.0; self.j()],
                f: None,
            }),
            Control::Linear(lp) => Ok(Eval {
                v: eval_feedback_modal(lp.law, c, y),
                f: None,
            }),
            Control::Semilinear(sp) => {
                let n = sp.design.n();
                let f = if matches!(sp.nonlinearity.kind, crate::semilinear::NonlinearityKind::Zero) {
                    vec![0.0; self.n_modes()]
                } else {
                    let fu = sp.nonlinearity.apply(&self.u_on_grid(c, y));
                    self.eigsys.coefficients(&fu, self.n_modes())?
                };
                let v = eval_controller(sp.controller, sp.design, &c[..n], &f[..n]);
                Ok(Eval { v, f: Some(f) })
            }
        }
    }

    /// Off-diagonal part of the right-hand side.
    fn forcing(&self, c: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let e = self.eval(c, y)?;
        let mut nc: Vec<f64> = (0..self.n_modes())
            .map(|n| -(0..self.j()).map(|i| self.coupling[(n, i)] * e.v[i]).sum::<f64>())
            .collect();
        if let Some(f) = &e.f {
            for (a, b) in nc.iter_mut().zip(f) {
                *a += b;
            }
        }
        Ok((nc, e.v.clone(), e.v))
    }

    fn v_value(&self, c: &[f64], y: &[f64]) -> f64 {
        let norm_sq: f64 = c.iter().map(|a| a * a).sum();
        match self.control {
            Control::Linear(lp) => {
                let n = lp.params.cutoff;
                v_from_parts(&c[..n], norm_sq, y, lp.params, lp.design)
            }
            Control::Semilinear(SemilinearLoop {
                params: Some(p),
                design,
                ..
            }) => semilinear_v(c, y, p, design.n()),
            _ => 0.5 * (norm_sq + y.iter().map(|a| a * a).sum::<f64>()),
        }
    }
}

fn phi1(d: f64, dt: f64) -> f64 {
    if (d * dt).abs() < 1e-12 {
        dt
    } else {
        -(-d * dt).exp_m1() / d
    }
}

struct Stepper {
    decay_full: Vec<f64>,
    decay_half: Vec<f64>,
    phi_full: Vec<f64>,
    phi_half: Vec<f64>,
}

impl Stepper {
    fn new(diag: &[f64], dt: f64) -> Self {
        Self {
            decay_full: diag.iter().map(|d| (-d * dt).exp()).collect(),
            decay_half: diag.iter().map(|d| (-d * dt / 2.0).exp()).collect(),
            phi_full: diag.iter().map(|&d| phi1(d, dt)).collect(),
            phi_half: diag.iter().map(|&d| phi1(d, dt / 2.0)).collect(),
        }
    }
}

fn split(z: &[f64], k: usize) -> (&[f64], &[f64]) {
    z.split_at(k)
}

fn rhs_full(plant: &Plant, diag: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    let k = plant.n_modes();
    let (c, y) = split(z, k);
    let (nc, vy, _) = plant.forcing(c, y)?;
    Ok(z
        .iter()
        .zip(diag)
        .zip(nc.iter().chain(&vy))
        .map(|((zi, d), n)| -d * zi + n)
        .collect())
}

fn step_exponential(plant: &Plant, st: &Stepper, z: &[f64]) -> Result<Vec<f64>> {
    let k = plant.n_modes();
    let (c, y) = split(z, k);
    let (nc, vy, _) = plant.forcing(c, y)?;
    let half: Vec<f64> = z
        .iter()
        .zip(nc.iter().chain(&vy))
        .enumerate()
        .map(|(i, (zi, n))| st.decay_half[i] * zi + st.phi_half[i] * n)
        .collect();
    let (ch, yh) = split(&half, k);
    let (nc, vy, _) = plant.forcing(ch, yh)?;
    Ok(z
        .iter()
        .zip(nc.iter().chain(&vy))
        .enumerate()
        .map(|(i, (zi, n))| st.decay_full[i] * zi + st.phi_full[i] * n)
        .collect())
}

fn step_rk4(plant: &Plant, diag: &[f64], z: &[f64], dt: f64) -> Result<Vec<f64>> {
    let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + s * y).collect()
    };
    let k1 = rhs_full(plant, diag, z)?;
    let k2 = rhs_full(plant, diag, &axpy(z, dt / 2.0, &k1))?;
    let k3 = rhs_full(plant, diag, &axpy(z, dt / 2.0, &k2))?;
    let k4 = rhs_full(plant, diag, &axpy(z, dt, &k3))?;
    Ok((0..z.len())
        .map(|i| z[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn expand_initial(eigsys: &EigenSystem, w0: &[f64], n_modes: usize) -> Result<Vec<f64>> {
    let c = eigsys.coefficients(w0, n_modes)?;
    let norm_sq = eigsys.norm_sq(w0)?;
    let modal: f64 = c.iter().map(|a| a * a).sum();
    if norm_sq > 0.0 && norm_sq - modal > W0_REMAINDER_TOL * norm_sq {
        return Err(Error::RemainderTooLarge {
            ratio: (norm_sq - modal) / norm_sq,
        });
    }
    Ok(c)
}

fn run(
    plant: &Plant,
    w0: &[f64],
    y0: &[f64],
    cfg: &SimConfig,
    csv_modes: usize,
    certified: bool,
) -> Result<Trajectory> {
    let k = plant.n_modes();
    if y0.len() != plant.j() {
        return Err(Error::DimensionMismatch {
            expected: plant.j(),
            got: y0.len(),
        });
    }
    let diag: Vec<f64> = plant.lambdas.iter().chain(&plant.mus).copied().collect();
    if cfg.integrator == Integrator::Rk4 {
        let stiff = diag.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        if stiff * cfg.dt > RK4_STABILITY {
            return Err(Error::StepSizeTooLarge {
                product: stiff * cfg.dt,
            });
        }
    }
    let stepper = Stepper::new(&diag, cfg.dt);
    let mut z = expand_initial(plant.eigsys, w0, k)?;
    z.extend_from_slice(y0);

    let steps = cfg.steps();
    let mut traj = Trajectory {
        times: Vec::new(),
        w_coeffs: Vec::new(),
        y: Vec::new(),
        norm_w: Vec::new(),
        norm_y: Vec::new(),
        v_values: Vec::new(),
        controls: Vec::new(),
        controls_bar: Vec::new(),
        boundary: Vec::new(),
        csv_modes,
        certified,
        energy_defect: 0.0,
    };
    let norm_of = |z: &[f64]| -> (f64, f64) {
        let (c, y) = split(z, k);
        (
            c.iter().map(|a| a * a).sum::<f64>().sqrt(),
            y.iter().map(|a| a * a).sum::<f64>().sqrt(),
        )
    };
    let (w_init, y_init) = norm_of(&z);
    let limit = GROWTH_LIMIT * (w_init + y_init);

    for step in 0..=steps {
        let t = step as f64 * cfg.dt;
        let (nw, ny) = norm_of(&z);
        if !(nw + ny).is_finite() || nw + ny > limit {
            return Err(Error::Instability {
                t,
                norm: nw + ny,
                limit,
            });
        }
        if step % cfg.record_stride == 0 {
            record(plant, &z, t, nw, ny, &mut traj)?;
        }
        if step == steps {
            break;
        }
        z = match cfg.integrator {
            Integrator::ExponentialMidpoint => step_exponential(plant, &stepper, &z)?,
            Integrator::Rk4 => step_rk4(plant, &diag, &z, cfg.dt)?,
        };
    }
    Ok(traj)
}

fn record(plant: &Plant, z: &[f64], t: f64, nw: f64, ny: f64, traj: &mut Trajectory) -> Result<()> {
    let k = plant.n_modes();
    let (c, y) = split(z, k);
    let v = plant.eval(c, y)?.v;
    let vbar: Vec<f64> = v.iter().zip(y).zip(&plant.mus).map(|((v, y), m)| v - m * y).collect();

    let u = plant.u_on_grid(c, y);
    let u_sq = plant.eigsys.norm_sq(&u)?;
    let mut rhs = nw * nw;
    for i in 0..plant.j() {
        let cross: f64 = (0..k).map(|n| plant.coupling[(n, i)] * c[n]).sum();
        rhs += 2.0 * y[i] * cross + plant.shapes.norms_sq()[i] * y[i] * y[i];
    }
    if u_sq > 0.0 {
        traj.energy_defect = traj.energy_defect.max((u_sq - rhs).abs() / u_sq);
    }

    traj.times.push(t);
    traj.w_coeffs.push(c.to_vec());
    traj.y.push(y.to_vec());
    traj.norm_w.push(nw);
    traj.norm_y.push(ny);
    traj.v_values.push(plant.v_value(c, y));
    traj.boundary.push(y.iter().sum());
    traj.controls.push(v);
    traj.controls_bar.push(vbar);
    Ok(())
}

fn plant<'a>(
    eigsys: &'a EigenSystem,
    shapes: &'a ShapeSet,
    n_modes: usize,
    control: Control<'a>,
) -> Result<Plant<'a>> {
    Ok(Plant {
        eigsys,
        shapes,
        lambdas: eigsys.lambdas()[..n_modes].to_vec(),
        mus: shapes.mus().to_vec(),
        coupling: shapes.coupling(eigsys, n_modes)?,
        control,
    })
}

fn check_modes(eigsys: &EigenSystem, cfg: &SimConfig) -> Result<()> {
    if cfg.n_modes > eigsys.len() {
        return Err(Error::InvalidSimConfig(format!(
            "n_modes {} exceeds the {} computed eigenpairs",
            cfg.n_modes,
            eigsys.len()
        )));
    }
    Ok(())
}

pub fn simulate_linear(lp: &LinearLoop, w0: &[f64], y0: &[f64], cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate(lp.law.m())?;
    check_modes(lp.eigsys, cfg)?;
    let csv_modes = lp.params.cutoff.min(8);
    let p = plant(lp.eigsys, lp.shapes, cfg.n_modes, Control::Linear(lp))?;
    run(&p, w0, y0, cfg, csv_modes, true)
}

/// Same plant with `v = 0`.
pub fn simulate_open_loop(
    eigsys: &EigenSystem,
    shapes: &ShapeSet,
    cutoff: usize,
    w0: &[f64],
    y0: &[f64],
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate(0)?;
    check_modes(eigsys, cfg)?;
    let p = plant(eigsys, shapes, cfg.n_modes, Control::Open)?;
    run(&p, w0, y0, cfg, cutoff.min(8).min(cfg.n_modes), false)
}

pub fn simulate_semilinear(
    sp: &SemilinearLoop,
    w0: &[f64],
    y0: &[f64],
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate(sp.design.n())?;
    if cfg.n_modes > sp.eigsys.len() {
        return Err(Error::QuadratureBudgetExceeded {
            needed: cfg.n_modes as f64,
            budget: sp.eigsys.len() as f64,
        });
    }
    sp.nonlinearity.validate()?;
    let p = plant(sp.eigsys, sp.shapes, cfg.n_modes, Control::Semilinear(sp))?;
    run(&p, w0, y0, cfg, sp.design.n().min(8), sp.params.is_some())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub k_bar: f64,
    pub sigma_bar: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `log(|w| + |y|) = log K - sigma t` over the trailing
/// half of the samples.
pub fn fit_decay_rate(traj: &Trajectory) -> Result<DecayFit> {
    let n = traj.len();
    if n < 20 {
        return Err(Error::DegenerateTrajectory(format!("{n} samples, need at least 20")));
    }
    if (0..n).all(|k| traj.total_norm(k) == 0.0) {
        return Err(Error::DegenerateTrajectory("all norms are zero".into()));
    }
    let start = n / 2;
    let ts = &traj.times[start..];
    let ls: Vec<f64> = (start..n).map(|k| traj.total_norm(k).max(1e-300).ln()).collect();
    let m = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / m;
    let lm = ls.iter().sum::<f64>() / m;
    let sxx: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
    let sxy: f64 = ts.iter().zip(&ls).map(|(t, l)| (t - tm) * (l - lm)).sum();
    let syy: f64 = ls.iter().map(|l| (l - lm).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = lm - slope * tm;
    let ss_res: f64 = ts
        .iter()
        .zip(&ls)
        .map(|(t, l)| (l - intercept - slope * t).powi(2))
        .sum();
    let r_squared = if syy <= 1e-300 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(DecayFit {
        k_bar: intercept.exp(),
        sigma_bar: -slope,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clf::{build_feedback_kernels, select_clf_params};
    use crate::grid::Grid;
    use crate::reduced::{build_reduced_model, design_gains, GainMode};
    use crate::semilinear::{find_kappa, select_params_cancelling, NonlinearityKind};
    use crate::spectral::{eigensolve, SLProblem};
    use std::f64::consts::PI;

    fn synthetic(norms: impl Fn(f64) -> f64) -> Trajectory {
        let times: Vec<f64> = (0..100).map(|k| 0.05 * k as f64).collect();
        let n = times.len();
        Trajectory {
            norm_w: times.iter().map(|&t| norms(t)).collect(),
            norm_y: vec![0.0; n],
            times,
            w_coeffs: vec![vec![]; n],
            y: vec![vec![]; n],
            v_values: vec![0.0; n],
            controls: vec![vec![]; n],
            controls_bar: vec![vec![]; n],
            boundary: vec![0.0; n],
            csv_modes: 0,
            certified: false,
            energy_defect: 0.0,
        }
    }

    #[test]
    fn fit_exact_exponential() {
        let fit = fit_decay_rate(&synthetic(|t| 3.0 * (-2.0 * t).exp())).unwrap();
        assert!((fit.k_bar - 3.0).abs() < 1e-9);
        assert!((fit.sigma_bar - 2.0).abs() < 1e-12);
        assert!(fit.r_squared > 0.9999);
        let flat = fit_decay_rate(&synthetic(|_| 1.5)).unwrap();
        assert!(flat.sigma_bar.abs() < 1e-12);
        assert!(fit_decay_rate(&synthetic(|_| 0.0)).is_err());
    }

    #[test]
    fn phi1_limits() {
        assert_eq!(phi1(0.0, 0.1), 0.1);
        assert!((phi1(2.0, 0.1) - (1.0 - (-0.2f64).exp()) / 2.0).abs() < 1e-15);
    }

    struct Ex24 {
        sys: EigenSystem,
        shapes: ShapeSet,
        design: GainDesign,
        params: CLFParams,
        law: FeedbackLaw,
    }

    fn ex24() -> Ex24 {
        let (p, q) = (1.0, -2.0 * PI * PI);
        let prob = SLProblem::dirichlet_constant(p, q);
        let sys = eigensolve(&prob, &Grid::uniform(2049).unwrap(), 48).unwrap();
        let shapes = ShapeSet::new(&prob, &sys, &[6.25 * PI * PI + q]).unwrap();
        let model = build_reduced_model(&sys, &shapes, 1).unwrap();
        let design = design_gains(&model, &[1.0], GainMode::ClosedForm).unwrap();
        let params = select_clf_params(&design, &shapes, &sys, &[0.0]).unwrap();
        let law = build_feedback_kernels(&design, &params, &shapes, &sys).unwrap();
        Ex24 {
            sys,
            shapes,
            design,
            params,
            law,
        }
    }

    fn cfg(dt: f64, t_final: f64) -> SimConfig {
        SimConfig {
            n_modes: 32,
            dt,
            t_final,
            integrator: Integrator::ExponentialMidpoint,
            record_stride: 10,
        }
    }

    #[test]
    fn zero_state_stays_zero() {
        let e = ex24();
        let lp = LinearLoop {
            eigsys: &e.sys,
            shapes: &e.shapes,
            design: &e.design,
            params: &e.params,
            law: &e.law,
        };
        let zero = vec![0.0; e.sys.grid().len()];
        let traj = simulate_linear(&lp, &zero, &[0.0], &cfg(1e-3, 0.5)).unwrap();
        assert_eq!(traj.len(), 51);
        assert!(traj.norm_w.iter().chain(&traj.norm_y).all(|&v| v == 0.0));
    }

    #[test]
    fn linear_loop_decays_and_open_loop_grows() {
        let e = ex24();
        let lp = LinearLoop {
            eigsys: &e.sys,
            shapes: &e.shapes,
            design: &e.design,
            params: &e.params,
            law: &e.law,
        };
        let w0 = e.sys.phi(1).to_vec();
        let c = cfg(1e-3, 4.0);
        let traj = simulate_linear(&lp, &w0, &[0.0], &c).unwrap();
        let fit = fit_decay_rate(&traj).unwrap();
        assert!(fit.sigma_bar > 0.0 && fit.r_squared > 0.99, "{fit:?}");
        assert!(traj.v_non_increasing(1e-6));
        assert!(traj.energy_defect < 1e-6, "{}", traj.energy_defect);

        let open = simulate_open_loop(&e.sys, &e.shapes, 1, &w0, &[0.0], &cfg(1e-3, 1.0)).unwrap();
        let fit = fit_decay_rate(&open).unwrap();
        let rate = -fit.sigma_bar;
        assert!((rate - PI * PI).abs() < 0.05 * PI * PI, "{rate}");
    }

    #[test]
    fn integrators_agree() {
        let e = ex24();
        let lp = LinearLoop {
            eigsys: &e.sys,
            shapes: &e.shapes,
            design: &e.design,
            params: &e.params,
            law: &e.law,
        };
        let w0 = e.sys.phi(1).to_vec();
        let c = cfg(1e-4, 0.5);
        let a = simulate_linear(&lp, &w0, &[0.2], &c).unwrap();
        let mut c4 = c.clone();
        c4.integrator = Integrator::Rk4;
        c4.dt = 1e-5;
        c4.record_stride = 100;
        let b = simulate_linear(&lp, &w0, &[0.2], &c4).unwrap();
        let (x, y) = (a.norm_w.last().unwrap(), b.norm_w.last().unwrap());
        assert!((x - y).abs() < 1e-4 * y, "{x} {y}");

        c4.dt = 1e-2;
        c4.t_final = 2.0;
        assert!(matches!(
            simulate_linear(&lp, &w0, &[0.2], &c4),
            Err(Error::StepSizeTooLarge { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(cfg(1e-3, 0.05).validate(1).is_err());
        assert!(cfg(0.0, 1.0).validate(1).is_err());
        assert!(cfg(1e-3, 1.0).validate(32).is_err());
        assert!(cfg(1e-3, 1.0).validate(2).is_ok());
    }

    #[test]
    fn semilinear_zero_nonlinearity_and_cancellation() {
        let prob = SLProblem::dirichlet_constant(1.0, -5.0 * PI * PI);
        let sys = eigensolve(&prob, &Grid::uniform(2049).unwrap(), 48).unwrap();
        let shapes = ShapeSet::new(&prob, &sys, &[1.25 * PI * PI, 7.25 * PI * PI]).unwrap();
        let model = build_reduced_model(&sys, &shapes, 2).unwrap();
        let design = SemilinearDesign::new(&model, &shapes, 1.0).unwrap();
        let kappa = find_kappa(&design, 0.29, ControllerKind::Nonlinear).unwrap();
        let params = select_params_cancelling(&design, 0.29, kappa).unwrap();
        let f = NonlinearitySpec::new(NonlinearityKind::SineType { amplitude: 0.29 }, 0.29).unwrap();
        let sp = SemilinearLoop {
            eigsys: &sys,
            shapes: &shapes,
            design: &design,
            params: Some(&params),
            nonlinearity: &f,
            controller: ControllerKind::Nonlinear,
        };
        let w0 = sys.synthesize(&[0.5, -0.3, 0.2, 0.1]);
        let err = |dt: f64| {
            let traj = simulate_semilinear(&sp, &w0, &[0.1, -0.1], &cfg(dt, 0.5)).unwrap();
            assert!(traj.certified);
            let ratio = traj.w_coeffs.last().unwrap()[0] / traj.w_coeffs[0][0];
            (ratio - (-0.5f64).exp()).abs()
        };
        let (e1, e2) = (err(2e-3), err(1e-3));
        assert!(e1 < 1e-3 && (e1 / e2 - 4.0).abs() < 0.5, "{e1} {e2}");
        let c = cfg(1e-3, 1.0);
        let zero = NonlinearitySpec::zero();
        let lin = SemilinearLoop {
            nonlinearity: &zero,
            params: None,
            ..sp
        };
        let a = simulate_semilinear(&lin, &w0, &[0.1, -0.1], &c).unwrap();
        let b = simulate_semilinear(
            &SemilinearLoop {
                controller: ControllerKind::Linear,
                ..lin
            },
            &w0,
            &[0.1, -0.1],
            &c,
        )
        .unwrap();
        assert_eq!(a.w_coeffs, b.w_coeffs);
        assert!(!a.certified);
    }
}
