//! Design, certification and simulation driven by a [`RunConfig`], with the
//! files written for each run.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::artifact::{
    render_report, DesignArtifact, EigenSummary, FeedbackSummary, SemilinearArtifact,
    ShapeSummary, Verdict, TOOLKIT_VERSION,
};
use crate::clf::{build_feedback_kernels, select_clf_params, CLFParams, FeedbackLaw};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::reduced::{build_reduced_model, design_gains, GainDesign, ReducedModel};
use crate::semilinear::{
    check_cancelling, check_dominating, find_kappa, growth_bound_limit, select_params_cancelling,
    select_params_dominating, write_coefficient_csv, ControllerKind, SemilinearDesign,
};
use crate::shapes::{validate_mu_set, ShapeSet};
use crate::sim::{
    fit_decay_rate, simulate_linear, simulate_open_loop, simulate_semilinear, DecayFit,
    LinearLoop, SemilinearLoop, SimConfig, Trajectory,
};
use crate::spectral::{eigensolve, EigenSystem, SLProblem};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ConfigInvalid = 2,
    CertificationFailed = 3,
    Instability = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// Exit status for an error raised anywhere in the pipeline.
pub fn status_for(err: &Error) -> ExitStatus {
    match err {
        Error::Config(_)
        | Error::Io(_)
        | Error::InvalidGrid(_)
        | Error::InvalidProblem(_)
        | Error::NonPositiveCoefficient { .. }
        | Error::DimensionMismatch { .. }
        | Error::GridTooCoarse { .. }
        | Error::InvalidNonlinearity(_)
        | Error::InvalidSimConfig(_)
        | Error::MalformedCsv(_)
        | Error::RemainderTooLarge { .. }
        | Error::QuadratureBudgetExceeded { .. } => ExitStatus::ConfigInvalid,
        Error::Instability { .. } | Error::StepSizeTooLarge { .. } => ExitStatus::Instability,
        _ => ExitStatus::CertificationFailed,
    }
}

/// A failed run: its exit status, the cause, and whatever verdicts were reached.
#[derive(Debug)]
pub struct Failure {
    pub status: ExitStatus,
    pub error: Error,
    pub verdicts: Vec<Verdict>,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Self {
            status: status_for(&error),
            error,
            verdicts: Vec::new(),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

#[derive(Debug, Clone)]
pub struct SemilinearBundle {
    pub design: SemilinearDesign,
    pub artifact: SemilinearArtifact,
}

/// Everything computed for a design.
#[derive(Debug, Clone)]
pub struct DesignBundle {
    pub problem: SLProblem,
    pub eigsys: EigenSystem,
    pub shapes: ShapeSet,
    pub model: ReducedModel,
    pub gains: GainDesign,
    pub clf: CLFParams,
    pub law: FeedbackLaw,
    pub semilinear: Option<SemilinearBundle>,
    pub artifact: DesignArtifact,
}

impl DesignBundle {
    /// Certified, or uncertified with permission to proceed.
    pub fn may_simulate(&self) -> bool {
        self.artifact.certified
            || self
                .artifact
                .config
                .semilinear
                .as_ref()
                .is_some_and(|s| s.allow_uncertified)
    }
}

fn fail(verdicts: &mut Vec<Verdict>, name: &str, error: Error) -> Failure {
    verdicts.push(Verdict::failed(name, error.to_string()));
    Failure {
        status: status_for(&error),
        error,
        verdicts: std::mem::take(verdicts),
    }
}

pub fn build_design(cfg: &RunConfig) -> std::result::Result<DesignBundle, Failure> {
    cfg.validate()?;
    let problem = cfg.problem.to_problem()?;
    let grid = Grid::uniform(cfg.discretization.points)?;
    let eigsys = eigensolve(&problem, &grid, cfg.discretization.modes)?;
    let d = &cfg.design;
    let n = d.cutoff;
    let mut verdicts = Vec::new();

    let lambda_next = eigsys.lambda(n + 1);
    if !(lambda_next > 0.0) {
        return Err(fail(
            &mut verdicts,
            "tail_modes_stable",
            Error::CutoffNotStrictlyStable {
                cutoff: n,
                lambda: lambda_next,
            },
        ));
    }
    let mu_report = validate_mu_set(&d.mus, &eigsys);
    if !mu_report.pass {
        let bad = mu_report.verdicts.iter().find(|v| !v.pass).expect("a failing verdict");
        let err = if bad.positive {
            Error::MuCollidesWithSpectrum {
                mu: bad.mu,
                index: bad.nearest_index,
                lambda: bad.nearest_lambda,
            }
        } else {
            Error::MuNotPositive { mu: bad.mu }
        };
        return Err(fail(&mut verdicts, "shape_parameters", err));
    }
    let shapes = ShapeSet::new(&problem, &eigsys, &d.mus).map_err(|e| fail(&mut verdicts, "shape_parameters", e))?;
    let model = build_reduced_model(&eigsys, &shapes, n).map_err(|e| fail(&mut verdicts, "controllability", e))?;
    let gains = design_gains(&model, &d.sigma_targets(), d.gain_mode)
        .map_err(|e| fail(&mut verdicts, "gain_inequality", e))?;
    let clf = select_clf_params(&gains, &shapes, &eigsys, &d.ls())
        .map_err(|e| fail(&mut verdicts, "kernel_truncation", e))?;
    let law = build_feedback_kernels(&gains, &clf, &shapes, &eigsys)
        .map_err(|e| fail(&mut verdicts, "kernel_truncation", e))?;

    let semilinear = match &cfg.semilinear {
        None => None,
        Some(sc) => {
            let design = SemilinearDesign::new(&model, &shapes, d.sigma)
                .map_err(|e| fail(&mut verdicts, "controller_inverse", e))?;
            let lbar = sc.nonlinearity.lbar;
            let kappa = sc.kappa.or_else(|| find_kappa(&design, lbar, sc.controller));
            let check = kappa.map(|k| match sc.controller {
                ControllerKind::Nonlinear => check_cancelling(&design, lbar, k),
                ControllerKind::Linear => check_dominating(&design, lbar, k),
            });
            let params = match (kappa, &check) {
                (Some(k), Some(c)) if c.pass => match sc.controller {
                    ControllerKind::Nonlinear => select_params_cancelling(&design, lbar, k).ok(),
                    ControllerKind::Linear => select_params_dominating(&design, lbar, k).ok(),
                },
                _ => None,
            };
            let mut notes = Vec::new();
            if sc.controller == ControllerKind::Linear && params.is_some() {
                notes.push(
                    "dominating-controller parameters use epsilon = 0 in the omega_i formula".into(),
                );
            }
            let artifact = SemilinearArtifact {
                controller: sc.controller,
                design: design.clone(),
                lbar,
                growth_bound: growth_bound_limit(&design).ok(),
                kappa,
                check,
                params,
                notes,
            };
            Some(SemilinearBundle { design, artifact })
        }
    };

    let mut artifact = DesignArtifact {
        version: TOOLKIT_VERSION.to_string(),
        config: cfg.clone(),
        eigen: EigenSummary {
            grid_points: grid.len(),
            lambdas: eigsys.lambdas().to_vec(),
        },
        shapes: ShapeSummary {
            mus: shapes.mus().to_vec(),
            norms_sq: shapes.norms_sq().to_vec(),
            coupling: shapes.coupling(&eigsys, eigsys.len())?,
        },
        model: model.clone(),
        gains: gains.clone(),
        clf: clf.clone(),
        feedback: FeedbackSummary {
            kernel_coeffs: law.kernel_coeffs.clone(),
            y_gains: law.y_gains.clone(),
        },
        semilinear: semilinear.as_ref().map(|s| s.artifact.clone()),
        verdicts: Vec::new(),
        certified: false,
    };
    artifact.certify();
    Ok(DesignBundle {
        problem,
        eigsys,
        shapes,
        model,
        gains,
        clf,
        law,
        semilinear,
        artifact,
    })
}

/// Initial state: configured modal coefficients, or random smooth coefficients
/// `U(-1, 1) / n^2` on the first eight modes drawn from the seed.
pub fn initial_state(cfg: &RunConfig, eigsys: &EigenSystem) -> (Vec<f64>, Vec<f64>) {
    let coeffs = cfg.sim.w0.clone().unwrap_or_else(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        (1..=8)
            .map(|n| rng.gen_range(-1.0..1.0) / (n * n) as f64)
            .collect()
    });
    let y0 = cfg
        .sim
        .y0
        .clone()
        .unwrap_or_else(|| vec![0.0; cfg.design.mus.len()]);
    (eigsys.synthesize(&coeffs), y0)
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub trajectory: Trajectory,
    pub fit: Option<DecayFit>,
    pub open_loop: Option<Trajectory>,
}

/// Horizon for the uncontrolled run: long enough to grow by a factor 1e4 at
/// the rate of the most unstable mode, never longer than the closed-loop run.
fn open_loop_config(sim: &SimConfig, lambda1: f64) -> SimConfig {
    let mut cfg = sim.clone();
    if lambda1 < 0.0 {
        let t = (1e4f64).ln() / -lambda1;
        let t = t.max(100.0 * sim.dt).min(sim.t_final);
        cfg.t_final = (t / sim.dt).round() * sim.dt;
    }
    cfg.record_stride = sim.record_stride.min((cfg.steps() / 40).max(1));
    cfg
}

pub fn simulate(bundle: &DesignBundle, cfg: &RunConfig) -> Result<SimOutcome> {
    let sim = cfg.sim_config();
    let (w0, y0) = initial_state(cfg, &bundle.eigsys);
    let trajectory = match (&cfg.semilinear, &bundle.semilinear) {
        (Some(sc), Some(sb)) => {
            let lp = SemilinearLoop {
                eigsys: &bundle.eigsys,
                shapes: &bundle.shapes,
                design: &sb.design,
                params: sb.artifact.params.as_ref(),
                nonlinearity: &sc.nonlinearity,
                controller: sc.controller,
            };
            simulate_semilinear(&lp, &w0, &y0, &sim)?
        }
        _ => {
            let lp = LinearLoop {
                eigsys: &bundle.eigsys,
                shapes: &bundle.shapes,
                design: &bundle.gains,
                params: &bundle.clf,
                law: &bundle.law,
            };
            simulate_linear(&lp, &w0, &y0, &sim)?
        }
    };
    let fit = fit_decay_rate(&trajectory).ok();
    let open_loop = if cfg.sim.open_loop {
        let ocfg = open_loop_config(&sim, bundle.eigsys.lambda(1));
        Some(simulate_open_loop(
            &bundle.eigsys,
            &bundle.shapes,
            cfg.design.cutoff,
            &w0,
            &y0,
            &ocfg,
        )?)
    } else {
        None
    };
    Ok(SimOutcome {
        trajectory,
        fit,
        open_loop,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Design,
    Simulate,
}

#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub certified: bool,
    pub fit: Option<DecayFit>,
    pub files: Vec<PathBuf>,
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes)?;
    files.push(path);
    Ok(())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn write_design_outputs(bundle: &DesignBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    write_file(dir, "artifact.json", bundle.artifact.to_json()?.as_bytes(), &mut files)?;
    write_file(dir, "report.txt", render_report(&bundle.artifact).as_bytes(), &mut files)?;
    write_file(dir, "eigen.csv", &csv_bytes(|b| bundle.eigsys.write_csv(b))?, &mut files)?;
    write_file(dir, "shapes.csv", &csv_bytes(|b| bundle.shapes.write_csv(b))?, &mut files)?;
    write_file(dir, "kernels.csv", &csv_bytes(|b| bundle.law.write_csv(b))?, &mut files)?;
    if let Some(s) = &bundle.semilinear {
        write_file(
            dir,
            "controller_coefficients.csv",
            &csv_bytes(|b| write_coefficient_csv(&s.design, b))?,
            &mut files,
        )?;
    }
    Ok(files)
}

fn write_failure_report(dir: &Path, cfg: &RunConfig, failure: &Failure) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut s = String::new();
    if let Some(name) = &cfg.name {
        s.push_str(&format!("design: {name}\n"));
    }
    s.push_str(&format!("toolkit version: {TOOLKIT_VERSION}\n\n"));
    for v in &failure.verdicts {
        s.push_str(&format!(
            "[{}] {:<34} {}\n",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        ));
    }
    s.push_str(&format!("\nerror: {}\ncertification: FAILED\n", failure.error));
    let path = dir.join("report.txt");
    fs::write(&path, s)?;
    Ok(path)
}

/// Runs the pipeline up to `stage` and writes all outputs under `out_dir`.
pub fn run(cfg: &RunConfig, out_dir: &Path, stage: Stage) -> std::result::Result<RunSummary, Failure> {
    let bundle = match build_design(cfg) {
        Ok(b) => b,
        Err(f) => {
            if f.status == ExitStatus::CertificationFailed {
                write_failure_report(out_dir, cfg, &f)?;
            }
            return Err(f);
        }
    };
    let mut files = write_design_outputs(&bundle, out_dir)?;
    if !bundle.may_simulate() {
        let failed: Vec<String> = bundle
            .artifact
            .verdicts
            .iter()
            .filter(|v| !v.pass)
            .map(|v| v.name.clone())
            .collect();
        return Err(Failure {
            status: ExitStatus::CertificationFailed,
            error: Error::Config(format!("certification failed: {}", failed.join(", "))),
            verdicts: bundle.artifact.verdicts.clone(),
        });
    }
    let mut fit = None;
    if stage == Stage::Simulate && cfg.sim.enabled {
        let out = simulate(&bundle, cfg)?;
        write_file(
            out_dir,
            "trajectory.csv",
            &csv_bytes(|b| out.trajectory.write_csv(b))?,
            &mut files,
        )?;
        if let Some(open) = &out.open_loop {
            write_file(out_dir, "open_loop.csv", &csv_bytes(|b| open.write_csv(b))?, &mut files)?;
        }
        let mut s = String::new();
        s.push_str(&format!(
            "certified: {}\nsamples: {}\n",
            out.trajectory.certified,
            out.trajectory.len()
        ));
        if let Some(f) = &out.fit {
            s.push_str(&format!(
                "fitted K: {}\nfitted decay rate: {}\nr squared: {}\n",
                f.k_bar, f.sigma_bar, f.r_squared
            ));
        }
        s.push_str(&format!("V non-increasing: {}\n", out.trajectory.v_non_increasing(1e-6)));
        s.push_str(&format!("energy identity defect: {:e}\n", out.trajectory.energy_defect));
        if let Some(open) = &out.open_loop {
            if let Ok(f) = fit_decay_rate(open) {
                s.push_str(&format!("open-loop fitted rate: {}\n", f.sigma_bar));
            }
        }
        write_file(out_dir, "simulation.txt", s.as_bytes(), &mut files)?;
        fit = out.fit;
    }
    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        certified: bundle.artifact.certified,
        fit,
        files,
    })
}
