//! TOML run configuration and the built-in example presets.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::reduced::GainMode;
use crate::semilinear::{ControllerKind, NonlinearityKind, NonlinearitySpec};
use crate::sim::{Integrator, SimConfig};
use crate::spectral::{Coefficient, SLProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub p: Coefficient,
    pub q: Coefficient,
    #[serde(default = "unit_weight")]
    pub r: Coefficient,
    /// `[b1, b2]` in `b1 f(0) + b2 f'(0) = 0`.
    pub left: [f64; 2],
    /// `[a1, a2]` in `a1 f(1) + a2 f'(1) = 0`.
    pub right: [f64; 2],
}

fn unit_weight() -> Coefficient {
    Coefficient::Constant(1.0)
}

impl ProblemConfig {
    pub fn to_problem(&self) -> Result<SLProblem> {
        SLProblem::new(
            self.p.clone(),
            self.q.clone(),
            self.r.clone(),
            (self.left[0], self.left[1]),
            (self.right[0], self.right[1]),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationConfig {
    /// Odd number of grid points.
    pub points: usize,
    /// Number of eigenpairs computed.
    pub modes: usize,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self {
            points: 4097,
            modes: 72,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    /// Number N of controlled modes.
    pub cutoff: usize,
    /// Shape-function parameters, one per input.
    pub mus: Vec<f64>,
    pub sigma: f64,
    /// Per-mode decay targets; all equal to `sigma` when omitted.
    #[serde(default)]
    pub sigma_targets: Option<Vec<f64>>,
    #[serde(default = "default_gain_mode")]
    pub gain_mode: GainMode,
    /// Controller parameters `L_i >= 0`; zeros when omitted.
    #[serde(default)]
    pub ls: Option<Vec<f64>>,
}

fn default_gain_mode() -> GainMode {
    GainMode::ClosedForm
}

impl DesignConfig {
    pub fn sigma_targets(&self) -> Vec<f64> {
        self.sigma_targets
            .clone()
            .unwrap_or_else(|| vec![self.sigma; self.cutoff])
    }

    pub fn ls(&self) -> Vec<f64> {
        self.ls.clone().unwrap_or_else(|| vec![0.0; self.mus.len()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemilinearConfig {
    pub controller: ControllerKind,
    pub nonlinearity: NonlinearitySpec,
    /// Fixed kappa; searched on the default grid when omitted.
    #[serde(default)]
    pub kappa: Option<f64>,
    /// Simulate even when the admissibility conditions fail.
    #[serde(default)]
    pub allow_uncertified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub enabled: bool,
    pub n_modes: usize,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub integrator: Integrator,
    pub record_stride: usize,
    /// Modal coefficients of the initial state `w0`; random smooth when omitted.
    pub w0: Option<Vec<f64>>,
    /// Initial actuator states; zeros when omitted.
    pub y0: Option<Vec<f64>>,
    /// Also simulate the uncontrolled plant from the same state.
    pub open_loop: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            enabled: true,
            n_modes: d.n_modes,
            dt: None,
            t_final: None,
            integrator: d.integrator,
            record_stride: d.record_stride,
            w0: None,
            y0: None,
            open_loop: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub discretization: DiscretizationConfig,
    pub design: DesignConfig,
    #[serde(default)]
    pub semilinear: Option<SemilinearConfig>,
    #[serde(default)]
    pub sim: SimSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.to_problem()?;
        Grid::uniform(self.discretization.points)?;
        let d = &self.design;
        let n = d.cutoff;
        let j = d.mus.len();
        if n == 0 {
            return Err(Error::Config("design.cutoff must be >= 1".into()));
        }
        if j == 0 {
            return Err(Error::Config("design.mus must not be empty".into()));
        }
        if !(d.sigma > 0.0) {
            return Err(Error::Config("design.sigma must be positive".into()));
        }
        if d.sigma_targets().len() != n {
            return Err(Error::Config(format!(
                "design.sigma_targets needs {n} entries"
            )));
        }
        if d.ls().len() != j {
            return Err(Error::Config(format!("design.ls needs {j} entries")));
        }
        if self.discretization.modes < n + 2 {
            return Err(Error::Config(format!(
                "discretization.modes must be at least cutoff + 2 = {}",
                n + 2
            )));
        }
        if let Some(s) = &self.semilinear {
            if j != n {
                return Err(Error::Config(format!(
                    "semilinear controllers need one input per controlled mode (N = {n}, j = {j})"
                )));
            }
            s.nonlinearity.validate()?;
            if let Some(k) = s.kappa {
                if !(k > 0.0) {
                    return Err(Error::Config("semilinear.kappa must be positive".into()));
                }
            }
        }
        let sim = &self.sim;
        if sim.n_modes > self.discretization.modes {
            return Err(Error::Config(format!(
                "sim.n_modes {} exceeds discretization.modes {}",
                sim.n_modes, self.discretization.modes
            )));
        }
        if let Some(w0) = &sim.w0 {
            if w0.len() > sim.n_modes {
                return Err(Error::Config("sim.w0 has more entries than sim.n_modes".into()));
            }
        }
        if let Some(y0) = &sim.y0 {
            if y0.len() != j {
                return Err(Error::Config(format!("sim.y0 needs {j} entries")));
            }
        }
        self.sim_config().validate(0)?;
        Ok(())
    }

    /// Simulation settings with defaults filled in: `dt = 1e-4` (1e-3 for
    /// semilinear runs) and `t_final = 5 / sigma`, or 10 s.
    pub fn sim_config(&self) -> SimConfig {
        let dt = self.sim.dt.unwrap_or(if self.semilinear.is_some() {
            1e-3
        } else {
            1e-4
        });
        let t_final = self.sim.t_final.unwrap_or_else(|| {
            let t = 5.0 / self.design.sigma;
            if t.is_finite() && t > 0.0 {
                t
            } else {
                10.0
            }
        });
        SimConfig {
            n_modes: self.sim.n_modes,
            dt,
            t_final,
            integrator: self.sim.integrator,
            record_stride: self.sim.record_stride,
        }
    }
}

pub const PRESET_IDS: [&str; 2] = ["2.4", "3.3"];

/// Reaction-diffusion plant with Dirichlet actuation, p = 1, q = -2 pi^2.
pub fn preset_example_2_4() -> RunConfig {
    let q = -2.0 * PI * PI;
    RunConfig {
        name: Some("example-2.4".into()),
        seed: 1,
        out_dir: None,
        problem: ProblemConfig {
            p: Coefficient::Constant(1.0),
            q: Coefficient::Constant(q),
            r: unit_weight(),
            left: [1.0, 0.0],
            right: [1.0, 0.0],
        },
        discretization: DiscretizationConfig::default(),
        design: DesignConfig {
            cutoff: 1,
            mus: vec![6.25 * PI * PI + q],
            sigma: 1.0,
            sigma_targets: None,
            gain_mode: GainMode::ClosedForm,
            ls: Some(vec![1.0]),
        },
        semilinear: None,
        sim: SimSection {
            dt: Some(1e-3),
            t_final: Some(5.0),
            record_stride: 10,
            w0: Some(vec![1.0, 0.5]),
            y0: Some(vec![0.3]),
            open_loop: true,
            ..SimSection::default()
        },
    }
}

/// Semilinear plant `u_t = u_xx + 5 pi^2 u + F(u)` with two inputs and
/// `f(s) = 0.29 sin(s)`.
pub fn preset_example_3_3() -> RunConfig {
    RunConfig {
        name: Some("example-3.3".into()),
        seed: 1,
        out_dir: None,
        problem: ProblemConfig {
            p: Coefficient::Constant(1.0),
            q: Coefficient::Constant(-5.0 * PI * PI),
            r: unit_weight(),
            left: [1.0, 0.0],
            right: [1.0, 0.0],
        },
        discretization: DiscretizationConfig::default(),
        design: DesignConfig {
            cutoff: 2,
            mus: vec![1.25 * PI * PI, 7.25 * PI * PI],
            sigma: 1.0,
            sigma_targets: None,
            gain_mode: GainMode::ClosedForm,
            ls: None,
        },
        semilinear: Some(SemilinearConfig {
            controller: ControllerKind::Nonlinear,
            nonlinearity: NonlinearitySpec {
                kind: NonlinearityKind::SineType { amplitude: 0.29 },
                lbar: 0.29,
            },
            kappa: None,
            allow_uncertified: false,
        }),
        sim: SimSection {
            dt: Some(1e-3),
            t_final: Some(8.0),
            record_stride: 20,
            ..SimSection::default()
        },
    }
}

pub fn preset(id: &str) -> Result<RunConfig> {
    match id {
        "2.4" => Ok(preset_example_2_4()),
        "3.3" => Ok(preset_example_3_3()),
        other => Err(Error::Config(format!(
            "unknown example id {other:?}; expected one of {PRESET_IDS:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for id in PRESET_IDS {
            let cfg = preset(id).unwrap();
            cfg.validate().unwrap();
            let text = cfg.to_toml().unwrap();
            assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        }
        assert!(preset("9.9").is_err());
    }

    #[test]
    fn minimal_config() {
        let text = r#"
            [problem]
            p = { constant = 1.0 }
            q = { polynomial = [-20.0, 0.0, 1.0] }
            left = [1.0, 0.0]
            right = [0.6, 0.8]

            [design]
            cutoff = 1
            mus = [30.0]
            sigma = 2.0
        "#;
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.design.ls(), vec![0.0]);
        assert_eq!(cfg.design.gain_mode, GainMode::ClosedForm);
        assert_eq!(cfg.sim_config().dt, 1e-4);
        assert_eq!(cfg.sim_config().t_final, 2.5);
    }

    #[test]
    fn invalid_configs() {
        let base = preset_example_2_4();
        let mut c = base.clone();
        c.problem.right = [0.5, 0.5];
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.design.cutoff = 0;
        assert!(c.validate().is_err());
        let mut c = preset_example_3_3();
        c.design.mus.pop();
        assert!(c.validate().is_err());
        assert!(RunConfig::from_toml("[problem]\nbogus = 1").is_err());
        let mut c = base;
        c.sim.y0 = Some(vec![0.0, 0.0]);
        assert!(c.validate().is_err());
    }
}
