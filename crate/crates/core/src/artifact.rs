//! Serialized design with its certification verdicts.
//!
//! Every verdict is recomputed from data stored in the artifact itself, so a
//! reloaded artifact can be re-certified without solving the eigenproblem again.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::clf::{tail_bound, CLFParams};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::reduced::{check_controllability, verify_gains, GainDesign, ReducedModel};
use crate::semilinear::{
    check_cancelling, check_dominating, params_cancelling, params_dominating, ControllerKind,
    SemilinearDesign, SemilinearParams, ConditionCheck,
};
use crate::shapes::ORTHOGONALITY_TOL;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

const GAP_TOL: f64 = 1e-6;
const RANK_TOL: f64 = 1e-10;
const INEQUALITY_TOL: f64 = 1e-9;
const INVERSE_TOL: f64 = 1e-10;
const MARGIN_MATCH: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    /// Slack of the checked inequality; absent when the check could not be evaluated.
    pub margin: Option<f64>,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, margin: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass: margin > 0.0,
            margin: Some(margin),
            detail: detail.into(),
        }
    }

    pub fn non_negative(name: &str, margin: f64, detail: impl Into<String>) -> Self {
        Self {
            pass: margin >= 0.0,
            ..Self::new(name, margin, detail)
        }
    }

    pub fn failed(name: &str, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass: false,
            margin: None,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSummary {
    pub grid_points: usize,
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSummary {
    pub mus: Vec<f64>,
    pub norms_sq: Vec<f64>,
    /// `<phi_n, varphi_i>` for every computed mode n.
    pub coupling: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSummary {
    pub kernel_coeffs: DMatrix<f64>,
    pub y_gains: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemilinearArtifact {
    pub controller: ControllerKind,
    pub design: SemilinearDesign,
    pub lbar: f64,
    /// Largest growth constant admitted by the cancelling controller.
    pub growth_bound: Option<f64>,
    pub kappa: Option<f64>,
    pub check: Option<ConditionCheck>,
    pub params: Option<SemilinearParams>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignArtifact {
    pub version: String,
    pub config: RunConfig,
    pub eigen: EigenSummary,
    pub shapes: ShapeSummary,
    pub model: ReducedModel,
    pub gains: GainDesign,
    pub clf: CLFParams,
    pub feedback: FeedbackSummary,
    pub semilinear: Option<SemilinearArtifact>,
    pub verdicts: Vec<Verdict>,
    pub certified: bool,
}

impl DesignArtifact {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("artifact: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Fills in verdicts and the overall flag from the stored design data.
    pub fn certify(&mut self) {
        self.verdicts = certify(self);
        self.certified = self.verdicts.iter().all(|v| v.pass);
    }
}

fn semilinear_params(s: &SemilinearArtifact) -> Option<SemilinearParams> {
    let p = s.params.as_ref()?;
    let kappa = s.kappa?;
    Some(match s.controller {
        ControllerKind::Nonlinear => params_cancelling(&s.design, s.lbar, kappa, p.search_value),
        ControllerKind::Linear => params_dominating(&s.design, s.lbar, kappa, p.search_value),
    })
}

/// All certification verdicts for the stored design.
pub fn certify(a: &DesignArtifact) -> Vec<Verdict> {
    let mut out = Vec::new();
    let n = a.model.n();
    let lambdas = &a.eigen.lambdas;

    let lambda_next = lambdas.get(n).copied().unwrap_or(f64::NAN);
    out.push(if lambda_next.is_finite() {
        Verdict::new(
            "tail_modes_stable",
            lambda_next,
            format!("lambda_{{N+1}} = {lambda_next}"),
        )
    } else {
        Verdict::failed("tail_modes_stable", "lambda_{N+1} not computed")
    });

    let mu_margin = a
        .shapes
        .mus
        .iter()
        .map(|&mu| {
            let gap = lambdas.iter().map(|l| (mu - l).abs()).fold(f64::INFINITY, f64::min);
            mu.min(gap - GAP_TOL * (1.0 + mu.abs()))
        })
        .fold(f64::INFINITY, f64::min);
    out.push(Verdict::new(
        "shape_parameters",
        mu_margin,
        "mu_i > 0 and off the spectrum",
    ));

    let ctrb = check_controllability(&a.model);
    let ratio = match (ctrb.singular_values.first(), ctrb.singular_values.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
        _ => 0.0,
    };
    out.push(Verdict::new(
        "controllability",
        ratio - RANK_TOL,
        format!("rank {} of {n}, sigma_min / sigma_max = {ratio:e}", ctrb.rank),
    ));

    out.push(
        match verify_gains(
            &a.model,
            a.gains.mode,
            a.gains.k.clone(),
            a.gains.r.clone(),
            a.gains.sigma,
        ) {
            Ok(g) => Verdict::new(
                "gain_inequality",
                INEQUALITY_TOL - g.inequality_margin,
                format!(
                    "lambda_max(RA + A^T R) + 2 sigma = {:e}, R spectrum [{}, {}]",
                    g.inequality_margin, g.c1, g.c2
                ),
            ),
            Err(e) => Verdict::failed("gain_inequality", e.to_string()),
        },
    );

    let clf = &a.clf;
    let positivity = clf.omegas.iter().copied().fold(clf.gamma, f64::min);
    out.push(Verdict::new(
        "clf_constants",
        positivity,
        format!("gamma = {}, omega = {:?}", clf.gamma, clf.omegas),
    ));

    let m = clf.m;
    let tail = if m < lambdas.len() && clf.ls.len() == a.shapes.coupling.ncols() {
        let rhs: f64 = clf
            .ls
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                if l == 0.0 {
                    0.0
                } else {
                    let beta: Vec<f64> = a.shapes.coupling.column(i).iter().copied().collect();
                    l * tail_bound(&beta, m)
                }
            })
            .sum::<f64>()
            * clf.gamma;
        let lhs = 4.0 * (lambdas[m] - clf.lambda_next);
        Verdict::non_negative(
            "kernel_truncation",
            lhs - rhs,
            format!("M = {m}, 4 (lambda_{{M+1}} - lambda_{{N+1}}) = {lhs}, tail term = {rhs}"),
        )
    } else {
        Verdict::failed("kernel_truncation", format!("M = {m} exceeds the computed modes"))
    };
    out.push(tail);

    if let Some(s) = &a.semilinear {
        let d = &s.design;
        let orth = ORTHOGONALITY_TOL - d.shape_orthogonality;
        out.push(Verdict::new(
            "shape_orthogonality",
            orth,
            format!("max |<varphi_i, varphi_k>| = {:e}", d.shape_orthogonality),
        ));
        let defect = (&d.g * &a.model.b + DMatrix::identity(n, n)).amax();
        out.push(Verdict::new(
            "controller_inverse",
            INVERSE_TOL - defect,
            format!("|g B + I|_max = {defect:e}"),
        ));
        let name = match s.controller {
            ControllerKind::Nonlinear => "cancelling_controller_conditions",
            ControllerKind::Linear => "dominating_controller_conditions",
        };
        out.push(match s.kappa {
            Some(kappa) => {
                let c = match s.controller {
                    ControllerKind::Nonlinear => check_cancelling(d, s.lbar, kappa),
                    ControllerKind::Linear => check_dominating(d, s.lbar, kappa),
                };
                Verdict::new(
                    name,
                    c.min_margin(),
                    format!("lbar = {}, kappa = {kappa}", s.lbar),
                )
            }
            None => Verdict::failed(
                name,
                format!("no kappa on the search grid admits lbar = {}", s.lbar),
            ),
        });
        out.push(match semilinear_params(s) {
            Some(p) => Verdict::new(
                "semilinear_dissipation",
                p.theta,
                format!("theta = {}, gamma = {}, R = {}", p.theta, p.gamma, p.r),
            ),
            None => Verdict::failed("semilinear_dissipation", "no admissible Lyapunov parameters"),
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReverifyReport {
    pub verdicts: Vec<Verdict>,
    pub mismatches: Vec<String>,
}

impl ReverifyReport {
    pub fn matches(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Recomputes the verdicts of a loaded artifact and compares them with the stored ones.
pub fn reverify(a: &DesignArtifact) -> ReverifyReport {
    let verdicts = certify(a);
    let mut mismatches = Vec::new();
    if verdicts.len() != a.verdicts.len() {
        mismatches.push(format!(
            "{} verdicts stored, {} recomputed",
            a.verdicts.len(),
            verdicts.len()
        ));
    }
    for (old, new) in a.verdicts.iter().zip(&verdicts) {
        let margin_ok = match (old.margin, new.margin) {
            (Some(x), Some(y)) => (x - y).abs() <= MARGIN_MATCH * x.abs().max(1.0),
            (None, None) => true,
            _ => false,
        };
        if old.name != new.name || old.pass != new.pass || !margin_ok {
            mismatches.push(format!(
                "{}: stored ({}, {:?}) vs recomputed ({}, {:?})",
                old.name, old.pass, old.margin, new.pass, new.margin
            ));
        }
    }
    ReverifyReport {
        verdicts,
        mismatches,
    }
}

/// Plain-text certification report.
pub fn render_report(a: &DesignArtifact) -> String {
    let mut s = String::new();
    if let Some(name) = &a.config.name {
        s.push_str(&format!("design: {name}\n"));
    }
    s.push_str(&format!("toolkit version: {}\n", a.version));
    s.push_str(&format!(
        "N = {}, j = {}, sigma = {}, gain mode = {:?}\n",
        a.model.n(),
        a.model.j(),
        a.gains.sigma,
        a.gains.mode
    ));
    s.push_str(&format!(
        "gamma = {}, M = {}, omega = {:?}\n",
        a.clf.gamma, a.clf.m, a.clf.omegas
    ));
    if let Some(sl) = &a.semilinear {
        s.push_str(&format!(
            "semilinear controller = {:?}, lbar = {}, kappa = {:?}, growth bound = {:?}\n",
            sl.controller, sl.lbar, sl.kappa, sl.growth_bound
        ));
        for note in &sl.notes {
            s.push_str(&format!("note: {note}\n"));
        }
    }
    s.push('\n');
    for v in &a.verdicts {
        let margin = v.margin.map_or("n/a".to_string(), |m| format!("{m:e}"));
        s.push_str(&format!(
            "[{}] {:<34} margin {:>14}  {}\n",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            margin,
            v.detail
        ));
    }
    s.push_str(&format!(
        "\ncertification: {}\n",
        if a.certified { "PASSED" } else { "FAILED" }
    ));
    s
}
