//! Published-versus-computed tables for the two worked examples.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use serde::Serialize;

use crate::clf::{build_feedback_kernels, select_clf_params};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::reduced::{build_reduced_model, design_gains, input_vector_closed_form, GainMode};
use crate::semilinear::{growth_bound_limit, SemilinearDesign};
use crate::shapes::ShapeSet;
use crate::spectral::{eigensolve, SLProblem};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproRow {
    pub quantity: String,
    pub published: f64,
    pub computed: f64,
    pub rel_err: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproReport {
    pub example: String,
    pub rows: Vec<ReproRow>,
}

impl ReproReport {
    fn push(&mut self, quantity: impl Into<String>, published: f64, computed: f64, tol: f64) {
        let rel_err = (computed - published).abs() / published.abs().max(1e-300);
        self.rows.push(ReproRow {
            quantity: quantity.into(),
            published,
            computed,
            rel_err,
            tol,
            pass: rel_err <= tol,
        });
    }

    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

impl fmt::Display for ReproReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "example {}", self.example)?;
        writeln!(
            f,
            "{:<28} {:>22} {:>22} {:>10} {:>8}  status",
            "quantity", "published", "computed", "rel err", "tol"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<28} {:>22.15e} {:>22.15e} {:>10.2e} {:>8.0e}  {}",
                r.quantity,
                r.published,
                r.computed,
                r.rel_err,
                r.tol,
                if r.pass { "ok" } else { "MISMATCH" }
            )?;
        }
        Ok(())
    }
}

pub fn reproduce(id: &str) -> Result<ReproReport> {
    match id {
        "2.4" => example_2_4(),
        "3.3" => example_3_3(),
        other => Err(Error::Config(format!(
            "unknown example id {other:?}; expected \"2.4\" or \"3.3\""
        ))),
    }
}

fn example_2_4() -> Result<ReproReport> {
    let (p, q, sigma, l) = (1.0, -2.0 * PI * PI, 1.0, 1.0);
    let prob = SLProblem::dirichlet_constant(p, q);
    let sys = eigensolve(&prob, &Grid::uniform(2049)?, 48)?;
    let mu = 6.25 * p * PI * PI + q;
    let shapes = ShapeSet::new(&prob, &sys, &[mu])?;
    let model = build_reduced_model(&sys, &shapes, 1)?;
    let gains = design_gains(&model, &[sigma], GainMode::ClosedForm)?;
    let params = select_clf_params(&gains, &shapes, &sys, &[l])?;
    let law = build_feedback_kernels(&gains, &params, &shapes, &sys)?;

    let mut rep = ReproReport {
        example: "2.4".into(),
        rows: Vec::new(),
    };
    for n in 1..=4 {
        let nf = n as f64;
        rep.push(format!("lambda_{n}"), p * nf * nf * PI * PI + q, sys.lambda(n), 1e-6);
    }
    rep.push("B", 4.0 * SQRT_2 / (21.0 * PI), model.b[(0, 0)], 1e-6);
    rep.push(
        "K",
        -21.0 * PI / (4.0 * SQRT_2) * (sigma - p * PI * PI - q),
        gains.k[(0, 0)],
        1e-6,
    );
    let g = params.gamma;
    let kernel = |x: f64| {
        let mut v = -((21.0 * PI / 4.0) * (sigma - p * PI * PI - q) + 8.0 * l / (21.0 * PI))
            * (PI * x).sin();
        for n in 2..=params.m {
            let nf = n as f64;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            v += 8.0 * g * l / PI * sign * nf / (25.0 - 4.0 * nf * nf) * (nf * PI * x).sin();
        }
        v
    };
    let grid = sys.grid();
    for x in [0.25, 0.5, 0.75] {
        let idx = ((x / grid.h()).round()) as usize;
        rep.push(format!("k({x})"), kernel(x), law.kernels[0][idx], 1e-6);
    }
    Ok(rep)
}

fn example_3_3() -> Result<ReproReport> {
    let prob = SLProblem::dirichlet_constant(1.0, -5.0 * PI * PI);
    let sys = eigensolve(&prob, &Grid::uniform(2049)?, 16)?;
    let mus = [1.25 * PI * PI, 7.25 * PI * PI];
    let shapes = ShapeSet::new(&prob, &sys, &mus)?;
    let model = build_reduced_model(&sys, &shapes, 2)?;
    let sigma = 1.0;
    let design = SemilinearDesign::new(&model, &shapes, sigma)?;

    let mut rep = ReproReport {
        example: "3.3".into(),
        rows: Vec::new(),
    };
    for n in 1..=8 {
        let nf = n as f64;
        rep.push(format!("lambda_{n}"), (nf * nf - 5.0) * PI * PI, sys.lambda(n), 1e-6);
    }
    let s = 4.0 * SQRT_2 / (3.0 * PI);
    let b = [[s / 7.0, s / 15.0], [-2.0 * s / 3.0, -2.0 * s / 11.0]];
    for (n, row) in b.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            rep.push(format!("B[{},{}]", n + 1, i + 1), v, model.b[(n, i)], 1e-6);
        }
    }
    for (i, &mu) in mus.iter().enumerate() {
        let closed = input_vector_closed_form(&prob, &sys, mu, 2)?;
        for n in 0..2 {
            rep.push(
                format!("B[{},{}] closed form", n + 1, i + 1),
                closed[n],
                model.b[(n, i)],
                1e-7,
            );
        }
    }
    let c = PI / (256.0 * SQRT_2);
    let g = [[1890.0 * c, 693.0 * c], [-6930.0 * c, -1485.0 * c]];
    for (i, row) in g.iter().enumerate() {
        for (m, &v) in row.iter().enumerate() {
            rep.push(format!("g[{},{}]", i + 1, m + 1), v, design.g[(i, m)], 1e-6);
        }
    }
    // Gains on int sin(n pi x) w dx, which is <phi_n, w> / sqrt 2.
    let published = [
        [63.0 * PI / 256.0 * 30.0, 63.0 * PI / 256.0 * 11.0],
        [-495.0 * PI / 256.0 * 14.0, -495.0 * PI / 256.0 * 3.0],
    ];
    for (i, row) in published.iter().enumerate() {
        for (m, &v) in row.iter().enumerate() {
            rep.push(
                format!("controller[{},{}]", i + 1, m + 1),
                v,
                SQRT_2 * design.g[(i, m)],
                1e-6,
            );
        }
    }
    rep.push("growth bound", 0.299, growth_bound_limit(&design)?, 3e-3);
    Ok(rep)
}
