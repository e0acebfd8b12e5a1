use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use clf_core::artifact::{render_report, reverify, DesignArtifact};
use clf_core::config::{preset, RunConfig};
use clf_core::export::{downsample_csv, export_plotdata, DEFAULT_MAX_ROWS};
use clf_core::pipeline::{run, status_for, ExitStatus, Failure, Stage};
use clf_core::reproduce::reproduce;
use clf_core::Error;

#[derive(Parser)]
#[command(name = "clfkit", version, about = "Boundary feedback design, certification and simulation for 1-D parabolic PDEs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for randomized initial states.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of simulated modes.
    #[arg(long, global = true)]
    modes: Option<usize>,
    /// Simulation time step.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[arg(long, env = "CLF_OUT_DIR", hide = true)]
    env_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute and certify a design, writing the artifact and report.
    Design {
        /// Use a built-in example instead of --config.
        #[arg(long, value_name = "ID")]
        example: Option<String>,
    },
    /// Certify a configuration, or re-verify a saved artifact.
    Check {
        #[arg(long, value_name = "ID")]
        example: Option<String>,
        #[arg(long, value_name = "PATH", conflicts_with = "example")]
        artifact: Option<PathBuf>,
    },
    /// Design, certify and simulate.
    Simulate {
        #[arg(long, value_name = "ID")]
        example: Option<String>,
    },
    /// Compare computed values with the published ones for an example.
    Reproduce {
        /// "2.4" or "3.3".
        id: String,
    },
    /// Downsample a trajectory CSV for plotting.
    Export {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long, conflicts_with = "max_rows")]
        stride: Option<usize>,
        #[arg(long)]
        max_rows: Option<usize>,
    },
}

struct Fail(ExitStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_for(&e), e.to_string())
    }
}

impl From<Failure> for Fail {
    fn from(f: Failure) -> Self {
        Fail(f.status, f.error.to_string())
    }
}

impl Common {
    fn load(&self, example: Option<&str>) -> Result<RunConfig, Fail> {
        let mut cfg = match (example, &self.config) {
            (Some(id), None) => preset(id)?,
            (None, Some(path)) => RunConfig::load(path)?,
            (Some(_), Some(_)) => {
                return Err(Fail(ExitStatus::ConfigInvalid, "use either --example or --config".into()))
            }
            (None, None) => {
                return Err(Fail(ExitStatus::ConfigInvalid, "--config or --example is required".into()))
            }
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(m) = self.modes {
            cfg.sim.n_modes = m;
            cfg.discretization.modes = cfg.discretization.modes.max(m);
        }
        if let Some(dt) = self.dt {
            cfg.sim.dt = Some(dt);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg: Option<&RunConfig>) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.and_then(|c| c.out_dir.clone()))
            .or_else(|| self.env_out.clone())
            .unwrap_or_else(|| PathBuf::from("clf-out"))
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

fn run_stage(common: &Common, example: Option<&str>, stage: Stage) -> Result<(), Fail> {
    let cfg = common.load(example)?;
    let out = common.out_dir(Some(&cfg));
    match run(&cfg, &out, stage) {
        Ok(summary) => {
            common.say(format!(
                "certified: {}; outputs in {}",
                summary.certified,
                summary.out_dir.display()
            ));
            if let Some(f) = summary.fit {
                common.say(format!(
                    "fitted decay rate {:.6} (K = {:.4}, r^2 = {:.5})",
                    f.sigma_bar, f.k_bar, f.r_squared
                ));
            }
            Ok(())
        }
        Err(f) => {
            for v in f.verdicts.iter().filter(|v| !v.pass) {
                eprintln!("FAIL {}: {}", v.name, v.detail);
            }
            Err(f.into())
        }
    }
}

fn check_artifact(common: &Common, path: &Path) -> Result<(), Fail> {
    let art = DesignArtifact::load(path)?;
    let rep = reverify(&art);
    if !rep.matches() {
        for m in &rep.mismatches {
            eprintln!("mismatch: {m}");
        }
        return Err(Fail(
            ExitStatus::CertificationFailed,
            "re-verification does not reproduce the stored verdicts".into(),
        ));
    }
    common.say(render_report(&art));
    if art.certified {
        Ok(())
    } else {
        Err(Fail(ExitStatus::CertificationFailed, "artifact is not certified".into()))
    }
}

fn dispatch(cli: &Cli) -> Result<(), Fail> {
    let common = &cli.common;
    match &cli.command {
        Command::Design { example } => run_stage(common, example.as_deref(), Stage::Design),
        Command::Simulate { example } => run_stage(common, example.as_deref(), Stage::Simulate),
        Command::Check { example, artifact } => match artifact {
            Some(path) => check_artifact(common, path),
            None => {
                let cfg = common.load(example.as_deref())?;
                let out = common.out_dir(Some(&cfg));
                run(&cfg, &out, Stage::Design).map_err(|f| {
                    for v in f.verdicts.iter().filter(|v| !v.pass) {
                        eprintln!("FAIL {}: {}", v.name, v.detail);
                    }
                    Fail::from(f)
                })?;
                common.say(std::fs::read_to_string(out.join("report.txt")).map_err(Error::from)?);
                Ok(())
            }
        },
        Command::Reproduce { id } => {
            let rep = reproduce(id)?;
            let text = rep.to_string();
            if let Some(dir) = &common.out {
                std::fs::create_dir_all(dir).map_err(Error::from)?;
                std::fs::write(dir.join(format!("reproduce_{id}.txt")), &text).map_err(Error::from)?;
            }
            common.say(text);
            if rep.pass() {
                Ok(())
            } else {
                Err(Fail(ExitStatus::CertificationFailed, "published values not reproduced".into()))
            }
        }
        Command::Export {
            input,
            stride,
            max_rows,
        } => {
            let text = std::fs::read_to_string(input).map_err(Error::from)?;
            let out = match stride {
                Some(s) => downsample_csv(&text, *s)?,
                None => export_plotdata(&text, max_rows.unwrap_or(DEFAULT_MAX_ROWS))?,
            };
            match &common.out {
                Some(path) => std::fs::write(path, out).map_err(Error::from)?,
                None => print!("{out}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(status, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(status.code() as u8)
        }
    }
}
