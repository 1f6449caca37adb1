use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use ocsens_core::io::load_problem;
use ocsens_core::sensitivity::{analyze, sweep, sweep_csv, ModeRequest, SensOptions};
use ocsens_core::serde_ext::round_json;
use ocsens_core::verify::verify;
use ocsens_core::{solve, validate_problem, ControlProblem, Error, SolveStatus};
use serde::Serialize;

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_NOT_OPTIMAL: u8 = 2;
const EXIT_REGULARITY: u8 = 3;
const EXIT_VERIFY_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "ocsens", version, about = "Sensitivity of parametric convex optimal control problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve at the reference parameter and report the solution.
    Solve(Common),
    /// Subdifferential and singular subdifferential of V at the reference parameter.
    Sens(Common),
    /// Re-check a sensitivity result against the grid and finite-difference oracles.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Check this vector instead of the computed subdifferential.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        candidate: Option<Vec<f64>>,
    },
    /// V (and its gradient where it exists) over a 1- or 2-dimensional grid.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Problem file (JSON).
    problem: PathBuf,
    /// Override the reference parameter, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    wbar: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "auto")]
    mode: Mode,
    /// Half-width of the oracle or sweep grid.
    #[arg(long, default_value_t = 0.1)]
    grid_radius: f64,
    /// Points per grid axis (odd). 0 skips the oracle check in `sens`.
    #[arg(long)]
    grid_points: Option<usize>,
    /// Slack in the subgradient inequality.
    #[arg(long, default_value_t = ocsens_core::oracle::SUBGRADIENT_TOL)]
    tol: f64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Smooth,
    Interval,
    Polytope,
    Auto,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::Regularity { .. }) => EXIT_REGULARITY,
            CliError::Core(Error::NotSolved(_)) => EXIT_NOT_OPTIMAL,
            _ => EXIT_INPUT,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

impl Common {
    fn load(&self) -> CliResult<(ControlProblem, Vec<f64>)> {
        let p = load_problem(&self.problem)?;
        for c in validate_problem(&p).failures() {
            warn!("check failed: {} ({})", c.name, c.detail);
        }
        let w = self.wbar.clone().unwrap_or_else(|| p.wbar.clone());
        if w.len() != p.param_dim() {
            return Err(CliError::Usage(format!(
                "--wbar has {} entries, the problem has {} parameters",
                w.len(),
                p.param_dim()
            )));
        }
        Ok((p, w))
    }

    fn options(&self, default_points: usize) -> SensOptions {
        SensOptions {
            mode: match self.mode {
                Mode::Smooth => ModeRequest::Smooth,
                Mode::Interval => ModeRequest::Interval,
                Mode::Polytope => ModeRequest::Polytope,
                Mode::Auto => ModeRequest::Auto,
            },
            grid_radius: self.grid_radius,
            grid_points: self.grid_points.unwrap_or(default_points),
            tol: self.tol,
        }
    }

    fn json_only(&self) -> CliResult<()> {
        if self.format == Some(Format::Csv) {
            return Err(CliError::Usage("csv output is only available for sweep".into()));
        }
        Ok(())
    }

    fn emit(&self, text: &str) -> CliResult<()> {
        match &self.out {
            Some(path) => write_file(path, text),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())
                    .map_err(|source| CliError::Write {
                        path: "stdout".into(),
                        source,
                    })
            }
        }
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.display().to_string(),
        source,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("reports serialize");
    round_json(&mut v, 12);
    let mut s = serde_json::to_string_pretty(&v).expect("reports serialize");
    s.push('\n');
    s
}

fn cmd_solve(c: &Common) -> CliResult<u8> {
    c.json_only()?;
    let (p, w) = c.load()?;
    let r = solve(&p, &w)?;
    info!("solve finished with {:?} after {} iterations", r.status, r.iterations);
    c.emit(&to_json(&r))?;
    Ok(match r.status {
        SolveStatus::Optimal => EXIT_OK,
        _ => EXIT_NOT_OPTIMAL,
    })
}

fn cmd_sens(c: &Common) -> CliResult<u8> {
    c.json_only()?;
    let (p, w) = c.load()?;
    let report = analyze(&p, &w, &c.options(5))?;
    for msg in &report.warnings {
        log::warn!("{msg}");
    }
    c.emit(&to_json(&report))?;
    Ok(EXIT_OK)
}

fn cmd_verify(c: &Common, candidate: Option<&[f64]>) -> CliResult<u8> {
    c.json_only()?;
    let (p, w) = c.load()?;
    if let Some(cand) = candidate {
        if cand.len() != w.len() {
            return Err(CliError::Usage(format!(
                "--candidate has {} entries, the problem has {} parameters",
                cand.len(),
                w.len()
            )));
        }
    }
    let report = verify(&p, &w, &c.options(5), candidate)?;
    c.emit(&to_json(&report))?;
    if report.pass {
        return Ok(EXIT_OK);
    }
    for f in report.failures() {
        eprintln!(
            "FAIL {}: {} (margin {}, at {:?})",
            f.name,
            f.detail,
            ocsens_core::oracle::fmt_num(f.margin),
            f.point
        );
    }
    Ok(EXIT_VERIFY_FAILED)
}

fn cmd_sweep(c: &Common) -> CliResult<u8> {
    let (p, w) = c.load()?;
    let rows = sweep(&p, &w, c.grid_radius, c.grid_points.unwrap_or(11))?;
    let text = match c.format.unwrap_or(Format::Csv) {
        Format::Csv => sweep_csv(&rows, w.len()),
        Format::Json => to_json(&rows),
    };
    c.emit(&text)?;
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OCSENS_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(c) => cmd_solve(c),
        Command::Sens(c) => cmd_sens(c),
        Command::Verify { common, candidate } => cmd_verify(common, candidate.as_deref()),
        Command::Sweep(c) => cmd_sweep(c),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Core(Error::Regularity { vector }) = &e {
                eprintln!("failing kernel vector: {vector:?}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
