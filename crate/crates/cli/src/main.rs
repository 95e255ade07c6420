//! `fracstep`: run integrations, refinement studies, index certificates and
//! stability reports from JSON configuration files.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver failure. On
//! failure stderr carries one JSON object.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracstep_core::splitting::SolverKind;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] fracstep_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use fracstep_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::Config(_) | E::Input(_) | E::Dimension { .. } | E::Precondition(_)) => 2,
            CliError::Core(_) => 3,
        }
    }

    fn to_json(&self, tau: Option<f64>) -> serde_json::Value {
        let kind = if self.exit_code() == 2 { "config" } else { "solver" };
        let mut v = json!({ "error": kind, "message": self.to_string() });
        if let CliError::Core(e) = self {
            if let Some(step) = e.step() {
                v["step"] = json!(step);
                if let Some(tau) = tau {
                    v["t"] = json!(step as f64 * tau);
                }
            }
            if let Some(c) = e.condition() {
                v["condition"] = json!(c);
            }
        }
        v
    }
}

#[derive(Parser, Debug)]
#[command(name = "fracstep", version, about = "Linearly implicit and fractional-step solvers for quasi-linear PDAEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate to t_e and write the trajectory CSV.
    Run(Common),
    /// Grid refinement study with tau = K0 h.
    Refine {
        #[command(flatten)]
        common: Common,
        /// Doubling grid levels, e.g. 20,40,80.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
    },
    /// Time-index certificate at the initial state.
    Index(Common),
    /// Stability report for the forward-differenced operator.
    Stability(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON configuration; plasma defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; overrides "out" in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["full", "split"])]
    solver: Option<String>,
    #[arg(long, value_parser = ["central", "forward", "backward", "upwind"])]
    scheme: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            eprintln!("{}", json!({ "error": "config", "message": msg.trim() }));
            return ExitCode::from(2);
        }
    };
    let mut tau = None;
    match dispatch(cli.command, &mut tau) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json(tau));
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command, tau: &mut Option<f64>) -> Result<(), CliError> {
    let (common, levels) = match &command {
        Command::Run(c) | Command::Index(c) | Command::Stability(c) => (c.clone(), None),
        Command::Refine { common, levels } => (common.clone(), levels.clone()),
    };
    let cfg = config::RunConfig::load(common.config.as_deref())?;
    let overrides = config::Overrides {
        solver: common.solver.as_deref().map(|s| s.parse::<SolverKind>()).transpose()?,
        scheme: common.scheme.clone(),
    };
    let problem = config::Problem::resolve(&cfg, &overrides)?;
    *tau = Some(problem.step.tau(&problem.grid()?));
    let out = common.out.or_else(|| cfg.out.clone());
    match command {
        Command::Run(_) => commands::run(&problem, out.as_deref()),
        Command::Refine { .. } => {
            let levels = levels.or(cfg.levels.clone()).unwrap_or_else(|| vec![20, 40, 80, 160, 320]);
            commands::refine(&problem, &levels, out.as_deref())
        }
        Command::Index(_) => commands::index(&problem, out.as_deref()),
        Command::Stability(_) => commands::stability(&problem, out.as_deref()),
    }
}
