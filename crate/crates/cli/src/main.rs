//! `lab`: runs holestokes experiments from configuration files.
//!
//! Exit codes: 0 when every verdict passes or is not gating, 1 when a verdict
//! fails, 2 on configuration or execution errors.

mod config;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{parse_config, Config, Kind};
use crate::run::{Inputs, RestrictCheck};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (config schema 1)");

#[derive(Parser)]
#[command(name = "lab", version = VERSION, about = "Stokes flow experiments in domains with small holes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Fill the `seconds` column of CSV tables.
    #[arg(long)]
    timings: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckArg {
    Extension,
    Divfree,
    Norm,
}

#[derive(Subcommand)]
enum Command {
    /// Mesh a single-hole domain.
    Mesh(Common),
    /// Solve one Stokes problem and report its norms.
    Solve(Common),
    /// Run an epsilon sweep.
    Sweep(Common),
    /// Apply the restriction operator to a velocity field.
    Restrict {
        #[command(flatten)]
        common: Common,
        /// TOML file with `velocity = ["<u1>", "<u2>"]`.
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        verify: Option<CheckArg>,
    },
    /// Apply the perforated Bogovskii operator to a mean-zero function.
    Bogovskii {
        #[command(flatten)]
        common: Common,
        /// TOML file with `expression = "<f>"` or `random_seed = <n>`.
        #[arg(long)]
        rhs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        verify: bool,
    },
}

impl Command {
    fn expected_kind(&self) -> Kind {
        match self {
            Command::Mesh(_) => Kind::Mesh,
            Command::Solve(_) => Kind::Solve,
            Command::Sweep(_) => Kind::Sweep,
            Command::Restrict { .. } => Kind::Restrict,
            Command::Bogovskii { .. } => Kind::Bogovskii,
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Mesh(c) | Command::Solve(c) | Command::Sweep(c) => c,
            Command::Restrict { common, .. } | Command::Bogovskii { common, .. } => common,
        }
    }

    fn inputs(&self) -> Inputs {
        let mut i = Inputs {
            timings: self.common().timings,
            ..Inputs::default()
        };
        match self {
            Command::Restrict { field, out, verify, .. } => {
                i.field = Some(field.clone());
                i.out = out.clone();
                i.restrict_check = verify.map(|v| match v {
                    CheckArg::Extension => RestrictCheck::Extension,
                    CheckArg::Divfree => RestrictCheck::DivFree,
                    CheckArg::Norm => RestrictCheck::Norm,
                });
                i.verify = verify.is_some();
            }
            Command::Bogovskii { rhs, out, verify, .. } => {
                i.rhs = Some(rhs.clone());
                i.out = out.clone();
                i.verify = *verify;
            }
            _ => {}
        }
        i
    }
}

fn thread_pool() -> Result<(), String> {
    let Ok(v) = std::env::var("LAB_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("LAB_THREADS must be a positive integer, got {v:?}"))?;
    if n == 0 {
        return Err("LAB_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn load(command: &Command) -> Result<Config, String> {
    let path = &command.common().config;
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let config = parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if config.experiment.kind != command.expected_kind() {
        return Err(format!(
            "{}: experiment kind {:?} does not match this subcommand",
            path.display(),
            config.experiment.kind
        ));
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = thread_pool() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let config = match load(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run::run(&config, &cli.command.inputs()) {
        Ok(outcome) => {
            for v in &outcome.report.verdicts {
                println!("{:<13} {} [{}]", format!("{:?}", v.status).to_lowercase(), v.claim, v.anchor);
            }
            for p in &outcome.written {
                println!("wrote {}", p.display());
            }
            if !outcome.execution_errors.is_empty() {
                for e in &outcome.execution_errors {
                    eprintln!("error: {e}");
                }
                return ExitCode::from(2);
            }
            if outcome.report.failed() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
