//! Command-line front end: `validate`, `dry-run` and `run`.

mod config;
mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use config::{
    measure_from_literal, validate_config, Battery, BatteryFamily, Budgets, ExperimentConfig, MonteCarlo, PieceLit,
    Preset, RationalLit, DEFAULT_OUTPUT_DIR, DEFAULT_SAMPLES,
};
pub use run::{
    battery_target, dry_run, exit_code_for, run_experiment, write_dry_run, DryRun, RunOutcome, EXIT_BUDGET,
    EXIT_CONFIG, EXIT_FAILED, EXIT_INTERNAL, EXIT_OK, MC_DELTA,
};

use crate::builder::Mode;
use crate::error::{Error, Result};

/// Overrides the configured output directory; `--out` wins over it.
pub const OUT_DIR_ENV: &str = "INDLIM_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "indlim", version, about = "Build and verify sets with prescribed Birkhoff-sum laws")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Strict,
    Relaxed,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Experiment configuration (JSON).
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and check a configuration.
    Validate(Common),
    /// Plan the schedule only.
    DryRun(Common),
    /// Build, verify and write all artifacts.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write castles.json.
        #[arg(long)]
        dump_castles: bool,
    },
}

fn load(c: &Common) -> Result<ExperimentConfig> {
    let raw = std::fs::read_to_string(&c.config).map_err(|e| Error::Config(format!("{}: {e}", c.config.display())))?;
    let mut cfg = validate_config(&raw)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(m) = c.mode {
        cfg.mode = match m {
            ModeArg::Strict => Mode::Strict,
            ModeArg::Relaxed => Mode::Relaxed,
        };
    }
    if let Some(dir) = &c.out {
        cfg.output_dir = dir.clone();
    } else if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|d| !d.is_empty()) {
        cfg.output_dir = PathBuf::from(dir);
    }
    Ok(cfg)
}

fn fail(e: &Error) -> i32 {
    eprintln!("error: {e}");
    exit_code_for(e)
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Validate(c) => match load(&c) {
            Ok(cfg) => {
                println!(
                    "ok: K = {}, eps = {}, mode = {:?}, output = {}",
                    cfg.k,
                    crate::rational::fmt(&cfg.eps),
                    cfg.mode,
                    cfg.output_dir.display()
                );
                EXIT_OK
            }
            Err(e) => fail(&e),
        },
        Command::DryRun(c) => {
            let cfg = match load(&c) {
                Ok(cfg) => cfg,
                Err(e) => return fail(&e),
            };
            match dry_run(&cfg) {
                Ok((d, code)) => {
                    match serde_json::to_string_pretty(&d) {
                        Ok(s) => println!("{s}"),
                        Err(e) => return fail(&Error::Io(e.to_string())),
                    }
                    if let Err(e) = write_dry_run(&cfg.output_dir, &d) {
                        return fail(&e);
                    }
                    for o in &d.over_budget {
                        eprintln!("budget: {o}");
                    }
                    code
                }
                Err(e) => fail(&e),
            }
        }
        Command::Run { common, dump_castles } => {
            let mut cfg = match load(&common) {
                Ok(cfg) => cfg,
                Err(e) => return fail(&e),
            };
            cfg.dump_castles |= dump_castles;
            match run_experiment(&cfg) {
                Ok(o) => {
                    if let Some(e) = &o.error {
                        eprintln!("error: {e}");
                    }
                    for f in &o.failures {
                        eprintln!("failed: {f}");
                    }
                    println!("report: {} (exit {})", o.report.display(), o.exit_code);
                    o.exit_code
                }
                Err(e) => fail(&e),
            }
        }
    }
}
