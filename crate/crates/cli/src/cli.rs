use std::ffi::OsString;
use std::panic::AssertUnwindSafe;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

/// Status output; a closed stdout is not an error.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

use crate::check::{cmd_check, label, SuiteOptions};
use crate::config::{output_root, RunConfigFile};
use crate::error::{CliError, Result};
use crate::report::cmd_report;
use crate::run;
use crate::sweep::{run_sweep, SweepSpec};

#[derive(Debug, Parser)]
#[command(
    name = "cfpo",
    version,
    about = "Clipped vs clipping-free policy optimisation on toy tasks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output root (overrides the config and CFPO_OUT_DIR).
    #[arg(short, long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides the seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Suppresses progress output.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trains one config and writes metrics.csv, summary.json and checkpoint.csv.
    Run {
        #[arg(short, long, value_name = "FILE")]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Runs every point of a sweep grid, skipping completed runs.
    Sweep {
        #[arg(short, long, value_name = "FILE")]
        config: PathBuf,
        /// Concurrent runs (overrides the sweep file).
        #[arg(short = 'j', long, value_name = "N")]
        parallel: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Runs the theory check suite; `--out` is the report file.
    Check {
        #[arg(short, long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Aggregates completed runs below a directory.
    Report {
        /// Directory to scan (default: the output root).
        runs_dir: Option<PathBuf>,
        /// Where to write the tables (default: the scanned directory).
        #[arg(short, long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
}

fn cmd_run(config: &Path, common: &Common) -> Result<()> {
    let mut cfg = RunConfigFile::load(config)?;
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    let root = output_root(common.out.as_deref(), cfg.output_dir.as_deref());
    let dir = run::run_dir(&root, &cfg);
    let s = run::execute(&cfg, &dir)?;
    if !common.quiet {
        say!(
            "{}: {} steps, {} gradient steps, final reward {:.4}{}",
            dir.display(),
            s.steps_completed,
            s.gradient_steps,
            s.final_reward.unwrap_or(f64::NAN),
            match s.collapse_reason {
                Some(r) => format!(
                    ", collapsed ({r:?}) at step {}",
                    s.collapse_step.unwrap_or(0)
                ),
                None => String::new(),
            }
        );
    }
    Ok(())
}

fn cmd_sweep(config: &Path, parallel: Option<usize>, common: &Common) -> Result<()> {
    let mut spec = SweepSpec::load(config)?;
    if let Some(seed) = common.seed {
        spec.base
            .insert("seed".into(), toml::Value::Integer(seed as i64));
    }
    if parallel == Some(0) {
        return Err(CliError::Config("--parallel must be positive".into()));
    }
    let root = output_root(common.out.as_deref(), spec.output_dir.as_deref());
    let outcome = run_sweep(&spec, &root, parallel, common.quiet)?;
    if !common.quiet {
        say!(
            "{}: {} runs, {} executed, {} already complete",
            outcome.dir.display(),
            outcome.manifest.runs.len(),
            outcome.executed.len(),
            outcome.skipped.len()
        );
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, common } => cmd_run(&config, &common),
        Command::Sweep {
            config,
            parallel,
            common,
        } => cmd_sweep(&config, parallel, &common),
        Command::Check { out, seed, quiet } => {
            let path = out.unwrap_or_else(|| output_root(None, None).join("report.json"));
            let opts = SuiteOptions {
                seed: seed.unwrap_or(0),
                ..SuiteOptions::default()
            };
            let report = cmd_check(&path, &opts)?;
            if !quiet {
                for c in &report.checks {
                    say!(
                        "ok   {} ({} trials, max slack {:.3e})",
                        label(c),
                        c.trials,
                        c.max_slack
                    );
                }
                say!("{}: {} checks passed", path.display(), report.checks.len());
            }
            Ok(())
        }
        Command::Report {
            runs_dir,
            out,
            quiet,
        } => {
            let dir = runs_dir.unwrap_or_else(|| output_root(None, None));
            let report = cmd_report(&dir, out.as_deref())?;
            if !quiet {
                say!(
                    "{}: {} runs, {} comparison rows",
                    out.as_deref().unwrap_or(&dir).display(),
                    report.summary.len(),
                    report.comparison.len()
                );
            }
            Ok(())
        }
    }
}

/// Parses `args`, runs the verb and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                CliError::EXIT_CONFIG
            } else {
                CliError::EXIT_OK
            };
        }
    };
    match std::panic::catch_unwind(AssertUnwindSafe(|| dispatch(cli))) {
        Ok(Ok(())) => CliError::EXIT_OK,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        Err(_) => {
            eprintln!("error: internal failure");
            CliError::EXIT_FAILURE
        }
    }
}
