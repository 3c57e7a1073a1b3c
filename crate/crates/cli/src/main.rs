use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aace::experiment::{self, Cell, RunConfig};
use aace::optim::PerturbKind;
use aace::Error;
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

/// Sharpness-aware training experiments.
#[derive(Parser)]
#[command(name = "aace", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train once and write a run directory.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write per-step telemetry to steps.csv.
        #[arg(long)]
        per_step: bool,
    },
    /// Sweep rho for both AACE kinds and write grid.csv.
    Grid {
        #[command(flatten)]
        common: Common,
        /// Comma-separated rho values.
        #[arg(long, value_delimiter = ',', required = true)]
        rho: Vec<f64>,
    },
    /// Run several optimizers at their default rho and write compare.csv.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated kinds: sgd, sam, aace, aace_norm or canonical names.
        #[arg(long, value_delimiter = ',', default_value = "sgd,sam,aace")]
        kinds: Vec<String>,
    },
    /// Draw SVG charts from a run directory's telemetry.csv.
    Render { run_dir: PathBuf },
}

/// Exit status for a library error: 1 configuration, 2 numerical, 3 I/O.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Aborted { .. } | Error::NonFinite { .. } | Error::NonFiniteProbe { .. }) => 2,
        Some(Error::Io { .. } | Error::Parse { .. } | Error::Format { .. } | Error::Json(_)) => 3,
        _ => 1,
    }
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_file(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn parse_kinds(names: &[String]) -> Result<Vec<PerturbKind>> {
    names
        .iter()
        .map(|n| {
            n.trim()
                .parse::<PerturbKind>()
                .map_err(|e| anyhow::Error::new(Error::Config(vec![e.to_string()])))
        })
        .collect()
}

fn pct(v: Option<f64>) -> String {
    v.map(|a| format!("{:.2}%", 100.0 * a))
        .unwrap_or_else(|| "-".into())
}

/// Prints one line per cell and turns the first failed cell into an error.
fn report_cells(cells: &[Cell], table: &Path) -> Result<()> {
    for c in cells {
        let rho = c.rho.map(|r| r.to_string()).unwrap_or_else(|| "-".into());
        match &c.result {
            Ok(s) => println!(
                "{:<12} rho={rho:<6} epochs={:<4} val={} test={}",
                c.kind.name(),
                c.epochs,
                pct(s.final_val_accuracy),
                pct(s.final_test_accuracy)
            ),
            Err(e) => println!("{:<12} rho={rho:<6} failed: {e}", c.kind.name()),
        }
    }
    println!("wrote {}", table.display());
    if let Some(c) = cells.iter().find(|c| c.result.is_err()) {
        let Err(e) = &c.result else { unreachable!() };
        // same exit category as the cell's own error
        let msg = e.to_string();
        let err = match e {
            Error::Aborted { .. } | Error::NonFinite { .. } => Error::NonFinite { what: msg },
            Error::Io { .. } | Error::Parse { .. } | Error::Format { .. } | Error::Json(_) => {
                Error::Format {
                    path: c.dir.clone(),
                    message: msg,
                }
            }
            _ => Error::Config(vec![msg]),
        };
        return Err(anyhow::Error::new(err).context(format!("cell {}", c.dir.display())));
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, per_step } => {
            let mut cfg = load(&common)?;
            cfg.per_step |= per_step;
            let out = experiment::run(&cfg)
                .with_context(|| format!("run into {}", cfg.output_dir.display()))?;
            println!(
                "{} epochs, final val acc {}, test acc {}",
                out.summary.epochs_completed,
                pct(out.summary.final_val_accuracy),
                pct(out.summary.final_test_accuracy)
            );
            println!("wrote {}", out.dir.display());
        }
        Command::Grid { common, rho } => {
            let cfg = load(&common)?;
            let cells = experiment::grid(&cfg, &rho)?;
            report_cells(&cells, &cfg.output_dir.join("grid.csv"))?;
        }
        Command::Compare { common, kinds } => {
            let cfg = load(&common)?;
            let kinds = parse_kinds(&kinds)?;
            let cells = experiment::compare(&cfg, &kinds)?;
            report_cells(&cells, &cfg.output_dir.join("compare.csv"))?;
        }
        Command::Render { run_dir } => {
            for path in experiment::render(&run_dir)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if out.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
