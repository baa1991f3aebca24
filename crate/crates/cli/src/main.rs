use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use clawe_core::experiment::{emit_csv, run_experiment, target_circuit, ExperimentConfig, ExperimentKind};

/// Noise-mitigation laboratory on a virtual noisy QPU.
#[derive(Parser)]
#[command(name = "clawe-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file and emit a CSV table.
    Run {
        config: PathBuf,
        /// Override `[run] seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Compute expectations from exact output states instead of shots.
        #[arg(long)]
        shot_free: bool,
        /// Output CSV path; defaults to `[output] path`, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the full target circuit of a config in text form.
    DumpCircuit { config: PathBuf },
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ExperimentConfig::parse(&text).with_context(|| format!("invalid config {}", path.display()))
}

/// Writes to stdout; a closed downstream pipe is not an error.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn calibration_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    out.with_file_name(format!("{stem}.calibration.csv"))
}

fn run(config: &Path, seed: Option<u64>, shot_free: bool, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = load(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.shot_free |= shot_free;
    let report = run_experiment(&cfg).context("experiment failed")?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    match out.or(cfg.output.clone()) {
        Some(path) => {
            emit_csv(&report.table, &path).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {} rows to {}", report.table.rows.len(), path.display());
            let calibrating = matches!(cfg.experiment, ExperimentKind::CalibrateV1 | ExperimentKind::CalibrateV2);
            if let (true, Some(rec)) = (calibrating, &report.calibration) {
                let cal = calibration_path(&path);
                std::fs::write(&cal, rec.to_csv()).with_context(|| format!("writing {}", cal.display()))?;
                eprintln!("wrote calibration record to {}", cal.display());
            }
        }
        None => emit(&report.table.to_csv())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, shot_free, out } => run(&config, seed, shot_free, out),
        Command::DumpCircuit { config } => load(&config).and_then(|cfg| {
            emit(&target_circuit(&cfg)?.to_string())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
