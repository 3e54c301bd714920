use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nfad_cli::{run_experiment, CliError, Document, ExperimentConfig, ExperimentKind};

/// Run an NFAD detector-control experiment and write its CSV files.
#[derive(Debug, Parser)]
#[command(name = "nfad", version)]
struct Args {
    /// Experiment to run; overrides `experiment` in the config file.
    /// One of: click_curve, threshold_map, jitter, count_rate_sweep,
    /// table_currents, gated_blinding, bb84, fast_monitor.
    experiment: Option<String>,

    /// Config file (or a manifest from an earlier run).
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,

    /// Seed override.
    #[arg(short, long)]
    seed: Option<u64>,

    /// Print the resolved manifest and the list of written files.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn run(args: &Args) -> Result<(), CliError> {
    let doc = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io { context: format!("reading {}", path.display()), source: e })?;
            Document::parse(&text, &path.display().to_string())?
        }
        None => Document::default(),
    };
    let experiment = args.experiment.as_deref().map(str::parse::<ExperimentKind>).transpose()?;
    let cfg = ExperimentConfig::from_document(&doc, experiment, args.seed)?;
    if args.verbose > 0 {
        eprintln!("running {} on {} (seed {})", cfg.experiment, cfg.detector.name(), cfg.seed);
    }
    let summary = run_experiment(&cfg, &args.out)?;
    for line in &summary.lines {
        println!("{line}");
    }
    if args.verbose > 0 {
        for f in &summary.files {
            eprintln!("wrote {}", f.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
