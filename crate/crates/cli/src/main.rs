//! Command-line entry point.
//!
//! Exit codes: 0 on success, 1 for configuration or usage problems, 2 for
//! solver or pipeline failures, 3 when the report's acceptance checks
//! fail while enforcement is on.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use permlayer_cli::config::{self, FieldFormat};
use permlayer_cli::pipeline::{self, PipelineError, PipelineOptions, Stage};

#[derive(Parser)]
#[command(
    name = "permlayer",
    version,
    about = "Effective flow and transport models for thin perforated layers, \
             verified against direct pore-scale simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the unit-cell flow problems and write the permeability tensor.
    Cell(RunArgs),
    /// Solve the diffusion cell problems and write the effective tensor.
    Effective(RunArgs),
    /// Solve the effective filtration problem on the layer midsurface.
    Darcy(RunArgs),
    /// Run the effective transport model with the filtration velocity.
    Transport(RunArgs),
    /// Run the direct pore-scale reference solver on the largest period.
    Micro(RunArgs),
    /// Run the period sweep comparing direct and effective solutions.
    Converge(RunArgs),
    /// Evaluate slope and error checks and write the plot-ready table.
    Report(RunArgs),
    /// Run every stage.
    All(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for artifacts and the run manifest.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Comma-separated stages replacing the subcommand's default set
    /// (dependencies are added automatically).
    #[arg(long, value_delimiter = ',')]
    stages: Option<Vec<String>>,
    /// Worker threads for sweep members; defaults to PERMLAYER_THREADS or
    /// the machine's available parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Dump solution fields next to the stage artifacts.
    #[arg(long)]
    fields: bool,
    /// Field dump format: "csv" or "binary".
    #[arg(long)]
    field_format: Option<String>,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (default_stage, args) = match &cli.command {
        Command::Cell(a) => (Some(Stage::Cell), a),
        Command::Effective(a) => (Some(Stage::Effective), a),
        Command::Darcy(a) => (Some(Stage::Darcy), a),
        Command::Transport(a) => (Some(Stage::Transport), a),
        Command::Micro(a) => (Some(Stage::Micro), a),
        Command::Converge(a) => (Some(Stage::Converge), a),
        Command::Report(a) => (Some(Stage::Report), a),
        Command::All(a) => (None, a),
    };

    let mut cfg = match config::load_config(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return 1;
        }
    };
    if args.fields {
        cfg.output.fields = true;
    }
    match args.field_format.as_deref() {
        None => {}
        Some("csv") => cfg.output.field_format = FieldFormat::Csv,
        Some("binary") => cfg.output.field_format = FieldFormat::Binary,
        Some(other) => {
            eprintln!("invalid --field-format {other:?}: use \"csv\" or \"binary\"");
            return 1;
        }
    }

    let initial: Vec<Stage> = match (&args.stages, default_stage) {
        (Some(names), _) => {
            let mut list = Vec::new();
            for name in names {
                match Stage::parse(name) {
                    Some(s) => list.push(s),
                    None => {
                        eprintln!(
                            "unknown stage {name:?}: expected one of {}",
                            Stage::ALL.map(Stage::name).join(", ")
                        );
                        return 1;
                    }
                }
            }
            if list.is_empty() {
                eprintln!("--stages needs at least one stage name");
                return 1;
            }
            list
        }
        (None, Some(stage)) => vec![stage],
        (None, None) => Stage::ALL.to_vec(),
    };

    let threads = args
        .threads
        .or_else(|| {
            std::env::var("PERMLAYER_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .max(1);
    let cache_dir = std::env::var_os("PERMLAYER_CACHE_DIR").map(PathBuf::from);

    let opts = PipelineOptions {
        out_dir: args.out_dir.clone(),
        stages: initial,
        threads,
        cache_dir,
    };
    let outcome = match pipeline::run_pipeline(&cfg, &opts) {
        Ok(outcome) => outcome,
        Err(PipelineError::Config(e)) => {
            eprintln!("{e}");
            return 1;
        }
        Err(PipelineError::Io(e)) => {
            eprintln!("{e}");
            return 2;
        }
    };

    for r in &outcome.stage_records {
        let mut line = format!("{}: {}", r.name, r.status);
        if r.cached {
            line.push_str(" (cached)");
        } else if r.status == "ok" {
            line.push_str(&format!(" ({:.1} s)", r.duration_ms as f64 / 1000.0));
        }
        if let Some(e) = &r.error {
            line.push_str(&format!(" — {e}"));
        }
        println!("{line}");
    }
    println!("manifest: {}", outcome.manifest_path.display());

    if outcome.any_failed {
        return 2;
    }
    if outcome.report_checks_passed == Some(false) {
        println!("report checks failed (see report.json)");
        if cfg.report.enforce {
            return 3;
        }
    }
    0
}
