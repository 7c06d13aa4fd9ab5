use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use symrm_cli::config::{ExperimentConfig, Pipeline, SourceKind};
use symrm_cli::output::{DEFAULT_OUTPUT_ROOT, OUTPUT_ROOT_VAR};
use symrm_cli::validate::validate;
use symrm_cli::HarnessError;

#[derive(Parser)]
#[command(name = "symrm", version, about = "Symmetry-resolved randomized measurement experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design error of the circuit ensemble per symmetry sector.
    DesignCheck(RunArgs),
    /// Sector-wise purities and entropies from outcome moments.
    Purity(RunArgs),
    /// Classical-shadow reconstruction of the sector blocks.
    Shadows(RunArgs),
    /// Entanglement-Hamiltonian tomography with the local ansatz.
    Eht(RunArgs),
    /// Entanglement gap across a sweep of the electric coupling.
    GapScan(RunArgs),
    /// Static checks of a config file; runs nothing.
    Validate {
        config: PathBuf,
    },
}

/// Flags override the config file, which overrides the preset.
#[derive(Args)]
struct RunArgs {
    /// TOML config; its `pipeline` must match the subcommand.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output root for relative output directories.
    #[arg(long, env = OUTPUT_ROOT_VAR, default_value = DEFAULT_OUTPUT_ROOT)]
    output_root: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_e: Option<usize>,
    #[arg(long, conflicts_with = "exact")]
    shots: Option<u64>,
    /// Use exact outcome probabilities instead of shots.
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    n_s: Option<u64>,
    #[arg(long)]
    layers: Option<usize>,
    /// Replace circuits by exact Haar blocks.
    #[arg(long)]
    haar: bool,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Print the effective config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_toml(&text).map_err(|e| match e {
        HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn effective(pipeline: Pipeline, a: &RunArgs) -> Result<ExperimentConfig, HarnessError> {
    let mut c = match &a.config {
        Some(p) => load(p)?,
        None => ExperimentConfig::preset(pipeline),
    };
    if c.pipeline != pipeline {
        return Err(HarnessError::Config(format!(
            "pipeline: config is for {}, subcommand is {}",
            c.pipeline.name(),
            pipeline.name()
        )));
    }
    if let Some(v) = &a.output {
        c.output_dir = Some(v.clone());
    }
    if let Some(v) = a.seed {
        c.master_seed = v;
    }
    if let Some(v) = a.n_e {
        c.ensemble.n_e = v;
    }
    if let Some(v) = a.shots {
        c.ensemble.shots = Some(v);
    }
    if a.exact {
        c.ensemble.shots = None;
    }
    if let Some(v) = a.n_s {
        c.ensemble.n_s = Some(v);
    }
    if let Some(v) = a.layers {
        c.ensemble.layers = Some(v);
    }
    if a.haar {
        c.ensemble.source = SourceKind::Haar;
        c.ensemble.scheme = None;
    }
    if let Some(v) = a.repetitions {
        c.repetitions = v;
    }
    if let Some(v) = a.threads {
        c.threads = Some(v);
    }
    Ok(c)
}

fn run(pipeline: Pipeline, a: &RunArgs) -> Result<(), HarnessError> {
    let c = effective(pipeline, a)?;
    if a.print_config {
        print!("{}", c.to_toml());
        return Ok(());
    }
    for d in validate(&c).iter().filter(|d| !d.is_error()) {
        eprintln!("warning: {}: {}", d.field, d.message);
    }
    let manifest = symrm_cli::run(&c, &a.output_root)?;
    let dir = symrm_cli::output::resolve_output_dir(&c, &a.output_root);
    println!("{}", dir.display());
    for f in &manifest.files {
        println!("  {} ({} bytes)", f.path, f.bytes);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::DesignCheck(a) => run(Pipeline::DesignCheck, a),
        Command::Purity(a) => run(Pipeline::Purity, a),
        Command::Shadows(a) => run(Pipeline::Shadows, a),
        Command::Eht(a) => run(Pipeline::Eht, a),
        Command::GapScan(a) => run(Pipeline::GapScan, a),
        Command::Validate { config } => load(config).map(|c| {
            let diags = validate(&c);
            for d in &diags {
                println!("{}", serde_json::to_string(d).expect("diagnostic serializes"));
            }
            if diags.iter().any(|d| d.is_error()) {
                std::process::exit(2);
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
