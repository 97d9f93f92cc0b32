//! `railx` command-line front end.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use railx::config::{ExperimentConfig, Preset};

#[derive(Parser, Debug)]
#[command(name = "railx", version, about = "Rail-ring OCS fabric experiments")]
struct Cli {
    /// Experiment file (TOML).
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled experiment: fig11a, fig11b, fig12, fig13, table5 or availability.
    #[arg(long, global = true)]
    preset: Option<Preset>,
    /// Overrides the seed in the experiment file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: the file's `out`, else `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Build the logical topology and its switch configuration.
    Build,
    /// Run the flit-level simulator.
    Simulate,
    /// Evaluate All-Reduce time models.
    Model,
    /// Count components and cost of fabric families.
    Cost,
    /// Solve port allocation or single-job allocation under faults.
    Allocate,
    /// Sweep the CP/DP port split over sequence lengths.
    Plan,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Bad input: exit code 1.
    Validation(String),
    /// Anything that went wrong while running: exit code 2.
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut config = match (&cli.config, cli.preset) {
        (Some(path), _) => ExperimentConfig::load(path).map_err(|e| Failure::Validation(e.to_string()))?,
        (None, Some(preset)) => preset.config(),
        (None, None) => return Err(Failure::Validation("pass --config <file> or --preset <name>".into())),
    };
    if let Some(seed) = cli.seed {
        config.seed = Some(seed);
    }
    let seed = config.seed.unwrap_or(config.sim.seed);
    config.seed = Some(seed);
    config.sim.seed = seed;
    if let Some(out) = &cli.out {
        config.out = Some(out.clone());
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = load(&cli).and_then(|config| {
        let out = config.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
        let ctx = commands::Context { config, out, preset: cli.preset };
        match cli.command {
            Command::Build => commands::build(&ctx),
            Command::Simulate => commands::simulate(&ctx),
            Command::Model => commands::model(&ctx),
            Command::Cost => commands::cost(&ctx),
            Command::Allocate => commands::allocate(&ctx),
            Command::Plan => commands::plan(&ctx),
        }
    });
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
