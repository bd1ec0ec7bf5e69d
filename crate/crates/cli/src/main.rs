use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use pairsim_cli::config::{parse_config, Scenario};
use pairsim_cli::scenario::run_scenario;

/// Simulate the compensated entangled-pair source and write CSV results.
#[derive(Debug, Parser)]
#[command(name = "pairsim", version, about)]
struct Cli {
    /// Scenario config file.
    #[arg(long)]
    config: PathBuf,
    /// Override the scenario selected in the config.
    #[arg(long, value_enum)]
    scenario: Option<ScenarioKind>,
    /// Override run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override run.n_gates.
    #[arg(long)]
    gates: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "./out")]
    out: PathBuf,
    /// Worker threads for the gate loop (default: one per CPU).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScenarioKind {
    Ideal,
    Fringe,
    Chsh,
    Drift,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let text = match std::fs::read_to_string(&cli.config) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("config error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(1);
        }
    };
    let mut configs = match parse_config(&text) {
        Ok(configs) => configs,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(1);
        }
    };

    if let Some(kind) = cli.scenario {
        configs.scenario = match (kind, configs.scenario) {
            (ScenarioKind::Ideal, _) => Scenario::Ideal,
            (ScenarioKind::Fringe, _) => Scenario::Fringe,
            (ScenarioKind::Chsh, s @ Scenario::Chsh { .. }) => s,
            (ScenarioKind::Chsh, _) => Scenario::Chsh { subtract: false },
            (ScenarioKind::Drift, s @ Scenario::Drift { .. }) => s,
            (ScenarioKind::Drift, _) => Scenario::Drift {
                n_trials: pairsim_cli::config::DEFAULT_DRIFT_TRIALS,
            },
        };
    }
    if let Some(seed) = cli.seed {
        configs.run.seed = seed;
    }
    if let Some(gates) = cli.gates {
        if gates < 1 {
            eprintln!("config error: --gates must be at least 1");
            return ExitCode::from(1);
        }
        configs.run.n_gates = gates;
    }

    if let Some(workers) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build_global()
        {
            eprintln!("runtime error: cannot configure {workers} workers: {e}");
            return ExitCode::from(2);
        }
    }

    match run_scenario(&configs, &cli.out) {
        Ok(()) => {
            println!(
                "wrote {} scenario output to {}",
                configs.scenario.kind(),
                cli.out.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("runtime error: {e}");
            ExitCode::from(2)
        }
    }
}
