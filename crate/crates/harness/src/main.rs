use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use reach_harness::commands::{self, GoalSource};
use reach_harness::config::ExperimentConfig;
use reach_harness::error::{Stage, StageError, StageResult};
use reach_harness::sweep;

#[derive(Parser)]
#[command(name = "reach", version, about = "Babbling-to-reaching experiments on a simulated arm")]
struct Cli {
    /// TOML experiment configuration; overrides --preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in configuration used when --config is absent.
    #[arg(long, global = true, value_enum, default_value_t = Preset::HumanoidSingle)]
    preset: Preset,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    PlanarSmoke,
    HumanoidSingle,
    HumanoidMulti,
}

#[derive(Subcommand)]
enum Command {
    /// Generate training reaches and test goals.
    Babble,
    /// Train the autoencoder on the babbled data.
    Train,
    /// Build the unconnected neural map.
    BuildMap,
    /// Form connection bundles on the map.
    Bundle,
    /// Plan one reach on the bundled map.
    Plan {
        /// Cartesian goal as x,y,z; defaults to a test goal.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        goal: Option<Vec<f64>>,
        /// Test goal index used when --goal is absent.
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Write the per-step trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run parameter sweeps and write CSV and SVG outputs.
    Sweep {
        /// Comma-separated sweep kinds, or "all".
        #[arg(long, default_value = "all")]
        kind: String,
    },
    /// Summarize sweep outputs into report.md.
    Report,
    /// Print the effective configuration as TOML.
    Config,
}

fn load_config(cli: &Cli) -> StageResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => match cli.preset {
            Preset::PlanarSmoke => ExperimentConfig::planar_smoke(),
            Preset::HumanoidSingle => ExperimentConfig::humanoid_single(),
            Preset::HumanoidMulti => ExperimentConfig::humanoid_multi(),
        },
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> StageResult<()> {
    let cfg = load_config(&cli)?;
    let out = cfg.out_dir.clone();
    match cli.command {
        Command::Babble => commands::babble(&cfg, &out),
        Command::Train => commands::train(&cfg, &out),
        Command::BuildMap => commands::build_map(&cfg, &out),
        Command::Bundle => commands::bundle(&cfg, &out),
        Command::Plan { goal, trial, trace } => {
            let source = match goal {
                Some(g) => GoalSource::Point([g[0], g[1], g[2]]),
                None => GoalSource::Trial(trial),
            };
            let r = commands::plan(&cfg, &out, source, trace.as_deref())?;
            println!(
                "outcome {:?}, {} neurons, {} steps, goal neuron {}",
                r.outcome,
                r.neuron_path.len(),
                r.steps_used,
                r.goal_neuron
            );
            if !r.success {
                return Err(StageError::msg(Stage::Plan, format!("goal not reached ({:?})", r.outcome)));
            }
            Ok(())
        }
        Command::Sweep { kind } => {
            let kinds = sweep::parse_kinds(&kind)?;
            for path in commands::sweep(&cfg, &out, &kinds)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Report => {
            println!("{}", commands::report(&out)?.display());
            Ok(())
        }
        Command::Config => {
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
