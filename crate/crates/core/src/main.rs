use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ctmbrl::env::env_by_name;
use ctmbrl::gp::ModelSnapshot;
use ctmbrl::harness::{downstream_eval, oracle_return, oracle_seed, run_suite, Overrides, RunConfig};
use ctmbrl::Error;

#[derive(Parser)]
#[command(name = "ctmbrl", version, about = "Continuous-time model-based RL experiments")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all seeds of an experiment and write logs to the output directory.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        algo: Option<String>,
        /// Run seeds 0..K.
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Zero-shot return of a saved model on another task.
    EvalDownstream {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        task: String,
        /// Planner and control settings; defaults to the environment preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Estimate the optimal return by planning on the true dynamics.
    Oracle {
        #[arg(long)]
        env: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        e if e.is_numerical() => 3,
        _ => 1,
    }
}

fn load(config: &Option<PathBuf>, env: Option<&str>) -> Result<RunConfig, Error> {
    match config {
        Some(p) => RunConfig::load(p),
        None => RunConfig::preset(env.unwrap_or("pendulum-gp")),
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Run {
            config,
            env,
            algo,
            seeds,
            episodes,
            out,
        } => {
            let cfg = load(&config, env.as_deref())?.with_overrides(&Overrides {
                env,
                algo,
                seeds,
                episodes,
                out,
            })?;
            let outcome = run_suite(&cfg)?;
            println!(
                "wrote {} seed logs to {} (oracle return {:.4})",
                outcome.runs.len(),
                outcome.dir.display(),
                outcome.oracle
            );
            for f in &outcome.manifest.failed_seeds {
                eprintln!("seed {} failed after {} episodes: {}", f.seed, f.episodes_completed, f.error);
            }
            Ok(match outcome.manifest.failed_seeds.iter().find(|f| f.numerical) {
                Some(_) => 3,
                None if outcome.any_failed() => 1,
                None => 0,
            })
        }
        Command::EvalDownstream {
            snapshot,
            task,
            config,
            seed,
        } => {
            let snap = ModelSnapshot::load(&snapshot)?;
            let cfg = load(&config, Some(&snap.env))?;
            let base = env_by_name(&snap.env)?;
            let model = snap.restore()?;
            let traj = downstream_eval(&model, &base, &task, &cfg.planner, cfg.environment.control_freq, seed)?;
            println!("{}", traj.total_return);
            Ok(0)
        }
        Command::Oracle { env, config } => {
            let cfg = load(&config, Some(&env))?.with_overrides(&Overrides {
                env: Some(env),
                ..Overrides::default()
            })?;
            let ode = cfg.ode()?;
            let v = oracle_return(&ode, &cfg.planner, cfg.environment.control_freq, oracle_seed(cfg.planner.icem.seed))?;
            println!("{v}");
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
