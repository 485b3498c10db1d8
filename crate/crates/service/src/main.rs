use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use twin_teleop::harness::{run_experiment, run_trial, write_report, SeedStream};
use twin_teleop::registration::{register_paired_points, PointPairSet};
use twin_teleop::{StrategyKind, TrialConfig};
use twin_teleop_service::SessionConfig;

#[derive(Parser)]
#[command(name = "twin-teleop", version, about = "Digital-twin teleoperation under link outages")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the environment -> base transform from a point-pair CSV.
    Register {
        #[arg(long)]
        pairs: PathBuf,
    },
    /// Print a sampled link schedule as `start,end,status` CSV.
    Schedule {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        horizon: f64,
        /// Trial config whose channel model to use (defaults otherwise).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run one simulated trial and print its metrics as JSON.
    Trial {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        strategy: Option<StrategyKind>,
    },
    /// Run paired trials per strategy and write report.json and trials.csv.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "baseline,replay")]
        strategies: Vec<StrategyKind>,
    },
    /// Serve live sessions over WebSocket at /ws.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "TWIN_TELEOP_BIND", default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
}

fn trial_config(path: Option<&PathBuf>) -> anyhow::Result<TrialConfig> {
    match path {
        Some(p) => TrialConfig::from_path(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(TrialConfig::default()),
    }
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Register { pairs } => {
            let set = PointPairSet::from_csv_path(&pairs).with_context(|| format!("reading {}", pairs.display()))?;
            let result = register_paired_points(&set)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&result)?)?;
        }
        Command::Schedule { seed, horizon, config } => {
            if !(horizon > 0.0 && horizon.is_finite()) {
                bail!("horizon must be positive");
            }
            let cfg = trial_config(config.as_ref())?;
            write!(out, "{}", cfg.channel.schedule(horizon, seed)?.to_csv())?;
        }
        Command::Trial { config, seed, strategy } => {
            let mut cfg = trial_config(config.as_ref())?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.strategy = strategy.unwrap_or(cfg.strategy);
            let metrics = run_trial(&cfg)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&metrics)?)?;
        }
        Command::Experiment { config, trials, out: dir, base_seed, strategies } => {
            let cfg = trial_config(config.as_ref())?;
            let report = run_experiment(&cfg, trials, &strategies, SeedStream::new(base_seed))?;
            let [json, csv] = write_report(&report, &dir)?;
            if let Some(c) = &report.comparison {
                writeln!(
                    out,
                    "reduction {:.2}% (paired mean {:.2}%), welch p {}, paired p {}",
                    c.reduction * 100.0,
                    c.mean_paired_reduction * 100.0,
                    c.welch.map_or("n/a".into(), |t| format!("{:.3e}", t.p)),
                    c.paired.map_or("n/a".into(), |t| format!("{:.3e}", t.p)),
                )?;
            }
            writeln!(out, "wrote {} and {}", json.display(), csv.display())?;
        }
        Command::Serve { config, bind } => {
            tracing_subscriber::fmt().with_writer(std::io::stderr).init();
            let cfg = match &config {
                Some(p) => SessionConfig::from_path(p).with_context(|| format!("loading {}", p.display()))?,
                None => SessionConfig::default(),
            };
            tokio::runtime::Runtime::new()?.block_on(twin_teleop_service::serve(cfg, bind))?;
        }
    }
    Ok(())
}
