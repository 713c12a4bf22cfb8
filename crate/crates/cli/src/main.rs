//! `sembench`: run semantic-mapping benchmarks, serve live sessions, replay
//! event logs and inspect worlds.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use sembench_core::explore::PolicyKind;
use sembench_core::harness::{replay_log, run_benchmark, serve, SessionConfig, SessionReport};
use sembench_core::worldmodel::{bundled_names, load_bundled, load_world, WorldSpec};

const DEFAULT_OUT: &str = "results";
const DEFAULT_BIND: &str = "127.0.0.1:8765";

#[derive(Debug, Parser)]
#[command(
    name = "sembench",
    version,
    about = "Semantic-mapping exploration benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run seeded benchmark sessions and write CSV, JSON and event logs.
    Run(RunArgs),
    /// Serve one live session over WebSocket.
    Serve(ServeArgs),
    /// Recompute the metric series of an event log.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Check a world file or bundled world and print a summary.
    Validate {
        #[arg(long)]
        world: String,
    },
    /// List the bundled worlds.
    ListWorlds,
}

/// Settings shared by `run` and `serve`. Flags override the config file.
#[derive(Debug, Args)]
struct Common {
    /// TOML session config; flags take precedence over its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundled world name or world file path.
    #[arg(long)]
    world: Option<String>,
    /// frontier, random or external.
    #[arg(long)]
    policy: Option<PolicyKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Session length in sim seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Output directory [default: results].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    runs: Option<u32>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    common: Common,
    /// Address to listen on [default: 127.0.0.1:8765].
    #[arg(long)]
    bind: Option<String>,
    /// Sim seconds per wall second.
    #[arg(long)]
    real_time_factor: Option<f64>,
    /// Start without waiting for a client's `start` message.
    #[arg(long)]
    autostart: bool,
}

impl Common {
    fn resolve(&self) -> Result<SessionConfig> {
        let mut config = match &self.config {
            Some(path) => SessionConfig::from_file(path)?,
            None => SessionConfig::default(),
        };
        if let Some(world) = &self.world {
            config.world = world.clone();
        }
        if let Some(policy) = self.policy {
            config.policy.kind = policy;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(duration) = self.duration {
            config.duration = duration;
        }
        if let Some(out) = &self.out {
            config.out = Some(out.clone());
        }
        config.out.get_or_insert_with(|| PathBuf::from(DEFAULT_OUT));
        Ok(config)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error and each cause not already spelled out by the one before it.
fn describe(e: &anyhow::Error) -> String {
    let mut text = e.to_string();
    for cause in e.chain().skip(1) {
        let cause = cause.to_string();
        if !text.contains(&cause) {
            text.push_str(": ");
            text.push_str(&cause);
        }
    }
    text
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run(args) => run(args),
        Command::Serve(args) => serve_session(args),
        Command::Replay { log } => replay(log),
        Command::Validate { world } => validate(&world),
        Command::ListWorlds => list_worlds(),
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let mut config = args.common.resolve()?;
    if let Some(runs) = args.runs {
        config.runs = runs;
    }
    if config.policy.kind == PolicyKind::External {
        bail!("the external policy needs an operator; use `sembench serve`");
    }
    let out = config.out.clone().expect("resolved");
    log::info!(
        "running {} × {} s of {} on {} (seed {})",
        config.runs,
        config.duration,
        config.policy.kind,
        config.world,
        config.seed
    );
    let report = run_benchmark(&config)?;
    print_summary(&report);
    println!("artifacts in {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn print_summary(report: &SessionReport) {
    for run in &report.runs {
        println!(
            "run {:02} seed {:<6} ended {:?} at t = {} s",
            run.run_id, run.seed, run.end_reason, run.end_time
        );
    }
    for name in report.final_values.keys() {
        let agg = &report.metrics[name];
        let (mean, std) = (
            agg.mean.last().copied().unwrap_or(0.0),
            agg.std.last().copied().unwrap_or(0.0),
        );
        println!("{name:>5}: final {mean:.6} ± {std:.6}");
    }
}

fn serve_session(args: ServeArgs) -> Result<ExitCode> {
    let mut config = args.common.resolve()?;
    if args.common.policy.is_none() && args.common.config.is_none() {
        config.policy.kind = PolicyKind::External;
    }
    if let Some(rtf) = args.real_time_factor {
        config.serve.real_time_factor = rtf;
    }
    config.serve.autostart |= args.autostart;
    let bind = args.bind.as_deref().unwrap_or(DEFAULT_BIND);
    let handle = serve(&config, bind)?;
    println!("listening on ws://{}", handle.local_addr());
    let report = handle.join()?;
    print_summary(&report);
    if let Some(out) = &config.out {
        println!("artifacts in {}", out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn replay(log: PathBuf) -> Result<ExitCode> {
    let replay = replay_log(&log).with_context(|| format!("replaying {}", log.display()))?;
    print!("{}", replay.recomputed.to_csv());
    if replay.matches() {
        eprintln!("recomputed series matches the recorded one");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("recomputed series differs from the recorded one");
        Ok(ExitCode::FAILURE)
    }
}

fn validate(world: &str) -> Result<ExitCode> {
    let spec = load_world(world).with_context(|| format!("loading world {world}"))?;
    print_world(&spec);
    println!("ok");
    Ok(ExitCode::SUCCESS)
}

fn print_world(w: &WorldSpec) {
    let reachable = w.reachable_free_cells().iter().filter(|&&r| r).count();
    let points: usize = w.objects.iter().map(|o| o.point_count()).sum();
    let classes: std::collections::BTreeSet<&str> =
        w.objects.iter().map(|o| o.class_label.as_str()).collect();
    println!("world {} (frame {})", w.name, w.frame.0);
    println!(
        "  grid {} × {} cells at {} m ({:.1} × {:.1} m)",
        w.width,
        w.height,
        w.resolution,
        w.width as f64 * w.resolution,
        w.height as f64 * w.resolution
    );
    println!("  start ({}, {}, {})", w.start.x, w.start.y, w.start.theta);
    println!(
        "  {} objects of {} classes, {} surface points",
        w.objects.len(),
        classes.len(),
        points
    );
    println!("  {reachable} reachable free cells");
}

fn list_worlds() -> Result<ExitCode> {
    for name in bundled_names() {
        let w = load_bundled(name).expect("bundled")?;
        println!(
            "{name:<14} {:>5.1} × {:<5.1} m  {:>3} objects",
            w.width as f64 * w.resolution,
            w.height as f64 * w.resolution,
            w.objects.len()
        );
    }
    Ok(ExitCode::SUCCESS)
}
