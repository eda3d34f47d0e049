//! `toc` experiment runner: config resolution, seed sweeps, evaluation of
//! saved runs, plots and gradient checks.

pub mod config;
pub mod plot;
pub mod run;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;
use toc_core::agent::{gradcheck_suite, AgentState};
use toc_core::env::Task;
use toc_core::metrics::{Phase, WindowStats};

pub use config::{ConfigError, Objects, Profile, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "toc", version, about = "Touch-based curiosity experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every variant x seed of a config.
    Run(RunArgs),
    /// Evaluate a saved checkpoint with the deterministic policy.
    Eval(EvalArgs),
    /// Plot a metric from run logs as mean ± std across seeds.
    Plot(PlotArgs),
    /// Finite-difference check of every network.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// `key = value` config file; missing keys take profile defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub task: Option<String>,
    /// A variant name, `sac`, a comma list or `all`.
    #[arg(long)]
    pub variant: Option<String>,
    /// Run seeds 0..N.
    #[arg(long, conflicts_with = "seed")]
    pub seeds: Option<u64>,
    /// Run this single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lambda: Option<String>,
    /// Output directory under the output root.
    #[arg(long)]
    pub output: Option<String>,
    /// Any config key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Parallel worker processes.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Run the single variant and seed of `--config` without touching the
    /// sweep directory.
    #[arg(long, hide = true)]
    pub worker: bool,
}

impl RunArgs {
    /// Flag overrides as (flag, key, value), in a fixed order.
    pub fn overrides(&self) -> Result<Vec<(String, String, String)>, CliError> {
        let mut out = Vec::new();
        let mut push = |flag: &str, key: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((flag.to_string(), key.to_string(), v));
            }
        };
        push("profile", "profile", self.profile.clone());
        push("task", "task", self.task.clone());
        push("variant", "variant", self.variant.clone());
        push(
            "seeds",
            "seeds",
            self.seeds.map(|n| (0..n).map(|s| s.to_string()).collect::<Vec<_>>().join(", ")),
        );
        push("seed", "seeds", self.seed.map(|s| s.to_string()));
        push("lambda", "lambda", self.lambda.clone());
        push("output", "output_dir", self.output.clone());
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            out.push(("set".to_string(), k.trim().to_string(), v.trim().to_string()));
        }
        if matches!(self.seeds, Some(0)) {
            return Err(CliError::Config("--seeds must be positive".into()));
        }
        Ok(out)
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let overrides = self.overrides()?;
        for (flag, key, _) in &overrides {
            if !config::KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!("--{flag}: unknown key `{key}`")));
            }
        }
        Ok(match &self.config {
            Some(path) => RunConfig::from_file(path, &overrides)?,
            None => RunConfig::resolve("", &overrides)?,
        })
    }
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    /// Defaults to the run's evaluation episode count.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// cube, train-shapes or eval-shapes; defaults to the training objects.
    #[arg(long)]
    pub objects: Option<String>,
    /// Shape bank seed when `--objects` selects a bank.
    #[arg(long, default_value_t = 0)]
    pub shape_seed: u64,
}

#[derive(Debug, clap::Args)]
pub struct PlotArgs {
    /// Glob over run logs, e.g. `runs/pushing/*/seed-*/log.csv`.
    pub pattern: String,
    #[arg(long)]
    pub metric: String,
    /// Comma list of phases to include.
    #[arg(long, default_value = "exploration,adaptation")]
    pub phase: String,
    /// Defaults to `<metric>.svg` under the output root.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "pushing")]
    pub task: String,
    #[arg(long, default_value_t = 42)]
    pub image_size: usize,
    /// Check seeds 0..N.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Coordinates sampled per network; 0 checks all of them.
    #[arg(long, default_value_t = 200)]
    pub max_coordinates: usize,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(args) => {
            let config = args.resolve()?;
            let root = run::output_root();
            if args.worker {
                let (&l, &s) = (&config.variants[0], &config.seeds[0]);
                if config.variants.len() != 1 || config.seeds.len() != 1 {
                    return Err(CliError::Config("a worker takes exactly one variant and seed".into()));
                }
                run::run_single(&root, &config, l, s)?;
            } else {
                let exe = std::env::current_exe().ok();
                let dirs = run::run_all(&root, &config, args.jobs, exe.as_deref())?;
                for d in dirs {
                    println!("{}", d.display());
                }
            }
            Ok(())
        }
        Command::Eval(args) => {
            let stats = evaluate_checkpoint(&args)?;
            print!("{}", format_stats(&stats));
            Ok(())
        }
        Command::Plot(args) => {
            let phases = args
                .phase
                .split(',')
                .map(|p| p.trim().parse::<Phase>().map_err(|e| CliError::Config(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            let paths = plot::expand_glob(&args.pattern)?;
            let rows = plot::read_rows(&paths)?;
            let series = plot::aggregate(&rows, &args.metric, &phases)?;
            let out = args
                .out
                .unwrap_or_else(|| run::output_root().join(format!("{}.svg", args.metric)));
            std::fs::write(&out, plot::render_svg(&series, &args.metric))
                .map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
            println!("{}", out.display());
            Ok(())
        }
        Command::Gradcheck(args) => {
            let task: Task = args.task.parse().map_err(|e| CliError::Config(format!("{e}")))?;
            let max = (args.max_coordinates > 0).then_some(args.max_coordinates);
            let mut failed = 0;
            for seed in 0..args.seeds {
                let reports = gradcheck_suite(task, args.image_size, seed, args.tolerance, max)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                for (name, r) in reports {
                    let verdict = if r.passed { "ok" } else { "FAIL" };
                    println!(
                        "seed {seed} {name:<10} {verdict:<4} max_rel_error {:.3e} ({} coordinates, {} kinks skipped)",
                        r.max_rel_error, r.checked, r.skipped_kinks
                    );
                    failed += usize::from(!r.passed);
                }
            }
            if failed > 0 {
                return Err(CliError::Runtime(format!("{failed} gradient checks failed")));
            }
            Ok(())
        }
    }
}

pub fn evaluate_checkpoint(args: &EvalArgs) -> Result<WindowStats, CliError> {
    let state = load_state(&args.checkpoint)?;
    let mut env = state.config.env;
    if let Some(o) = &args.objects {
        let objects: Objects = o.parse().map_err(CliError::Config)?;
        env.objects = objects.source(args.shape_seed);
    }
    let episodes = args.episodes.unwrap_or(state.config.eval_episodes).max(1);
    let summaries = state
        .evaluate_on(&env, episodes)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(WindowStats::of(&summaries, env.horizon))
}

pub fn load_state(path: &Path) -> Result<AgentState, CliError> {
    AgentState::load(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn format_stats(w: &WindowStats) -> String {
    let fields = [
        ("episodes", Some(w.episodes as f64)),
        ("extrinsic_return", w.extrinsic_return),
        ("success", w.success),
        ("episode_steps", w.episode_steps),
        ("touch_var", w.touch_var),
        ("touch_events", w.touch_events),
        ("obj_move", w.obj_move),
    ];
    fields
        .iter()
        .map(|(k, v)| format!("{k} = {}\n", v.map_or("none".to_string(), |v| v.to_string())))
        .collect()
}
