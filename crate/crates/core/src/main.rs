use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ddqn_nav::agent::TargetRule;
use ddqn_nav::checkpoint::{fmt_f64, Checkpoint};
use ddqn_nav::config::{effective_config, load_config, EFFECTIVE_CONFIG};
use ddqn_nav::exec::Exec;
use ddqn_nav::gradcheck::{self, Backward};
use ddqn_nav::harness::{compare_rules, evaluate, train_run, RunConfig};
use ddqn_nav::net::NetworkSpec;
use ddqn_nav::plot;
use ddqn_nav::reward::Outcome;
use ddqn_nav::world::WorldMap;
use ddqn_nav::Error;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ddqn-nav",
    version,
    about = "DQN / Double-DQN local path planning workbench"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write episodes.csv, checkpoints and effective_config.
    Train(Common),
    /// Greedy evaluation of a checkpoint.
    Eval(EvalArgs),
    /// Train both target rules with identical seeds and chart them.
    Compare(Common),
    /// Finite-difference check of the network gradients.
    Gradcheck(GradcheckArgs),
    /// Chart an episode CSV as SVG.
    Plot(PlotArgs),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long, value_parser = ["dqn", "ddqn"])]
    rule: Option<String>,
    #[arg(long)]
    episodes: Option<u64>,
    /// Write wall_seconds as 0 so every output byte is reproducible.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 50)]
    episodes: usize,
    #[command(flatten)]
    common: EvalCommon,
}

#[derive(Args)]
struct EvalCommon {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    map: Option<PathBuf>,
    /// Step limit per evaluation episode (defaults to the config's episode_step).
    #[arg(long)]
    episode_step: Option<usize>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = gradcheck::DEFAULT_NETS)]
    nets: usize,
    #[arg(long, hide = true)]
    corrupt_backward: bool,
}

#[derive(Args)]
struct PlotArgs {
    csv: PathBuf,
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_RUNTIME,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Compare(args) => cmd_compare(&args),
        Command::Gradcheck(args) => cmd_gradcheck(&args),
        Command::Plot(args) => cmd_plot(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn base_config(
    config: Option<&Path>,
    seed: Option<u64>,
    map: Option<&Path>,
) -> Result<RunConfig, Failure> {
    let mut cfg = match config {
        Some(path) => load_config(path).map_err(Failure::usage)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(path) = map {
        cfg.map = WorldMap::load(path).map_err(Failure::usage)?;
        cfg.map_path = Some(path.to_path_buf());
    }
    Ok(cfg)
}

fn run_config(args: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = base_config(args.config.as_deref(), args.seed, args.map.as_deref())?;
    if let Some(out) = &args.out {
        cfg.out_dir = Some(out.clone());
    }
    if cfg.out_dir.is_none() {
        cfg.out_dir = Some(PathBuf::from("out"));
    }
    if let Some(rule) = &args.rule {
        cfg.rule = rule.parse::<TargetRule>().map_err(Failure::usage)?;
    }
    if let Some(n) = args.episodes {
        cfg.episodes = n;
    }
    if args.deterministic {
        cfg.record_wall_time = false;
    }
    cfg.validate().map_err(Failure::usage)?;
    Ok(cfg)
}

fn cmd_train(args: &Common) -> CmdResult {
    let cfg = run_config(args)?;
    let out = cfg.out_dir.clone().unwrap();
    std::fs::create_dir_all(&out).map_err(|e| {
        Failure::runtime(Error::Io {
            path: out.clone(),
            source: e,
        })
    })?;
    let echo = out.join(EFFECTIVE_CONFIG);
    std::fs::write(&echo, effective_config(&cfg)).map_err(|e| {
        Failure::runtime(Error::Io {
            path: echo,
            source: e,
        })
    })?;
    let report = train_run(&cfg).map_err(Failure::runtime)?;
    let goals = report
        .results
        .iter()
        .filter(|r| r.outcome == Outcome::Goal)
        .count();
    let tail = report.results.len().saturating_sub(100);
    let rewards: Vec<f64> = report.results[tail..]
        .iter()
        .map(|r| r.total_reward)
        .collect();
    println!(
        "episodes={} goals={} final100_mean_reward={} rule={} out={}",
        report.results.len(),
        goals,
        fmt_f64(rewards.iter().sum::<f64>() / rewards.len().max(1) as f64),
        cfg.rule,
        out.display()
    );
    Ok(0)
}

fn cmd_eval(args: &EvalArgs) -> CmdResult {
    if args.episodes == 0 {
        return Err(Failure::usage("--episodes must be at least 1"));
    }
    let c = &args.common;
    let cfg = base_config(c.config.as_deref(), c.seed, c.map.as_deref())?;
    cfg.map.validate().map_err(Failure::usage)?;
    let ckpt = Checkpoint::load_for(&args.checkpoint, &NetworkSpec::default())
        .map_err(|e| Failure::usage(format!("{}: {e}", args.checkpoint.display())))?;
    let episode_step = c.episode_step.unwrap_or(cfg.hyper.episode_step);
    if episode_step == 0 {
        return Err(Failure::usage("--episode-step must be at least 1"));
    }
    let summary = evaluate(
        &ckpt.params,
        &cfg.env(),
        episode_step,
        args.episodes,
        cfg.seed,
        Exec::default(),
    )
    .map_err(Failure::runtime)?;
    println!(
        "success_rate={} mean_reward={} mean_steps={}",
        fmt_f64(summary.success_rate),
        fmt_f64(summary.mean_reward),
        fmt_f64(summary.mean_steps)
    );
    Ok(0)
}

fn cmd_compare(args: &Common) -> CmdResult {
    let cfg = run_config(args)?;
    let out = cfg.out_dir.clone().unwrap();
    let cmp = compare_rules(&cfg, Exec::default()).map_err(Failure::runtime)?;
    std::fs::create_dir_all(&out).map_err(|e| {
        Failure::runtime(Error::Io {
            path: out.clone(),
            source: e,
        })
    })?;
    for (name, body) in [
        ("comparison.csv", cmp.to_csv()),
        ("comparison.svg", plot::comparison_chart(&cmp.rows).to_svg()),
    ] {
        let path = out.join(name);
        std::fs::write(&path, body).map_err(|e| Failure::runtime(Error::Io { path, source: e }))?;
    }
    println!(
        "final100_mean_dqn={} final100_mean_ddqn={} ddqn_ge_dqn={}",
        fmt_f64(cmp.final_mean_vanilla),
        fmt_f64(cmp.final_mean_double),
        cmp.double_at_least_vanilla()
    );
    Ok(0)
}

fn cmd_gradcheck(args: &GradcheckArgs) -> CmdResult {
    if args.nets == 0 {
        return Err(Failure::usage("--nets must be at least 1"));
    }
    let mode = if args.corrupt_backward {
        Backward::Corrupted
    } else {
        Backward::Exact
    };
    let report = gradcheck::gradcheck_suite(
        &NetworkSpec::default(),
        args.seed,
        args.nets,
        Exec::default(),
        mode,
    )
    .map_err(Failure::runtime)?;
    println!("max_rel_err={:e}", report.max_rel_err);
    Ok(if report.passed() {
        0
    } else {
        EXIT_CHECK_FAILED
    })
}

fn cmd_plot(args: &PlotArgs) -> CmdResult {
    let text = std::fs::read_to_string(&args.csv).map_err(|e| {
        Failure::usage(Error::Io {
            path: args.csv.clone(),
            source: e,
        })
    })?;
    let chart = plot::episode_chart(&text)
        .map_err(|e| Failure::usage(format!("{}: {e}", args.csv.display())))?;
    std::fs::write(&args.out, chart.to_svg()).map_err(|e| {
        Failure::runtime(Error::Io {
            path: args.out.clone(),
            source: e,
        })
    })?;
    Ok(0)
}
