//! Episode loop, training runs, greedy evaluation and rule comparison.

mod compare;
mod mdp;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use compare::{
    compare_rules, read_comparison_csv, Comparison, ComparisonRow, COMPARISON_WINDOW, SUMMARY_TAIL,
};
pub use mdp::{
    chain_mdp, overestimation_probe, value_iteration, ProbeConfig, ProbeOutcome, ProbeResult,
    SeedEstimate, SmallMdp, VALUE_ITERATION_LIMIT,
};

use crate::agent::{angular_velocity, Agent, Hyperparams, TargetRule, LINEAR_VELOCITY};
use crate::checkpoint::{fmt_f64, Checkpoint, CheckpointMeta};
use crate::exec::Exec;
use crate::net::{NetworkParams, NetworkSpec};
use crate::replay::{ReplayMemory, Transition};
use crate::reward::{step_reward, terminal_reward, Outcome, RewardConfig, RewardInputs};
use crate::state::{goal_distance, heading_error, StateVector};
use crate::world::{
    check_collision, goal_reached, integrate_motion, reset_episode, scan_lidar, Goal, Pose,
    StepCommand, WorldMap,
};
use crate::{derive_seed, seeded_rng, Error, Result, SimRng};

pub const EPISODE_CSV: &str = "episodes.csv";
pub const EPISODE_CSV_HEADER: &str = "episode,steps,total_reward,outcome,epsilon,wall_seconds";
pub const FINAL_CHECKPOINT: &str = "checkpoint_final.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    /// 1-based episode number within the run.
    pub index: u64,
    pub steps: usize,
    pub total_reward: f64,
    pub outcome: Outcome,
    pub epsilon_at_end: f64,
    pub wall_seconds: f64,
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub map: WorldMap,
    /// Where `map` came from; `None` means the built-in arena.
    pub map_path: Option<PathBuf>,
    pub hyper: Hyperparams,
    pub reward: RewardConfig,
    pub rule: TargetRule,
    pub network: NetworkSpec,
    pub episodes: u64,
    pub seed: u64,
    pub dt: f64,
    pub normalize_state: bool,
    /// Write a checkpoint every this many episodes (0: final checkpoint only).
    pub checkpoint_every: u64,
    pub out_dir: Option<PathBuf>,
    /// When false the `wall_seconds` column is written as 0 so logs are byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            map: WorldMap::default(),
            map_path: None,
            hyper: Hyperparams::default(),
            reward: RewardConfig::default(),
            rule: TargetRule::DoubleQ,
            network: NetworkSpec::default(),
            episodes: 2000,
            seed: 0,
            dt: 0.2,
            normalize_state: false,
            checkpoint_every: 0,
            out_dir: None,
            record_wall_time: true,
        }
    }
}

impl RunConfig {
    /// The small-scale training setup: empty 4 m arena, 300 episodes of at most 200 steps.
    pub fn desk_scale(seed: u64) -> Self {
        RunConfig {
            hyper: Hyperparams {
                episode_step: 200,
                ..Hyperparams::default()
            },
            episodes: 300,
            seed,
            ..RunConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.map.validate()?;
        self.hyper.validate()?;
        self.reward.validate()?;
        self.network.validate_q_network()?;
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config("dt must be positive".into()));
        }
        Ok(())
    }

    pub fn env(&self) -> Env {
        Env {
            map: self.map.clone(),
            reward: self.reward,
            dt: self.dt,
            normalize_state: self.normalize_state,
            fixed_goal: None,
        }
    }
}

/// Simulator plus reward and observation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Env {
    pub map: WorldMap,
    pub reward: RewardConfig,
    pub dt: f64,
    pub normalize_state: bool,
    /// Use this goal instead of sampling one on reset.
    pub fixed_goal: Option<Goal>,
}

/// One simulated step as seen by an optional debug trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub pose: Pose,
    pub heading_error: f64,
    pub action: usize,
    pub reward: f64,
    pub outcome: Option<Outcome>,
}

struct Observation {
    raw: StateVector,
    input: StateVector,
}

struct StepResult {
    pose: Pose,
    next: Observation,
    reward: f64,
    outcome: Option<Outcome>,
}

struct Episode {
    pose: Pose,
    goal: Goal,
    initial_distance: f64,
}

impl Env {
    pub fn new(map: WorldMap) -> Self {
        Env {
            map,
            reward: RewardConfig::default(),
            dt: 0.2,
            normalize_state: false,
            fixed_goal: None,
        }
    }

    /// Start pose and goal for a new episode.
    pub fn reset(&self, rng: &mut SimRng) -> Result<(Pose, Goal)> {
        match self.fixed_goal {
            Some(goal) => Ok((self.map.start, goal)),
            None => reset_episode(&self.map, rng),
        }
    }

    fn begin(&self, rng: &mut SimRng) -> Result<Episode> {
        let (pose, goal) = self.reset(rng)?;
        Ok(Episode {
            pose,
            goal,
            initial_distance: goal_distance(pose, goal),
        })
    }

    fn observe(&self, pose: Pose, goal: Goal) -> Result<Observation> {
        let scan = scan_lidar(&self.map, pose);
        // heading is undefined on the goal itself; such states are terminal anyway
        let heading = heading_error(pose, goal).unwrap_or(0.0);
        let raw = StateVector::from_parts(&scan, goal_distance(pose, goal), heading)?;
        let input = if self.normalize_state {
            let b = self.map.bounds;
            let diag = (b.xmax - b.xmin).hypot(b.ymax - b.ymin);
            raw.normalized(self.map.lidar_max_range, diag)
        } else {
            raw
        };
        Ok(Observation { raw, input })
    }

    /// Applies `action`, rescans and scores the step. Collision takes precedence
    /// over goal, goal over timeout.
    fn step(
        &self,
        episode: &Episode,
        current: &Observation,
        action: usize,
        step: usize,
        episode_step: usize,
    ) -> Result<StepResult> {
        let cmd = StepCommand {
            linear_velocity: LINEAR_VELOCITY,
            angular_velocity: angular_velocity(action)?,
            dt: self.dt,
        };
        let pose = integrate_motion(episode.pose, cmd);
        let next = self.observe(pose, episode.goal)?;
        let outcome = if check_collision(next.raw.scan(), self.map.collision_threshold) {
            Some(Outcome::Collision)
        } else if goal_reached(pose, episode.goal, self.map.goal_threshold) {
            Some(Outcome::Goal)
        } else if step >= episode_step {
            Some(Outcome::Timeout)
        } else {
            None
        };
        let reward = match outcome {
            Some(o) => terminal_reward(o, &self.reward),
            None => step_reward(
                &RewardInputs {
                    heading_error: current.raw.heading_error(),
                    action,
                    current_distance: next.raw.goal_distance(),
                    initial_distance: episode.initial_distance,
                },
                &self.reward,
            )?,
        };
        Ok(StepResult {
            pose,
            next,
            reward,
            outcome,
        })
    }
}

/// Runs one learning episode: act, store the transition, train, and decay
/// epsilon at the end.
pub fn run_episode(
    env: &Env,
    agent: &mut Agent,
    memory: &mut ReplayMemory,
    rng: &mut SimRng,
    index: u64,
    mut trace: Option<&mut Vec<StepRecord>>,
) -> Result<EpisodeResult> {
    let started = Instant::now();
    let episode_step = agent.hyper.episode_step;
    let mut episode = env.begin(rng)?;
    let mut obs = env.observe(episode.pose, episode.goal)?;
    let mut total = 0.0;
    let mut steps = 0;
    let mut outcome = Outcome::Timeout;
    for step in 1..=episode_step {
        let action = agent.act(obs.input.as_slice(), rng)?;
        let res = env.step(&episode, &obs, action, step, episode_step)?;
        total += res.reward;
        steps = step;
        if let Some(t) = trace.as_deref_mut() {
            t.push(StepRecord {
                step,
                pose: res.pose,
                heading_error: obs.raw.heading_error(),
                action,
                reward: res.reward,
                outcome: res.outcome,
            });
        }
        memory.push(Transition {
            state: obs.input,
            action,
            reward: res.reward,
            next_state: res.next.input,
            done: res.outcome.is_some(),
        });
        agent.train_step(memory, rng)?;
        episode.pose = res.pose;
        obs = res.next;
        if let Some(o) = res.outcome {
            outcome = o;
            break;
        }
    }
    agent.decay_epsilon();
    Ok(EpisodeResult {
        index,
        steps,
        total_reward: total,
        outcome,
        epsilon_at_end: agent.epsilon,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Greedy rollout with frozen parameters; nothing is stored or learned.
pub fn greedy_episode(
    env: &Env,
    params: &NetworkParams,
    episode_step: usize,
    rng: &mut SimRng,
) -> Result<(Outcome, usize, f64)> {
    let mut episode = env.begin(rng)?;
    let mut obs = env.observe(episode.pose, episode.goal)?;
    let mut total = 0.0;
    for step in 1..=episode_step {
        let action = crate::agent::argmax(&params.forward(obs.input.as_slice())?);
        let res = env.step(&episode, &obs, action, step, episode_step)?;
        total += res.reward;
        if let Some(o) = res.outcome {
            return Ok((o, step, total));
        }
        episode.pose = res.pose;
        obs = res.next;
    }
    Err(Error::invalid("episode_step must be positive"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub success_rate: f64,
    pub mean_reward: f64,
    pub mean_steps: f64,
}

/// Greedy evaluation over `episodes` goals; episode `i` draws its goal from
/// `derive_seed(seed, i)`, so the result does not depend on `exec`.
pub fn evaluate(
    params: &NetworkParams,
    env: &Env,
    episode_step: usize,
    episodes: usize,
    seed: u64,
    exec: Exec,
) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::invalid("evaluation needs at least one episode"));
    }
    let runs = exec.map_range(episodes, |i| {
        greedy_episode(
            env,
            params,
            episode_step,
            &mut seeded_rng(derive_seed(seed, i as u64)),
        )
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let n = episodes as f64;
    let goals = runs.iter().filter(|r| r.0 == Outcome::Goal).count();
    Ok(EvalSummary {
        success_rate: goals as f64 / n,
        mean_reward: runs.iter().map(|r| r.2).sum::<f64>() / n,
        mean_steps: runs.iter().map(|r| r.1 as f64).sum::<f64>() / n,
    })
}

/// One persistent agent, replay memory and generator across episodes.
pub struct Trainer {
    pub cfg: RunConfig,
    pub env: Env,
    pub agent: Agent,
    pub memory: ReplayMemory,
    rng: SimRng,
    episodes_done: u64,
    results: Vec<EpisodeResult>,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded_rng(cfg.seed);
        let agent = Agent::new(&cfg.network, cfg.hyper, cfg.rule, &mut rng)?;
        Ok(Trainer {
            env: cfg.env(),
            memory: ReplayMemory::new(cfg.hyper.memory)?,
            agent,
            rng,
            episodes_done: 0,
            results: Vec::new(),
            cfg,
        })
    }

    /// Resumes from a checkpoint with an empty replay memory; the target network
    /// restarts as a copy of the stored parameters.
    pub fn from_checkpoint(cfg: RunConfig, ckpt: Checkpoint) -> Result<Self> {
        cfg.validate()?;
        if ckpt.params.spec() != cfg.network {
            return Err(Error::Shape(format!(
                "checkpoint layers {:?} do not match {:?}",
                ckpt.params.spec().layer_sizes,
                cfg.network.layer_sizes
            )));
        }
        let mut agent = Agent::from_params(ckpt.params, cfg.hyper, cfg.rule);
        agent.opt = ckpt.optimizer;
        agent.epsilon = ckpt.meta.epsilon;
        agent.global_step = ckpt.meta.global_step;
        Ok(Trainer {
            env: cfg.env(),
            memory: ReplayMemory::new(cfg.hyper.memory)?,
            agent,
            rng: seeded_rng(derive_seed(cfg.seed, ckpt.meta.episodes)),
            episodes_done: ckpt.meta.episodes,
            results: Vec::new(),
            cfg,
        })
    }

    pub fn episodes_done(&self) -> u64 {
        self.episodes_done
    }

    pub fn results(&self) -> &[EpisodeResult] {
        &self.results
    }

    pub fn into_results(self) -> Vec<EpisodeResult> {
        self.results
    }

    pub fn run_episode(&mut self, trace: Option<&mut Vec<StepRecord>>) -> Result<&EpisodeResult> {
        let index = self.episodes_done + 1;
        let mut res = run_episode(
            &self.env,
            &mut self.agent,
            &mut self.memory,
            &mut self.rng,
            index,
            trace,
        )?;
        if !self.cfg.record_wall_time {
            res.wall_seconds = 0.0;
        }
        self.episodes_done = index;
        self.results.push(res);
        Ok(self.results.last().unwrap())
    }

    /// Runs `n` more episodes, calling `on_episode` after each.
    pub fn run(
        &mut self,
        n: u64,
        mut on_episode: impl FnMut(&Trainer) -> Result<()>,
    ) -> Result<()> {
        for _ in 0..n {
            self.run_episode(None)?;
            on_episode(self)?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.agent.online.clone(),
            optimizer: self.agent.opt.clone(),
            meta: CheckpointMeta {
                seed: self.cfg.seed,
                episodes: self.episodes_done,
                global_step: self.agent.global_step,
                epsilon: self.agent.epsilon,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub results: Vec<EpisodeResult>,
    pub final_params: NetworkParams,
    /// Files written, in creation order.
    pub written: Vec<PathBuf>,
}

/// Full training run. With an output directory, writes `episodes.csv`,
/// periodic `checkpoint_epNNNNN.txt` files and `checkpoint_final.txt`.
pub fn train_run(cfg: &RunConfig) -> Result<TrainReport> {
    let mut trainer = Trainer::new(cfg.clone())?;
    let mut written = Vec::new();
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let every = cfg.checkpoint_every;
    trainer.run(cfg.episodes, |t| {
        if let (Some(dir), true) = (&cfg.out_dir, every > 0) {
            let n = t.episodes_done();
            if n % every == 0 && n < cfg.episodes {
                let path = dir.join(format!("checkpoint_ep{n:05}.txt"));
                t.checkpoint().save(&path)?;
                written.push(path);
            }
        }
        Ok(())
    })?;
    if let Some(dir) = &cfg.out_dir {
        let csv = dir.join(EPISODE_CSV);
        write_episode_csv(&csv, trainer.results())?;
        written.push(csv);
        let path = dir.join(FINAL_CHECKPOINT);
        trainer.checkpoint().save(&path)?;
        written.push(path);
    }
    let final_params = trainer.agent.online.clone();
    Ok(TrainReport {
        results: trainer.into_results(),
        final_params,
        written,
    })
}

/// Runs several independent configurations, fanned out by `exec`.
pub fn train_many(cfgs: Vec<RunConfig>, exec: Exec) -> Vec<Result<TrainReport>> {
    exec.map(cfgs, |cfg| train_run(&cfg))
}

pub fn episode_csv(results: &[EpisodeResult]) -> String {
    let mut out = String::from(EPISODE_CSV_HEADER);
    out.push('\n');
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.index,
            r.steps,
            fmt_f64(r.total_reward),
            r.outcome,
            fmt_f64(r.epsilon_at_end),
            fmt_f64(r.wall_seconds)
        );
    }
    out
}

pub fn write_episode_csv(path: &Path, results: &[EpisodeResult]) -> Result<()> {
    std::fs::write(path, episode_csv(results)).map_err(|e| Error::io(path, e))
}

/// Parses an episode CSV; columns are located by header name.
pub fn read_episode_csv(text: &str) -> Result<Vec<EpisodeResult>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::invalid("empty CSV"))?
        .split(',')
        .map(str::trim)
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::invalid(format!("CSV is missing column `{name}`")))
    };
    let idx = [
        col("episode")?,
        col("steps")?,
        col("total_reward")?,
        col("outcome")?,
        col("epsilon")?,
        col("wall_seconds")?,
    ];
    lines
        .enumerate()
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != header.len() {
                return Err(Error::invalid(format!(
                    "row {} has {} cells",
                    i + 1,
                    cells.len()
                )));
            }
            let num = |j: usize| {
                cells[j].parse::<f64>().map_err(|_| {
                    Error::invalid(format!("row {}: bad number {:?}", i + 1, cells[j]))
                })
            };
            let int = |j: usize| {
                cells[j].parse::<u64>().map_err(|_| {
                    Error::invalid(format!("row {}: bad integer {:?}", i + 1, cells[j]))
                })
            };
            Ok(EpisodeResult {
                index: int(idx[0])?,
                steps: int(idx[1])? as usize,
                total_reward: num(idx[2])?,
                outcome: cells[idx[3]].parse()?,
                epsilon_at_end: num(idx[4])?,
                wall_seconds: num(idx[5])?,
            })
        })
        .collect()
}

/// Trailing mean: element `i` averages `xs[max(0, i + 1 - window) ..= i]`.
pub fn moving_average(xs: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::invalid("window must be at least 1"));
    }
    if xs.is_empty() {
        return Err(Error::invalid("moving average of an empty sequence"));
    }
    let mut out = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        let lo = (i + 1).saturating_sub(window);
        let slice = &xs[lo..=i];
        out.push(slice.iter().sum::<f64>() / slice.len() as f64);
    }
    Ok(out)
}
