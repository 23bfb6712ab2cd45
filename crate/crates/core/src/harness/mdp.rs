//! Small tabular MDPs: the value-iteration oracle and the overestimation probe.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::agent::{Agent, Hyperparams, QTable, TargetRule};
use crate::exec::Exec;
use crate::net::{NetworkParams, NetworkSpec};
use crate::replay::{ReplayMemory, Transition};
use crate::state::{StateVector, STATE_DIM};
use crate::{derive_seed, seeded_rng, Error, Result};

pub const VALUE_ITERATION_LIMIT: usize = 100_000;

/// Finite MDP with expected rewards and optional Gaussian reward noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transitions[s * n_actions + a][s']` = P(s' | s, a).
    pub transitions: Vec<Vec<f64>>,
    /// Expected reward of `(s, a)`, same indexing.
    pub rewards: Vec<f64>,
    /// Standard deviation of the sampled reward around its expectation.
    pub reward_noise_std: f64,
    /// Absorbing states; transitions into them end an episode.
    pub terminal: Vec<bool>,
    pub gamma: f64,
}

impl SmallMdp {
    /// Deterministic MDP from a successor table `next[s][a]` and rewards `reward[s][a]`.
    pub fn deterministic(next: &[Vec<usize>], reward: &[Vec<f64>], gamma: f64) -> Result<Self> {
        let n_states = next.len();
        let n_actions = next.first().map_or(0, Vec::len);
        let mut transitions = Vec::new();
        let mut rewards = Vec::new();
        for (row_next, row_r) in next.iter().zip(reward) {
            if row_next.len() != n_actions || row_r.len() != n_actions {
                return Err(Error::Shape("ragged transition or reward table".into()));
            }
            for (&sn, &r) in row_next.iter().zip(row_r) {
                let mut p = vec![0.0; n_states];
                *p.get_mut(sn)
                    .ok_or_else(|| Error::invalid(format!("successor {sn} out of range")))? = 1.0;
                transitions.push(p);
                rewards.push(r);
            }
        }
        let mdp = SmallMdp {
            n_states,
            n_actions,
            transitions,
            rewards,
            reward_noise_std: 0.0,
            terminal: vec![false; n_states],
            gamma,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<()> {
        let pairs = self.n_states * self.n_actions;
        if pairs == 0 || self.transitions.len() != pairs || self.rewards.len() != pairs {
            return Err(Error::Shape(
                "MDP tables do not match n_states x n_actions".into(),
            ));
        }
        if self.terminal.len() != self.n_states {
            return Err(Error::Shape("terminal flags do not match n_states".into()));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.len() != self.n_states
                || row.iter().any(|&p| p < 0.0)
                || (sum - 1.0).abs() > 1e-12
            {
                return Err(Error::invalid(format!(
                    "transition row {i} is not a probability distribution"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid("need 0 <= gamma < 1"));
        }
        if !(self.reward_noise_std >= 0.0) {
            return Err(Error::invalid("reward noise must be non-negative"));
        }
        Ok(())
    }

    fn idx(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    /// One application of the Bellman optimality operator.
    pub fn bellman(&self, q: &QTable) -> QTable {
        let v: Vec<f64> = (0..self.n_states)
            .map(|s| if self.terminal[s] { 0.0 } else { q.max_row(s) })
            .collect();
        let mut out = QTable::zeros(self.n_states, self.n_actions);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let i = self.idx(s, a);
                let ev: f64 = self.transitions[i].iter().zip(&v).map(|(p, v)| p * v).sum();
                out.set(s, a, self.rewards[i] + self.gamma * ev);
            }
        }
        out
    }

    /// Sup-norm Bellman residual of `q`.
    pub fn residual(&self, q: &QTable) -> f64 {
        self.bellman(q).sup_distance(q)
    }

    /// Successor state of a deterministic row (the most likely one otherwise).
    fn successor(&self, s: usize, a: usize) -> usize {
        let row = &self.transitions[self.idx(s, a)];
        crate::agent::argmax(row)
    }
}

/// Iterates the Bellman optimality operator until the result is within `tol`
/// of its fixed point in sup-norm.
pub fn value_iteration(mdp: &SmallMdp, tol: f64) -> Result<QTable> {
    mdp.validate()?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    // ||Q_{k+1} - Q*|| <= gamma / (1 - gamma) * ||Q_{k+1} - Q_k||
    let stop = if mdp.gamma > 0.0 {
        tol * (1.0 - mdp.gamma) / mdp.gamma
    } else {
        f64::INFINITY
    };
    let mut q = QTable::zeros(mdp.n_states, mdp.n_actions);
    for _ in 0..VALUE_ITERATION_LIMIT {
        let next = mdp.bellman(&q);
        let delta = next.sup_distance(&q);
        q = next;
        if delta <= stop {
            return Ok(q);
        }
    }
    Err(Error::NotConverged(VALUE_ITERATION_LIMIT))
}

/// Chain `0 -> 1 -> ... -> n-1` where every action advances one state and the
/// last state is absorbing. Action `a` pays `-0.1 * a` in expectation.
pub fn chain_mdp(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    noise_std: f64,
) -> Result<SmallMdp> {
    if n_states < 2 {
        return Err(Error::invalid("chain needs at least two states"));
    }
    let next: Vec<Vec<usize>> = (0..n_states)
        .map(|s| vec![(s + 1).min(n_states - 1); n_actions])
        .collect();
    let reward: Vec<Vec<f64>> = (0..n_states)
        .map(|s| {
            (0..n_actions)
                .map(|a| {
                    if s + 1 == n_states {
                        0.0
                    } else {
                        -0.1 * a as f64
                    }
                })
                .collect()
        })
        .collect();
    let mut mdp = SmallMdp::deterministic(&next, &reward, gamma)?;
    mdp.terminal[n_states - 1] = true;
    mdp.reward_noise_std = noise_std;
    mdp.validate()?;
    Ok(mdp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub seeds: Vec<u64>,
    /// Gradient steps per seed.
    pub steps: usize,
    pub learning_rate: f64,
    pub target_update: u64,
    pub batch_size: usize,
    /// Replay capacity; a short memory keeps the estimates noisy.
    pub memory: usize,
    /// Fraction of final steps over which `max_a Q(s0, a)` is averaged.
    pub averaging_fraction: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            seeds: (0..5).collect(),
            steps: 20_000,
            learning_rate: 1e-2,
            target_update: 100,
            batch_size: 32,
            memory: 1_000,
            averaging_fraction: 0.25,
        }
    }
}

/// Mean over seeds of `max_a Q(s0, a)` under both rules, and the true value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    pub mean_max_q_vanilla: f64,
    pub mean_max_q_double: f64,
    pub true_max_q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedEstimate {
    pub seed: u64,
    pub vanilla: f64,
    pub double: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    pub result: ProbeResult,
    pub per_seed: Vec<SeedEstimate>,
}

impl ProbeOutcome {
    /// Seeds where the Double-DQN estimate is strictly closer to the truth.
    pub fn double_closer_count(&self) -> usize {
        let truth = self.result.true_max_q;
        self.per_seed
            .iter()
            .filter(|e| (e.double - truth).abs() < (e.vanilla - truth).abs())
            .count()
    }
}

fn one_hot(s: usize) -> StateVector {
    let mut v = [0.0; STATE_DIM];
    v[s] = 1.0;
    StateVector(v)
}

/// Trains linear Q-networks over one-hot state codes under both target rules
/// on the same stream of uniformly drawn `(s, a)` experiences and compares
/// their estimate of `max_a Q(s0, a)` with value iteration.
pub fn overestimation_probe(mdp: &SmallMdp, cfg: &ProbeConfig, exec: Exec) -> Result<ProbeOutcome> {
    mdp.validate()?;
    if mdp.n_states > STATE_DIM {
        return Err(Error::invalid(format!(
            "probe supports at most {STATE_DIM} states"
        )));
    }
    if cfg.seeds.is_empty() || cfg.steps == 0 {
        return Err(Error::invalid("probe needs seeds and steps"));
    }
    let truth = value_iteration(mdp, 1e-10)?.max_row(0);
    let live: Vec<usize> = (0..mdp.n_states).filter(|&s| !mdp.terminal[s]).collect();
    if live.is_empty() {
        return Err(Error::invalid("probe MDP has no non-terminal states"));
    }
    let noise = Normal::new(0.0, mdp.reward_noise_std.max(0.0))
        .map_err(|e| Error::invalid(e.to_string()))?;
    let hyper = Hyperparams {
        discount_factor: mdp.gamma,
        learning_rate: cfg.learning_rate,
        target_update: cfg.target_update,
        batch_size: cfg.batch_size,
        train_start: cfg.batch_size,
        memory: cfg.memory.max(cfg.batch_size),
        ..Hyperparams::default()
    };
    let spec = NetworkSpec::new(vec![STATE_DIM, mdp.n_actions])?;
    let average_from =
        cfg.steps - ((cfg.steps as f64 * cfg.averaging_fraction) as usize).clamp(1, cfg.steps);

    let run_arm = |seed: u64, rule: TargetRule| -> Result<f64> {
        let mut stream = seeded_rng(derive_seed(seed, 0));
        let mut sampler = seeded_rng(derive_seed(seed, 1));
        let mut agent = Agent::from_params(NetworkParams::zeros(&spec), hyper, rule);
        let mut memory = ReplayMemory::new(hyper.memory)?;
        let s0 = one_hot(0);
        let (mut acc, mut count) = (0.0, 0usize);
        let mut step = 0;
        while step < cfg.steps {
            let s = live[stream.gen_range(0..live.len())];
            let a = stream.gen_range(0..mdp.n_actions);
            let sn = mdp.successor(s, a);
            let r = mdp.rewards[mdp.idx(s, a)] + noise.sample(&mut stream);
            memory.push(Transition {
                state: one_hot(s),
                action: a,
                reward: r,
                next_state: one_hot(sn),
                done: mdp.terminal[sn],
            });
            if memory.len() < hyper.train_start {
                continue;
            }
            agent.train_step(&memory, &mut sampler)?;
            if step >= average_from {
                let q = agent.q_values(s0.as_slice())?;
                acc += q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                count += 1;
            }
            step += 1;
        }
        Ok(acc / count as f64)
    };

    let per_seed = exec
        .map(cfg.seeds.clone(), |seed| -> Result<SeedEstimate> {
            Ok(SeedEstimate {
                seed,
                vanilla: run_arm(seed, TargetRule::VanillaMax)?,
                double: run_arm(seed, TargetRule::DoubleQ)?,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let n = per_seed.len() as f64;
    Ok(ProbeOutcome {
        result: ProbeResult {
            mean_max_q_vanilla: per_seed.iter().map(|e| e.vanilla).sum::<f64>() / n,
            mean_max_q_double: per_seed.iter().map(|e| e.double).sum::<f64>() / n,
            true_max_q: truth,
        },
        per_seed,
    })
}
