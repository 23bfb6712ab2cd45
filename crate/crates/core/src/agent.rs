//! Epsilon-greedy Q-learning agent with DQN and Double-DQN targets.

use rand::Rng;

use crate::net::{rmsprop_step, NetworkParams, NetworkSpec, OptimizerState, RmsProp};
use crate::replay::{ReplayMemory, Transition};
use crate::reward::NUM_ACTIONS;
use crate::{Error, Result, SimRng};

/// Constant forward speed, m/s.
pub const LINEAR_VELOCITY: f64 = 0.15;

/// Angular velocity (rad/s) for each action index.
pub const ANGULAR_VELOCITIES: [f64; NUM_ACTIONS] = [-1.5, -0.75, 0.0, 0.75, 1.5];

pub fn angular_velocity(action: usize) -> Result<f64> {
    ANGULAR_VELOCITIES
        .get(action)
        .copied()
        .ok_or_else(|| Error::invalid(format!("action {action} out of range")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub episode_step: usize,
    pub target_update: u64,
    pub discount_factor: f64,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    pub batch_size: usize,
    pub train_start: usize,
    pub memory: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            episode_step: 500,
            target_update: 2000,
            discount_factor: 0.99,
            learning_rate: 0.00025,
            epsilon: 1.0,
            epsilon_decay: 0.99,
            epsilon_min: 0.05,
            batch_size: 64,
            train_start: 64,
            memory: 1_000_000,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.episode_step == 0 {
            return bad("episode_step must be positive");
        }
        if self.target_update == 0 {
            return bad("target_update must be positive");
        }
        if !(0.0 <= self.epsilon_min && self.epsilon_min <= self.epsilon && self.epsilon <= 1.0) {
            return bad("need 0 <= epsilon_min <= epsilon <= 1");
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return bad("need 0 < epsilon_decay <= 1");
        }
        if !(0.0..1.0).contains(&self.discount_factor) {
            return bad("need 0 <= discount_factor < 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.batch_size > 0
            && self.batch_size <= self.train_start
            && self.train_start <= self.memory)
        {
            return bad("need 0 < batch_size <= train_start <= memory");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TargetRule {
    /// `r + gamma * max_a Q_target(s', a)`.
    VanillaMax,
    /// `r + gamma * Q_target(s', argmax_a Q_online(s', a))`.
    DoubleQ,
}

impl TargetRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            TargetRule::VanillaMax => "dqn",
            TargetRule::DoubleQ => "ddqn",
        }
    }
}

impl std::str::FromStr for TargetRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dqn" => Ok(TargetRule::VanillaMax),
            "ddqn" => Ok(TargetRule::DoubleQ),
            other => Err(Error::Config(format!(
                "unknown rule `{other}` (expected dqn or ddqn)"
            ))),
        }
    }
}

impl std::fmt::Display for TargetRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Index of the largest value, ties to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Uniform random action with probability `epsilon`, otherwise the greedy one.
pub fn select_action(q: &[f64], epsilon: f64, rng: &mut SimRng) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q.len())
    } else {
        argmax(q)
    }
}

/// Bellman targets for a batch under `rule`.
pub fn compute_targets(
    batch: &[&Transition],
    online: &NetworkParams,
    target: &NetworkParams,
    gamma: f64,
    rule: TargetRule,
) -> Result<Vec<f64>> {
    batch
        .iter()
        .map(|t| {
            if t.done {
                return Ok(t.reward);
            }
            let next = t.next_state.as_slice();
            let q_target = target.forward(next)?;
            Ok(t.reward + gamma * bootstrap_value(&q_target, || online.forward(next), rule)?)
        })
        .collect()
}

/// Value of the next state used in the target: the target network's maximum,
/// or its value at the online network's greedy action.
pub fn bootstrap_value(
    q_target: &[f64],
    q_online: impl FnOnce() -> Result<Vec<f64>>,
    rule: TargetRule,
) -> Result<f64> {
    Ok(match rule {
        TargetRule::VanillaMax => q_target[argmax(q_target)],
        TargetRule::DoubleQ => q_target[argmax(&q_online()?)],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainOutcome {
    Skipped,
    Trained { loss: f64 },
}

/// Online/target networks, optimizer and exploration state.
#[derive(Debug, Clone)]
pub struct Agent {
    pub online: NetworkParams,
    pub target: NetworkParams,
    pub opt: OptimizerState,
    pub epsilon: f64,
    pub global_step: u64,
    pub rule: TargetRule,
    pub hyper: Hyperparams,
    pub rms: RmsProp,
}

impl Agent {
    pub fn new(
        spec: &NetworkSpec,
        hyper: Hyperparams,
        rule: TargetRule,
        rng: &mut SimRng,
    ) -> Result<Self> {
        hyper.validate()?;
        let online = NetworkParams::init(spec, rng)?;
        Ok(Self::from_params(online, hyper, rule))
    }

    /// Agent whose target network starts as a copy of `online`.
    pub fn from_params(online: NetworkParams, hyper: Hyperparams, rule: TargetRule) -> Self {
        Agent {
            target: online.clone(),
            opt: OptimizerState::new(&online),
            online,
            epsilon: hyper.epsilon,
            global_step: 0,
            rule,
            hyper,
            rms: RmsProp::default(),
        }
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.online.forward(state)
    }

    pub fn act(&self, state: &[f64], rng: &mut SimRng) -> Result<usize> {
        Ok(select_action(&self.q_values(state)?, self.epsilon, rng))
    }

    /// One gradient step on a sampled batch once the memory holds `train_start` items.
    pub fn train_step(&mut self, mem: &ReplayMemory, rng: &mut SimRng) -> Result<TrainOutcome> {
        if mem.len() < self.hyper.train_start {
            return Ok(TrainOutcome::Skipped);
        }
        let batch = mem.sample_uniform(self.hyper.batch_size, rng)?;
        let loss = self.train_on(&batch)?;
        Ok(TrainOutcome::Trained { loss })
    }

    /// Gradient step on an explicit batch; advances `global_step` and syncs the
    /// target network every `target_update` steps.
    pub fn train_on(&mut self, batch: &[&Transition]) -> Result<f64> {
        let targets = compute_targets(
            batch,
            &self.online,
            &self.target,
            self.hyper.discount_factor,
            self.rule,
        )?;
        let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
        let (loss, grads) = self.online.backward(&states, &actions, &targets)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("TD loss {loss}")));
        }
        rmsprop_step(
            &mut self.online,
            &grads,
            &mut self.opt,
            self.hyper.learning_rate,
            self.rms,
        )?;
        self.global_step += 1;
        if self.global_step.is_multiple_of(self.hyper.target_update) {
            self.sync_target();
        }
        Ok(loss)
    }

    pub fn sync_target(&mut self) {
        self.target.clone_from(&self.online);
    }

    pub fn decay_epsilon(&mut self) {
        self.epsilon = next_epsilon(self.epsilon, &self.hyper);
    }
}

/// `max(epsilon_min, epsilon * epsilon_decay)`.
pub fn next_epsilon(epsilon: f64, hyper: &Hyperparams) -> f64 {
    (epsilon * hyper.epsilon_decay).max(hyper.epsilon_min)
}

/// Dense state-action table for the tabular update.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        QTable {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn max_row(&self, s: usize) -> f64 {
        self.row(s)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest absolute entrywise difference.
    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `Q(s,a) <- Q(s,a) + alpha [r + gamma max_a' Q(s',a') - Q(s,a)]`.
pub fn tabular_q_update(
    q: &mut QTable,
    s: usize,
    a: usize,
    r: f64,
    s_next: usize,
    alpha: f64,
    gamma: f64,
) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    if s >= q.n_states || s_next >= q.n_states || a >= q.n_actions {
        return Err(Error::invalid("state or action index out of range"));
    }
    let old = q.get(s, a);
    let td = r + gamma * q.max_row(s_next) - old;
    q.set(s, a, old + alpha * td);
    Ok(())
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::net::Layer;
    use crate::seeded_rng;
    use crate::state::{StateVector, STATE_DIM};

    /// Network that ignores its input and outputs `values`.
    fn constant_net(values: &[f64]) -> NetworkParams {
        NetworkParams {
            layers: vec![Layer {
                inputs: STATE_DIM,
                outputs: values.len(),
                weights: vec![0.0; STATE_DIM * values.len()],
                bias: values.to_vec(),
            }],
        }
    }

    fn transition(reward: f64, done: bool) -> Transition {
        Transition {
            state: StateVector([0.0; STATE_DIM]),
            action: 0,
            reward,
            next_state: StateVector([0.0; STATE_DIM]),
            done,
        }
    }

    #[test]
    fn action_table_is_antisymmetric() {
        assert_eq!(ANGULAR_VELOCITIES[2], 0.0);
        for i in 0..NUM_ACTIONS {
            assert_eq!(
                ANGULAR_VELOCITIES[i],
                -ANGULAR_VELOCITIES[NUM_ACTIONS - 1 - i]
            );
        }
        assert!(angular_velocity(5).is_err());
    }

    #[test]
    fn table_defaults() {
        let h = Hyperparams::default();
        assert_eq!(h.target_update, 2000);
        assert_eq!(h.discount_factor, 0.99);
        assert_eq!(h.learning_rate, 0.00025);
        assert_eq!(
            (h.epsilon, h.epsilon_decay, h.epsilon_min),
            (1.0, 0.99, 0.05)
        );
        assert_eq!((h.batch_size, h.train_start, h.memory), (64, 64, 1_000_000));
        assert_eq!(h.episode_step, 500);
        assert!(h.validate().is_ok());
        let bad = Hyperparams {
            batch_size: 128,
            ..h
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn greedy_selection_and_ties() {
        let mut rng = seeded_rng(0);
        assert_eq!(select_action(&[1.0, 5.0, 2.0, 0.0, 3.0], 0.0, &mut rng), 1);
        assert_eq!(select_action(&[2.0, 7.0, 7.0, 1.0, 0.0], 0.0, &mut rng), 1);
    }

    #[test]
    fn forced_target_example() {
        let target = constant_net(&[5.0, 0.0, 7.0]);
        let online = constant_net(&[1.0, 3.0, 2.0]);
        let t = transition(1.0, false);
        let v = compute_targets(&[&t], &online, &target, 0.99, TargetRule::VanillaMax).unwrap();
        assert_abs_diff_eq!(v[0], 7.93, epsilon = 1e-12);
        let d = compute_targets(&[&t], &online, &target, 0.99, TargetRule::DoubleQ).unwrap();
        assert_abs_diff_eq!(d[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn terminal_and_undiscounted_targets() {
        let target = constant_net(&[5.0, 0.0, 7.0]);
        let online = constant_net(&[1.0, 3.0, 2.0]);
        let done = transition(-200.0, true);
        let live = transition(3.0, false);
        for rule in [TargetRule::VanillaMax, TargetRule::DoubleQ] {
            assert_eq!(
                compute_targets(&[&done], &online, &target, 0.99, rule).unwrap(),
                vec![-200.0]
            );
            assert_eq!(
                compute_targets(&[&live], &online, &target, 0.0, rule).unwrap(),
                vec![3.0]
            );
        }
    }

    #[test]
    fn epsilon_schedule() {
        let h = Hyperparams::default();
        assert_eq!(next_epsilon(1.0, &h), 0.99);
        assert_eq!(next_epsilon(0.05, &h), 0.05);
        let mut e = 1.0;
        for _ in 0..300 {
            let n = next_epsilon(e, &h);
            assert!(n <= e && n >= h.epsilon_min);
            e = n;
        }
        assert!(0.99f64.powi(300) < 0.05);
        assert_eq!(e, 0.05);
    }

    #[test]
    fn tabular_examples() {
        let mut q = QTable::zeros(2, 2);
        tabular_q_update(&mut q, 0, 0, 1.0, 1, 0.5, 0.99).unwrap();
        assert_eq!(q.get(0, 0), 0.5);

        let mut q = QTable::zeros(2, 2);
        q.set(0, 0, 1.0);
        q.set(1, 0, 1.0);
        tabular_q_update(&mut q, 0, 0, 0.0, 1, 0.1, 0.99).unwrap();
        assert_abs_diff_eq!(q.get(0, 0), 0.999, epsilon = 1e-15);

        let before = q.clone();
        tabular_q_update(&mut q, 0, 1, 5.0, 1, 0.0, 0.99).unwrap();
        assert_eq!(q, before);
        assert!(tabular_q_update(&mut q, 0, 1, 5.0, 1, 1.5, 0.99).is_err());
    }

    #[test]
    fn train_start_boundary_and_sync() {
        let hyper = Hyperparams {
            target_update: 2,
            ..Hyperparams::default()
        };
        let mut rng = seeded_rng(3);
        let mut agent = Agent::new(
            &NetworkSpec::default(),
            hyper,
            TargetRule::DoubleQ,
            &mut rng,
        )
        .unwrap();
        let mut mem = ReplayMemory::new(100).unwrap();
        for i in 0..63 {
            mem.push(transition(i as f64, i % 2 == 0));
        }
        let before = agent.online.clone();
        assert_eq!(
            agent.train_step(&mem, &mut rng).unwrap(),
            TrainOutcome::Skipped
        );
        assert_eq!(agent.online, before);

        mem.push(transition(1.0, false));
        assert!(matches!(
            agent.train_step(&mem, &mut rng).unwrap(),
            TrainOutcome::Trained { .. }
        ));
        assert_ne!(agent.online, before);
        assert_eq!(agent.target, before);
        agent.train_step(&mem, &mut rng).unwrap();
        assert_eq!(agent.global_step, 2);
        assert_eq!(agent.target, agent.online);
    }

    #[test]
    fn sync_semantics() {
        let mut rng = seeded_rng(8);
        let mut agent = Agent::new(
            &NetworkSpec::default(),
            Hyperparams::default(),
            TargetRule::VanillaMax,
            &mut rng,
        )
        .unwrap();
        agent.online.layers[0].weights[0] += 0.5;
        agent.sync_target();
        let x = [0.4; STATE_DIM];
        assert_eq!(
            agent.target.forward(&x).unwrap(),
            agent.online.forward(&x).unwrap()
        );
        agent.sync_target();
        assert_eq!(agent.target, agent.online);
        agent.online.layers[0].weights[0] += 0.5;
        assert_ne!(agent.target, agent.online);
    }

    #[test]
    fn repeated_transition_converges_monotonically() {
        let hyper = Hyperparams {
            batch_size: 8,
            train_start: 8,
            learning_rate: 1e-3,
            ..Hyperparams::default()
        };
        let mut rng = seeded_rng(21);
        let mut agent = Agent::new(
            &NetworkSpec::default(),
            hyper,
            TargetRule::DoubleQ,
            &mut rng,
        )
        .unwrap();
        let mut t = transition(4.0, true);
        t.state.0[0] = 1.0;
        t.action = 2;
        let batch = vec![&t; 8];
        let mut gap = (agent.q_values(t.state.as_slice()).unwrap()[2] - 4.0).abs();
        for step in 0..100 {
            agent.train_on(&batch).unwrap();
            let next = (agent.q_values(t.state.as_slice()).unwrap()[2] - 4.0).abs();
            assert!(next <= gap, "step {step}: {next} > {gap}");
            gap = next;
        }
        assert!(gap < 4.0);
    }

    proptest! {
        #[test]
        fn double_never_exceeds_vanilla(
            qt in proptest::collection::vec(-50.0f64..50.0, NUM_ACTIONS),
            qo in proptest::collection::vec(-50.0f64..50.0, NUM_ACTIONS),
            r in -10.0f64..10.0,
            gamma in 0.01f64..0.999,
        ) {
            let target = constant_net(&qt);
            let online = constant_net(&qo);
            let t = transition(r, false);
            let v = compute_targets(&[&t], &online, &target, gamma, TargetRule::VanillaMax).unwrap()[0];
            let d = compute_targets(&[&t], &online, &target, gamma, TargetRule::DoubleQ).unwrap()[0];
            prop_assert!(d <= v);
        }

        #[test]
        fn greedy_selection_is_pure(q in proptest::collection::vec(-5.0f64..5.0, NUM_ACTIONS), s1 in any::<u64>(), s2 in any::<u64>()) {
            prop_assert_eq!(
                select_action(&q, 0.0, &mut seeded_rng(s1)),
                select_action(&q, 0.0, &mut seeded_rng(s2))
            );
        }
    }
}
