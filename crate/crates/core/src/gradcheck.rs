//! Finite-difference verification of [`NetworkParams::backward`].

use rand::Rng;

use crate::exec::Exec;
use crate::net::{NetworkParams, NetworkSpec};
use crate::state::STATE_DIM;
use crate::{derive_seed, seeded_rng, Result, SimRng};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_NETS: usize = 20;
pub const DEFAULT_BATCH: usize = 4;
pub const TOLERANCE: f64 = 1e-4;

/// Gradients whose combined magnitude `|a| + |n|` falls below this are compared
/// against this floor instead, so round-off on (near-)zero entries is not
/// reported as a large relative error.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Parameters whose +-h probe flipped a ReLU; the difference quotient is meaningless there.
    pub skipped_kinks: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < TOLERANCE
    }

    fn merge(self, other: GradCheckReport) -> GradCheckReport {
        GradCheckReport {
            max_rel_err: self.max_rel_err.max(other.max_rel_err),
            checked: self.checked + other.checked,
            skipped_kinks: self.skipped_kinks + other.skipped_kinks,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(MAGNITUDE_FLOOR)
}

/// Compares `analytic` against central differences of the TD loss at step `h`.
pub fn check_gradients<S: AsRef<[f64]>>(
    params: &NetworkParams,
    states: &[S],
    actions: &[usize],
    targets: &[f64],
    analytic: &NetworkParams,
    h: f64,
) -> Result<GradCheckReport> {
    let patterns: Vec<Vec<bool>> = states
        .iter()
        .map(|s| params.activation_pattern(s.as_ref()))
        .collect();
    let same_pattern = |p: &NetworkParams| {
        states
            .iter()
            .zip(&patterns)
            .all(|(s, base)| p.activation_pattern(s.as_ref()) == *base)
    };

    let base: Vec<f64> = params.values().copied().collect();
    let mut probe = params.clone();
    let mut report = GradCheckReport::default();
    for (i, (&a, &orig)) in analytic.values().zip(&base).enumerate() {
        set_nth(&mut probe, i, orig + h);
        let plus = probe.td_loss(states, actions, targets)?;
        let plus_ok = same_pattern(&probe);
        set_nth(&mut probe, i, orig - h);
        let minus = probe.td_loss(states, actions, targets)?;
        let minus_ok = same_pattern(&probe);
        set_nth(&mut probe, i, orig);
        if !(plus_ok && minus_ok) {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        report.max_rel_err = report.max_rel_err.max(relative_error(a, numeric));
        report.checked += 1;
    }
    Ok(report)
}

fn set_nth(params: &mut NetworkParams, index: usize, value: f64) {
    let mut offset = index;
    for layer in &mut params.layers {
        if offset < layer.weights.len() {
            layer.weights[offset] = value;
            return;
        }
        offset -= layer.weights.len();
        if offset < layer.bias.len() {
            layer.bias[offset] = value;
            return;
        }
        offset -= layer.bias.len();
    }
    panic!("parameter index {index} out of range");
}

/// A random batch with state-like magnitudes: ranges, distance, heading.
pub fn random_batch(
    rng: &mut SimRng,
    size: usize,
    input_dim: usize,
    n_actions: usize,
) -> (Vec<Vec<f64>>, Vec<usize>, Vec<f64>) {
    let states = (0..size)
        .map(|_| {
            (0..input_dim)
                .map(|j| match j {
                    j if input_dim == STATE_DIM && j == STATE_DIM - 1 => {
                        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
                    }
                    _ => rng.gen_range(0.1..3.5),
                })
                .collect()
        })
        .collect();
    let actions = (0..size).map(|_| rng.gen_range(0..n_actions)).collect();
    let targets = (0..size).map(|_| rng.gen_range(-5.0..5.0)).collect();
    (states, actions, targets)
}

/// Test hook applied to analytic gradients before comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backward {
    #[default]
    Exact,
    /// Scales every analytic gradient by 1.01, which the check must catch.
    Corrupted,
}

/// Runs the check over `nets` freshly initialized networks and random batches.
pub fn gradcheck_suite(
    spec: &NetworkSpec,
    seed: u64,
    nets: usize,
    exec: Exec,
    mode: Backward,
) -> Result<GradCheckReport> {
    spec.validate()?;
    let reports = exec.map_range(nets, |i| -> Result<GradCheckReport> {
        let mut rng = seeded_rng(derive_seed(seed, i as u64));
        let params = NetworkParams::init(spec, &mut rng)?;
        let (states, actions, targets) = random_batch(
            &mut rng,
            DEFAULT_BATCH,
            spec.input_size(),
            spec.output_size(),
        );
        let (_, mut grads) = params.backward(&states, &actions, &targets)?;
        if mode == Backward::Corrupted {
            grads.values_mut().for_each(|g| *g *= 1.01);
        }
        check_gradients(&params, &states, &actions, &targets, &grads, DEFAULT_STEP)
    });
    reports
        .into_iter()
        .try_fold(GradCheckReport::default(), |acc, r| Ok(acc.merge(r?)))
}
