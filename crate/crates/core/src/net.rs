//! Fully connected Q-network with ReLU hidden layers, linear outputs, squared
//! TD loss, hand-written backpropagation and RMSProp.

use rand::Rng;

use crate::reward::NUM_ACTIONS;
use crate::state::STATE_DIM;
use crate::{Error, Result, SimRng};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            layer_sizes: vec![STATE_DIM, 64, 64, NUM_ACTIONS],
        }
    }
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        let spec = NetworkSpec { layer_sizes };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(Error::Shape(format!(
                "layer sizes {:?}: need at least two positive sizes",
                self.layer_sizes
            )));
        }
        Ok(())
    }

    /// Checks the spec against the 26-in / 5-out Q-network contract.
    pub fn validate_q_network(&self) -> Result<()> {
        self.validate()?;
        let first = self.layer_sizes[0];
        let last = *self.layer_sizes.last().unwrap();
        if first != STATE_DIM || last != NUM_ACTIONS {
            return Err(Error::Shape(format!(
                "Q-network must map {STATE_DIM} inputs to {NUM_ACTIONS} outputs, got {first} -> {last}"
            )));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }
}

/// One affine layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.bias)
                .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, v)| acc + w * v)),
        );
    }
}

/// Network weights. Gradients and optimizer moments use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<Layer>,
}

impl NetworkParams {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        NetworkParams {
            layers: spec
                .layer_sizes
                .windows(2)
                .map(|w| Layer::zeros(w[0], w[1]))
                .collect(),
        }
    }

    /// Weights uniform in `(-sqrt(6/fan_in), sqrt(6/fan_in))`, biases zero.
    pub fn init(spec: &NetworkSpec, rng: &mut SimRng) -> Result<Self> {
        spec.validate()?;
        let mut params = Self::zeros(spec);
        for layer in &mut params.layers {
            let bound = (6.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-bound..bound);
            }
        }
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        NetworkParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn spec(&self) -> NetworkSpec {
        let mut sizes = Vec::with_capacity(self.layers.len() + 1);
        if let Some(first) = self.layers.first() {
            sizes.push(first.inputs);
        }
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        NetworkSpec { layer_sizes: sizes }
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn same_shape(&self, other: &NetworkParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_size() {
            return Err(Error::Shape(format!(
                "input has {} values, network expects {}",
                x.len(),
                self.input_size()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if i < last {
                relu(&mut next);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Forward pass keeping every layer's pre-activation and activation.
    fn forward_trace(&self, input: &[f64]) -> Trace {
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        activations.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.affine(&activations[i], &mut z);
            let mut a = z.clone();
            if i < last {
                relu(&mut a);
            }
            pre.push(z);
            activations.push(a);
        }
        Trace { pre, activations }
    }

    /// Mean squared TD error over the batch, counting only the taken action's output.
    pub fn td_loss<S: AsRef<[f64]>>(
        &self,
        states: &[S],
        actions: &[usize],
        targets: &[f64],
    ) -> Result<f64> {
        self.check_batch(states, actions, targets)?;
        let mut sum = 0.0;
        for ((s, &a), &y) in states.iter().zip(actions).zip(targets) {
            let q = self.forward(s.as_ref())?;
            let err = y - q[a];
            sum += err * err;
        }
        Ok(sum / states.len() as f64)
    }

    /// Exact gradient of [`td_loss`](Self::td_loss); returns `(loss, gradients)`.
    pub fn backward<S: AsRef<[f64]>>(
        &self,
        states: &[S],
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, NetworkParams)> {
        self.check_batch(states, actions, targets)?;
        let n = states.len() as f64;
        let mut grads = self.zeros_like();
        let mut loss = 0.0;
        let mut delta = Vec::new();
        let mut delta_prev = Vec::new();
        for ((s, &a), &y) in states.iter().zip(actions).zip(targets) {
            let trace = self.forward_trace(s.as_ref());
            let q = trace.activations.last().unwrap();
            let err = q[a] - y;
            loss += err * err;

            delta.clear();
            delta.resize(self.output_size(), 0.0);
            delta[a] = 2.0 * err / n;

            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let g = &mut grads.layers[l];
                let input = &trace.activations[l];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, &x) in row.iter_mut().zip(input) {
                        *gw += d * x;
                    }
                }
                if l == 0 {
                    break;
                }
                delta_prev.clear();
                delta_prev.resize(layer.inputs, 0.0);
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (dp, &w) in delta_prev.iter_mut().zip(row) {
                        *dp += d * w;
                    }
                }
                for (dp, &z) in delta_prev.iter_mut().zip(&trace.pre[l - 1]) {
                    if z <= 0.0 {
                        *dp = 0.0;
                    }
                }
                std::mem::swap(&mut delta, &mut delta_prev);
            }
        }
        Ok((loss / n, grads))
    }

    /// ReLU on/off pattern of every hidden unit for one input.
    pub fn activation_pattern(&self, input: &[f64]) -> Vec<bool> {
        let trace = self.forward_trace(input);
        let hidden = trace.pre.len().saturating_sub(1);
        trace.pre[..hidden]
            .iter()
            .flat_map(|z| z.iter().map(|&v| v > 0.0))
            .collect()
    }

    fn check_batch<S: AsRef<[f64]>>(
        &self,
        states: &[S],
        actions: &[usize],
        targets: &[f64],
    ) -> Result<()> {
        if states.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        if states.len() != actions.len() || states.len() != targets.len() {
            return Err(Error::Shape(format!(
                "batch lengths differ: {} states, {} actions, {} targets",
                states.len(),
                actions.len(),
                targets.len()
            )));
        }
        for s in states {
            self.check_input(s.as_ref())?;
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= self.output_size()) {
            return Err(Error::invalid(format!(
                "action {a} out of range for {} outputs",
                self.output_size()
            )));
        }
        Ok(())
    }
}

struct Trace {
    pre: Vec<Vec<f64>>,
    activations: Vec<Vec<f64>>,
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Deep copy of a parameter set.
pub fn copy_params(src: &NetworkParams) -> NetworkParams {
    src.clone()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsProp {
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        RmsProp {
            rho: 0.9,
            eps: 1e-7,
        }
    }
}

/// Running mean of squared gradients, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub mean_sq: NetworkParams,
    pub steps: u64,
}

impl OptimizerState {
    pub fn new(params: &NetworkParams) -> Self {
        OptimizerState {
            mean_sq: params.zeros_like(),
            steps: 0,
        }
    }
}

/// `v <- rho v + (1 - rho) g^2;  p <- p - lr g / (sqrt(v) + eps)`.
pub fn rmsprop_step(
    params: &mut NetworkParams,
    grads: &NetworkParams,
    opt: &mut OptimizerState,
    lr: f64,
    rms: RmsProp,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&opt.mean_sq) {
        return Err(Error::Shape(
            "parameter, gradient and optimizer shapes differ".into(),
        ));
    }
    for ((p, &g), v) in params
        .values_mut()
        .zip(grads.values())
        .zip(opt.mean_sq.values_mut())
    {
        *v = rms.rho * *v + (1.0 - rms.rho) * g * g;
        *p -= lr * g / (v.sqrt() + rms.eps);
    }
    opt.steps += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::seeded_rng;

    fn single(w: &[f64], b: &[f64], inputs: usize) -> NetworkParams {
        NetworkParams {
            layers: vec![Layer {
                inputs,
                outputs: b.len(),
                weights: w.to_vec(),
                bias: b.to_vec(),
            }],
        }
    }

    #[test]
    fn init_bounds_and_determinism() {
        let spec = NetworkSpec::default();
        let a = NetworkParams::init(&spec, &mut seeded_rng(3)).unwrap();
        let b = NetworkParams::init(&spec, &mut seeded_rng(3)).unwrap();
        assert_eq!(a, b);
        let bound = (6.0f64 / 26.0).sqrt();
        assert_abs_diff_eq!(bound, 0.4804, epsilon = 1e-4);
        assert!(a.layers[0].weights.iter().all(|w| w.abs() < bound));
        assert!(a.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        assert_eq!(a.spec(), spec);
        assert_eq!(a.num_params(), 26 * 64 + 64 + 64 * 64 + 64 + 64 * 5 + 5);
    }

    #[test]
    fn zero_weights_output_bias() {
        let spec = NetworkSpec::default();
        let mut p = NetworkParams::zeros(&spec);
        let b = [0.5, -1.0, 2.0, 0.0, 3.0];
        p.layers.last_mut().unwrap().bias.copy_from_slice(&b);
        assert_eq!(p.forward(&[1.0; 26]).unwrap(), b);
    }

    #[test]
    fn hand_computed_layer() {
        let out = single(&[1.0, -1.0], &[0.0], 2);
        assert_eq!(out.forward(&[3.0, 5.0]).unwrap(), vec![-2.0]);
        // same layer as a hidden layer feeding an identity readout
        let mut hidden = out.clone();
        hidden.layers.push(Layer {
            inputs: 1,
            outputs: 1,
            weights: vec![1.0],
            bias: vec![0.0],
        });
        assert_eq!(hidden.forward(&[3.0, 5.0]).unwrap(), vec![0.0]);
        assert!(out.forward(&[1.0]).is_err());
    }

    #[test]
    fn forward_is_bitwise_repeatable() {
        let p = NetworkParams::init(&NetworkSpec::default(), &mut seeded_rng(9)).unwrap();
        let x: Vec<f64> = (0..26).map(|i| i as f64 * 0.1).collect();
        let a = p.forward(&x).unwrap();
        let b = p.forward(&x).unwrap();
        assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn loss_examples() {
        let p = single(&[1.0, 0.0], &[0.0, 0.0], 1);
        assert_eq!(p.td_loss(&[[1.0]], &[0], &[1.0]).unwrap(), 0.0);
        assert_eq!(p.td_loss(&[[1.0]], &[0], &[3.0]).unwrap(), 4.0);
        assert_eq!(
            p.td_loss(&[[1.0], [1.0]], &[0, 0], &[2.0, 4.0]).unwrap(),
            5.0
        );
        let empty: [[f64; 1]; 0] = [];
        assert!(p.td_loss(&empty, &[], &[]).is_err());
        assert!(p.td_loss(&[[1.0]], &[0, 1], &[1.0]).is_err());
        assert!(p.td_loss(&[[1.0]], &[2], &[1.0]).is_err());
    }

    #[test]
    fn backward_examples() {
        let p = single(&[0.0], &[0.0], 1);
        let (loss, g) = p.backward(&[[2.0]], &[0], &[3.0]).unwrap();
        assert_eq!(loss, 9.0);
        assert_eq!(g.layers[0].weights, vec![-12.0]);

        let p = single(&[1.0], &[0.0], 1);
        let (loss, g) = p.backward(&[[2.0]], &[0], &[2.0]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.values().all(|&v| v == 0.0));
    }

    #[test]
    fn untaken_actions_get_no_output_gradient() {
        let p = NetworkParams::init(&NetworkSpec::default(), &mut seeded_rng(5)).unwrap();
        let x = [[0.7; 26]];
        let (_, g) = p.backward(&x, &[3], &[10.0]).unwrap();
        let out = g.layers.last().unwrap();
        for o in [0, 1, 2, 4] {
            assert_eq!(out.bias[o], 0.0);
            assert!(out.weights[o * 64..(o + 1) * 64].iter().all(|&v| v == 0.0));
        }
        assert_ne!(out.bias[3], 0.0);
    }

    #[test]
    fn rmsprop_examples() {
        let mut p = single(&[0.5], &[0.0], 1);
        let mut opt = OptimizerState::new(&p);
        let zero = p.zeros_like();
        rmsprop_step(&mut p, &zero, &mut opt, 0.00025, RmsProp::default()).unwrap();
        assert_eq!(p.layers[0].weights, vec![0.5]);

        let mut p = single(&[0.0], &[0.0], 1);
        let mut opt = OptimizerState::new(&p);
        let mut g = p.zeros_like();
        g.layers[0].weights[0] = 1.0;
        rmsprop_step(&mut p, &g, &mut opt, 0.00025, RmsProp::default()).unwrap();
        assert_abs_diff_eq!(opt.mean_sq.layers[0].weights[0], 0.1, epsilon = 1e-15);
        let first = p.layers[0].weights[0];
        assert_abs_diff_eq!(first, -7.9057e-4, epsilon = 1e-8);
        rmsprop_step(&mut p, &g, &mut opt, 0.00025, RmsProp::default()).unwrap();
        let second = p.layers[0].weights[0] - first;
        assert!(second.abs() < first.abs());
        assert_eq!(opt.steps, 2);
    }

    #[test]
    fn rmsprop_rejects_shape_mismatch() {
        let mut p = single(&[0.0], &[0.0], 1);
        let mut opt = OptimizerState::new(&p);
        let g = NetworkParams::zeros(&NetworkSpec::default());
        assert!(rmsprop_step(&mut p, &g, &mut opt, 0.1, RmsProp::default()).is_err());
    }

    #[test]
    fn copies_are_independent() {
        let mut src = NetworkParams::init(&NetworkSpec::default(), &mut seeded_rng(1)).unwrap();
        let copy = copy_params(&src);
        assert_eq!(copy, src);
        assert_eq!(copy_params(&copy), src);
        src.layers[0].weights[0] += 1.0;
        assert_ne!(copy, src);
        assert_eq!(copy.layers[0].weights[0] + 1.0, src.layers[0].weights[0]);
    }

    #[test]
    fn one_step_reduces_loss() {
        for seed in 0..20 {
            let mut rng = seeded_rng(seed);
            let mut p = NetworkParams::init(&NetworkSpec::default(), &mut rng).unwrap();
            let states: Vec<Vec<f64>> = (0..16)
                .map(|_| (0..26).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let actions: Vec<usize> = (0..16).map(|_| rng.gen_range(0..5)).collect();
            let targets: Vec<f64> = (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (before, g) = p.backward(&states, &actions, &targets).unwrap();
            let mut opt = OptimizerState::new(&p);
            rmsprop_step(&mut p, &g, &mut opt, 1e-3, RmsProp::default()).unwrap();
            let after = p.td_loss(&states, &actions, &targets).unwrap();
            assert!(after < before, "seed {seed}: {after} !< {before}");
        }
    }
}
