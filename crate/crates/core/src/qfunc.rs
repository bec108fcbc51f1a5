//! Action-value function approximators.
//!
//! Each approximator keeps its parameters in one flat vector so that the
//! optimizer, the finite-difference checker and the snapshot format can
//! treat them uniformly. Training minimises the mean squared error between
//! stored targets and `Q(ŝ, a)` for the taken action only.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::ApproxState;
use crate::error::{Error, Result};

const SNAPSHOT_MAGIC: &[u8; 4] = b"DQLQ";
const SNAPSHOT_VERSION: u16 = 1;

/// Counts state evaluations. Clones carry the current count over.
#[derive(Debug, Default)]
pub struct EvalCounter(AtomicU64);

impl EvalCounter {
    pub fn add(&self, n: usize) {
        self.0.fetch_add(n as u64, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

impl Clone for EvalCounter {
    fn clone(&self) -> Self {
        Self(AtomicU64::new(self.get()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Architecture {
    Tabular {
        states: usize,
        actions: usize,
    },
    Linear {
        inputs: usize,
        actions: usize,
    },
    /// Layer widths from input to output, ReLU between hidden layers.
    Mlp {
        layers: Vec<usize>,
    },
}

impl Architecture {
    fn tag(&self) -> u8 {
        match self {
            Self::Tabular { .. } => 1,
            Self::Linear { .. } => 2,
            Self::Mlp { .. } => 3,
        }
    }

    fn dims(&self) -> Vec<usize> {
        match self {
            Self::Tabular { states, actions } => vec![*states, *actions],
            Self::Linear { inputs, actions } => vec![*inputs, *actions],
            Self::Mlp { layers } => layers.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TrainSample<'a> {
    pub state: &'a ApproxState,
    pub action: usize,
    pub target: f64,
}

pub trait QFunction: Send + Sync {
    fn num_actions(&self) -> usize;

    fn architecture(&self) -> Architecture;

    /// `Q(ŝ, ·)` for each state. Never mutates parameters; adds the batch
    /// size to the evaluation counter.
    fn evaluate(&self, states: &[&ApproxState]) -> Result<Vec<Vec<f64>>>;

    /// Mean squared error over the batch and its gradient with respect to
    /// the flat parameter vector.
    fn loss_and_gradient(&self, batch: &[TrainSample<'_>]) -> Result<(f64, Vec<f64>)>;

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    /// Total number of state evaluations requested so far.
    fn evaluations(&self) -> u64;

    fn clone_box(&self) -> Box<dyn QFunction>;
}

impl Clone for Box<dyn QFunction> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

fn check_batch(batch: &[TrainSample<'_>], actions: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for s in batch {
        if !s.target.is_finite() {
            return Err(Error::NonFiniteTarget(s.target));
        }
        if s.action >= actions {
            return Err(Error::InvalidAction {
                action: s.action,
                num_actions: actions,
            });
        }
    }
    Ok(())
}

/// Lookup table indexed by the state's tabular id. Zero initialised.
#[derive(Clone, Debug)]
pub struct TabularQ {
    states: usize,
    actions: usize,
    table: Vec<f64>,
    counter: EvalCounter,
}

impl TabularQ {
    pub fn new(states: usize, actions: usize) -> Self {
        Self {
            states,
            actions,
            table: vec![0.0; states * actions],
            counter: EvalCounter::default(),
        }
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.table[state * self.actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.table[state * self.actions + action] = value;
    }

    fn row(&self, state: &ApproxState) -> Result<usize> {
        match state.id() {
            Some(id) if id < self.states => Ok(id),
            other => Err(Error::MissingStateId(other)),
        }
    }
}

impl QFunction for TabularQ {
    fn num_actions(&self) -> usize {
        self.actions
    }

    fn architecture(&self) -> Architecture {
        Architecture::Tabular {
            states: self.states,
            actions: self.actions,
        }
    }

    fn evaluate(&self, states: &[&ApproxState]) -> Result<Vec<Vec<f64>>> {
        self.counter.add(states.len());
        states
            .iter()
            .map(|s| {
                let r = self.row(s)?;
                Ok(self.table[r * self.actions..(r + 1) * self.actions].to_vec())
            })
            .collect()
    }

    fn loss_and_gradient(&self, batch: &[TrainSample<'_>]) -> Result<(f64, Vec<f64>)> {
        check_batch(batch, self.actions)?;
        let scale = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; self.table.len()];
        let mut loss = 0.0;
        for s in batch {
            let idx = self.row(s.state)? * self.actions + s.action;
            let err = s.target - self.table[idx];
            loss += err * err * scale;
            grad[idx] -= 2.0 * err * scale;
        }
        Ok((loss, grad))
    }

    fn params(&self) -> &[f64] {
        &self.table
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.table
    }

    fn evaluations(&self) -> u64 {
        self.counter.get()
    }

    fn clone_box(&self) -> Box<dyn QFunction> {
        Box::new(self.clone())
    }
}

/// `Q(x, ·) = W x` with one weight row per action. Zero initialised.
#[derive(Clone, Debug)]
pub struct LinearQ {
    inputs: usize,
    actions: usize,
    weights: Vec<f64>,
    counter: EvalCounter,
}

impl LinearQ {
    pub fn new(inputs: usize, actions: usize) -> Self {
        Self {
            inputs,
            actions,
            weights: vec![0.0; inputs * actions],
            counter: EvalCounter::default(),
        }
    }

    /// Row-major `actions x inputs` weight matrix.
    pub fn with_weights(inputs: usize, actions: usize, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), inputs * actions);
        Self {
            inputs,
            actions,
            weights,
            counter: EvalCounter::default(),
        }
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs {
            return Err(Error::DimensionMismatch {
                expected: self.inputs,
                actual: x.len(),
            });
        }
        Ok(self
            .weights
            .chunks_exact(self.inputs)
            .map(|row| dot(row, x))
            .collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl QFunction for LinearQ {
    fn num_actions(&self) -> usize {
        self.actions
    }

    fn architecture(&self) -> Architecture {
        Architecture::Linear {
            inputs: self.inputs,
            actions: self.actions,
        }
    }

    fn evaluate(&self, states: &[&ApproxState]) -> Result<Vec<Vec<f64>>> {
        self.counter.add(states.len());
        states.iter().map(|s| self.forward(s.features())).collect()
    }

    fn loss_and_gradient(&self, batch: &[TrainSample<'_>]) -> Result<(f64, Vec<f64>)> {
        check_batch(batch, self.actions)?;
        let scale = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; self.weights.len()];
        let mut loss = 0.0;
        for s in batch {
            let x = s.state.features();
            let q = self.forward(x)?[s.action];
            let err = s.target - q;
            loss += err * err * scale;
            let row = &mut grad[s.action * self.inputs..(s.action + 1) * self.inputs];
            for (g, xi) in row.iter_mut().zip(x) {
                *g -= 2.0 * err * scale * xi;
            }
        }
        Ok((loss, grad))
    }

    fn params(&self) -> &[f64] {
        &self.weights
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn evaluations(&self) -> u64 {
        self.counter.get()
    }

    fn clone_box(&self) -> Box<dyn QFunction> {
        Box::new(self.clone())
    }
}

/// Fully connected ReLU network with a linear output per action.
///
/// Weights are drawn from U(-1/√fan_in, 1/√fan_in); biases start at zero.
/// Parameters are laid out layer by layer as `W (out x in)` then `b (out)`.
#[derive(Clone, Debug)]
pub struct MlpQ {
    layers: Vec<usize>,
    params: Vec<f64>,
    counter: EvalCounter,
}

impl MlpQ {
    pub fn new(inputs: usize, hidden: &[usize], actions: usize, seed: u64) -> Self {
        let mut layers = vec![inputs];
        layers.extend_from_slice(hidden);
        layers.push(actions);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for w in layers.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            layers,
            params,
            counter: EvalCounter::default(),
        }
    }

    /// Offsets of each layer's weight matrix and bias vector.
    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut at = 0;
        self.layers
            .windows(2)
            .map(|w| {
                let weights = at;
                let bias = at + w[0] * w[1];
                at = bias + w[1];
                (weights, bias)
            })
            .collect()
    }

    /// Activations of every layer (post-ReLU for hidden layers).
    fn forward(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.layers[0] {
            return Err(Error::DimensionMismatch {
                expected: self.layers[0],
                actual: x.len(),
            });
        }
        let offsets = self.offsets();
        let last = offsets.len() - 1;
        let mut acts = vec![x.to_vec()];
        for (l, &(w_at, b_at)) in offsets.iter().enumerate() {
            let (fan_in, fan_out) = (self.layers[l], self.layers[l + 1]);
            let input = &acts[l];
            let out: Vec<f64> = (0..fan_out)
                .map(|j| {
                    let row = &self.params[w_at + j * fan_in..w_at + (j + 1) * fan_in];
                    let z = dot(row, input) + self.params[b_at + j];
                    if l < last {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
        }
        Ok(acts)
    }
}

impl QFunction for MlpQ {
    fn num_actions(&self) -> usize {
        *self.layers.last().unwrap()
    }

    fn architecture(&self) -> Architecture {
        Architecture::Mlp {
            layers: self.layers.clone(),
        }
    }

    fn evaluate(&self, states: &[&ApproxState]) -> Result<Vec<Vec<f64>>> {
        self.counter.add(states.len());
        states
            .iter()
            .map(|s| self.forward(s.features()).map(|mut a| a.pop().unwrap()))
            .collect()
    }

    fn loss_and_gradient(&self, batch: &[TrainSample<'_>]) -> Result<(f64, Vec<f64>)> {
        check_batch(batch, self.num_actions())?;
        let scale = 1.0 / batch.len() as f64;
        let offsets = self.offsets();
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for s in batch {
            let acts = self.forward(s.state.features())?;
            let q = acts.last().unwrap()[s.action];
            let err = s.target - q;
            loss += err * err * scale;

            // Gradient of the loss with respect to the current layer output.
            let mut delta = vec![0.0; self.num_actions()];
            delta[s.action] = -2.0 * err * scale;
            for l in (0..offsets.len()).rev() {
                let (w_at, b_at) = offsets[l];
                let (fan_in, fan_out) = (self.layers[l], self.layers[l + 1]);
                let input = &acts[l];
                let mut back = vec![0.0; fan_in];
                for j in 0..fan_out {
                    let d = delta[j];
                    if d == 0.0 {
                        continue;
                    }
                    grad[b_at + j] += d;
                    let row = w_at + j * fan_in;
                    for i in 0..fan_in {
                        grad[row + i] += d * input[i];
                        back[i] += d * self.params[row + i];
                    }
                }
                if l > 0 {
                    // ReLU: the stored activation is zero wherever it was clamped.
                    for (b, a) in back.iter_mut().zip(input) {
                        if *a <= 0.0 {
                            *b = 0.0;
                        }
                    }
                }
                delta = back;
            }
        }
        Ok((loss, grad))
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn evaluations(&self) -> u64 {
        self.counter.get()
    }

    fn clone_box(&self) -> Box<dyn QFunction> {
        Box::new(self.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerConfig {
    Adam(AdamConfig),
    Sgd { lr: f64 },
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Adam(c) => {
                c.lr > 0.0
                    && (0.0..1.0).contains(&c.beta1)
                    && (0.0..1.0).contains(&c.beta2)
                    && c.epsilon > 0.0
            }
            Self::Sgd { lr } => lr > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid optimizer settings {self:?}"
            )))
        }
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: i32,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            m: Vec::new(),
            v: Vec::new(),
            steps: 0,
        }
    }

    pub fn config(&self) -> OptimizerConfig {
        self.config
    }

    pub fn apply(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        match self.config {
            OptimizerConfig::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerConfig::Adam(c) => {
                if self.m.len() != params.len() {
                    self.m = vec![0.0; params.len()];
                    self.v = vec![0.0; params.len()];
                }
                self.steps += 1;
                let m_corr = 1.0 - c.beta1.powi(self.steps);
                let v_corr = 1.0 - c.beta2.powi(self.steps);
                for (i, (p, &g)) in params.iter_mut().zip(grad).enumerate() {
                    self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
                    self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
                    let m_hat = self.m[i] / m_corr;
                    let v_hat = self.v[i] / v_corr;
                    *p -= c.lr * m_hat / (v_hat.sqrt() + c.epsilon);
                }
            }
        }
    }
}

/// One optimizer step on the batch's mean squared error. Returns the loss
/// measured before the update.
pub fn train_step(
    q: &mut dyn QFunction,
    batch: &[TrainSample<'_>],
    opt: &mut Optimizer,
) -> Result<f64> {
    let (loss, grad) = q.loss_and_gradient(batch)?;
    opt.apply(q.params_mut(), &grad);
    Ok(loss)
}

/// Largest relative difference between the analytic gradient and central
/// finite differences with the given step, over all parameters.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-7)`.
pub fn gradient_check(q: &mut dyn QFunction, batch: &[TrainSample<'_>], step: f64) -> Result<f64> {
    const FLOOR: f64 = 1e-7;
    let (_, analytic) = q.loss_and_gradient(batch)?;
    let mut worst: f64 = 0.0;
    for i in 0..analytic.len() {
        let orig = q.params()[i];
        q.params_mut()[i] = orig + step;
        let (plus, _) = q.loss_and_gradient(batch)?;
        q.params_mut()[i] = orig - step;
        let (minus, _) = q.loss_and_gradient(batch)?;
        q.params_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let denom = analytic[i].abs().max(numeric.abs()).max(FLOOR);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

/// Versioned parameter blob: magic, version, architecture header, then the
/// parameters as little-endian `f64`.
pub fn snapshot(q: &dyn QFunction) -> Vec<u8> {
    let arch = q.architecture();
    let dims = arch.dims();
    let params = q.params();
    let mut out = Vec::with_capacity(16 + 8 * dims.len() + 8 * params.len());
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.push(arch.tag());
    out.push(dims.len() as u8);
    for d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn load_snapshot(q: &mut dyn QFunction, blob: &[u8]) -> Result<()> {
    let err = |m: &str| Error::Snapshot(m.to_string());
    let mut rest = blob;
    let mut take = |n: usize| -> Result<&[u8]> {
        if rest.len() < n {
            return Err(err("truncated blob"));
        }
        let (head, tail) = rest.split_at(n);
        rest = tail;
        Ok(head)
    };
    let read_u64 = |b: &[u8]| u64::from_le_bytes(b.try_into().unwrap()) as usize;

    if take(4)? != SNAPSHOT_MAGIC {
        return Err(err("bad magic"));
    }
    let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
    if version != SNAPSHOT_VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let arch = q.architecture();
    let tag = take(1)?[0];
    let ndims = take(1)?[0] as usize;
    let mut dims = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        dims.push(read_u64(take(8)?));
    }
    if tag != arch.tag() || dims != arch.dims() {
        return Err(Error::Snapshot(format!(
            "architecture mismatch: blob has tag {tag} dims {dims:?}, target is {arch:?}"
        )));
    }
    let count = read_u64(take(8)?);
    if count != q.params().len() {
        return Err(err("parameter count mismatch"));
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
    }
    if !rest.is_empty() {
        return Err(err("trailing bytes"));
    }
    q.params_mut().copy_from_slice(&values);
    Ok(())
}
