//! Environments, observation windows and environment wrappers.
//!
//! Every environment emits dense feature vectors. The tabular ones also
//! attach an integer state id so a lookup-table Q-function can skip
//! decoding the features.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default episode time limit, in steps.
pub const DEFAULT_TIME_LIMIT: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub features: Vec<f64>,
    pub id: Option<usize>,
}

impl Observation {
    pub fn one_hot(len: usize, hot: usize) -> Self {
        let mut features = vec![0.0; len];
        features[hot] = 1.0;
        Self {
            features,
            id: Some(hot),
        }
    }
}

/// Output of φ: the concatenated window of recent observations.
///
/// Features are reference counted so that a transition's successor and the
/// next transition's state share one allocation inside the replay memory.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproxState {
    features: Arc<[f64]>,
    id: Option<usize>,
}

impl ApproxState {
    pub fn new(features: Vec<f64>, id: Option<usize>) -> Self {
        Self {
            features: features.into(),
            id,
        }
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Tabular id, present only when the window holds a single observation
    /// that carries one.
    pub fn id(&self) -> Option<usize> {
        self.id
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub observation: Observation,
    pub reward: f64,
    /// The episode is over. Also set when the time limit cut the episode.
    pub terminal: bool,
    /// The episode was cut by the time limit rather than reaching an
    /// absorbing state; the successor may still be bootstrapped from.
    pub truncated: bool,
}

/// One environment step as stored in replay memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: ApproxState,
    pub action: usize,
    pub reward: f64,
    pub next_state: ApproxState,
    pub terminal: bool,
    pub truncated: bool,
}

impl Transition {
    /// True when the return may bootstrap from `next_state`.
    pub fn bootstraps(&self) -> bool {
        !self.terminal || self.truncated
    }

    /// True when `next_state` is the last state of its episode.
    pub fn ends_episode(&self) -> bool {
        self.terminal
    }
}

pub trait Environment: Send {
    fn num_actions(&self) -> usize;

    fn observation_dim(&self) -> usize;

    /// Number of distinct state ids for tabular environments.
    fn num_states(&self) -> Option<usize> {
        None
    }

    /// Upper bound on the φ window imposed by the environment, if any.
    fn max_history_len(&self) -> Option<usize> {
        None
    }

    fn reset(&mut self) -> Observation;

    fn step(&mut self, action: usize) -> Result<Step>;
}

impl Environment for Box<dyn Environment> {
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn observation_dim(&self) -> usize {
        (**self).observation_dim()
    }
    fn num_states(&self) -> Option<usize> {
        (**self).num_states()
    }
    fn max_history_len(&self) -> Option<usize> {
        (**self).max_history_len()
    }
    fn reset(&mut self) -> Observation {
        (**self).reset()
    }
    fn step(&mut self, action: usize) -> Result<Step> {
        (**self).step(action)
    }
}

fn check_step(done: bool, action: usize, num_actions: usize) -> Result<()> {
    if done {
        return Err(Error::EpisodeOver);
    }
    if action >= num_actions {
        return Err(Error::InvalidAction {
            action,
            num_actions,
        });
    }
    Ok(())
}

/// Sparse-reward chain. The agent starts at position 0 and receives reward
/// 1 only on reaching the far end. Action 0 moves left, action 1 right.
#[derive(Clone, Debug)]
pub struct Chain {
    length: usize,
    pos: usize,
    done: bool,
}

impl Chain {
    pub const LEFT: usize = 0;
    pub const RIGHT: usize = 1;

    pub fn new(length: usize) -> Self {
        assert!(length >= 2, "chain needs at least two positions");
        Self {
            length,
            pos: 0,
            done: false,
        }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    /// Places the agent at `pos`; used for constructing test scenarios.
    pub fn set_position(&mut self, pos: usize) {
        assert!(pos < self.length);
        self.pos = pos;
        self.done = false;
    }

    fn observe(&self) -> Observation {
        Observation::one_hot(self.length, self.pos)
    }
}

impl Environment for Chain {
    fn num_actions(&self) -> usize {
        2
    }
    fn observation_dim(&self) -> usize {
        self.length
    }
    fn num_states(&self) -> Option<usize> {
        Some(self.length)
    }
    fn reset(&mut self) -> Observation {
        self.pos = 0;
        self.done = false;
        self.observe()
    }
    fn step(&mut self, action: usize) -> Result<Step> {
        check_step(self.done, action, 2)?;
        if action == Self::LEFT {
            self.pos = self.pos.saturating_sub(1);
        } else {
            self.pos += 1;
        }
        let terminal = self.pos == self.length - 1;
        self.done = terminal;
        Ok(Step {
            observation: self.observe(),
            reward: if terminal { 1.0 } else { 0.0 },
            terminal,
            truncated: false,
        })
    }
}

/// Square gridworld with a goal in the far corner.
///
/// Moves into a wall leave the agent in place. Each non-goal step costs
/// `step_cost`; reaching the goal pays 1. With probability `slip` the chosen
/// action is replaced by a uniformly random one.
#[derive(Clone, Debug)]
pub struct GridWorld {
    size: usize,
    step_cost: f64,
    slip: f64,
    row: usize,
    col: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl GridWorld {
    pub const UP: usize = 0;
    pub const RIGHT: usize = 1;
    pub const DOWN: usize = 2;
    pub const LEFT: usize = 3;

    pub fn new(size: usize, step_cost: f64, slip: f64, seed: u64) -> Self {
        assert!(size >= 2, "gridworld needs at least 2x2 cells");
        assert!((0.0..=1.0).contains(&slip));
        Self {
            size,
            step_cost,
            slip,
            row: 0,
            col: 0,
            done: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn cell(&self) -> (usize, usize) {
        (self.row, self.col)
    }

    /// Return of the shortest path from the start to the goal.
    pub fn optimal_score(&self) -> f64 {
        let moves = 2 * (self.size - 1);
        1.0 - self.step_cost * (moves - 1) as f64
    }

    fn observe(&self) -> Observation {
        Observation::one_hot(self.size * self.size, self.row * self.size + self.col)
    }
}

impl Environment for GridWorld {
    fn num_actions(&self) -> usize {
        4
    }
    fn observation_dim(&self) -> usize {
        self.size * self.size
    }
    fn num_states(&self) -> Option<usize> {
        Some(self.size * self.size)
    }
    fn reset(&mut self) -> Observation {
        self.row = 0;
        self.col = 0;
        self.done = false;
        self.observe()
    }
    fn step(&mut self, action: usize) -> Result<Step> {
        check_step(self.done, action, 4)?;
        let action = if self.slip > 0.0 && self.rng.gen::<f64>() < self.slip {
            self.rng.gen_range(0..4)
        } else {
            action
        };
        let last = self.size - 1;
        match action {
            Self::UP => self.row = self.row.saturating_sub(1),
            Self::RIGHT => self.col = (self.col + 1).min(last),
            Self::DOWN => self.row = (self.row + 1).min(last),
            _ => self.col = self.col.saturating_sub(1),
        }
        let terminal = self.row == last && self.col == last;
        self.done = terminal;
        Ok(Step {
            observation: self.observe(),
            reward: if terminal { 1.0 } else { -self.step_cost },
            terminal,
            truncated: false,
        })
    }
}

/// The 4x12 cliff walk. Every step costs 1; stepping into the cliff costs
/// 100 and sends the agent back to the start without ending the episode.
#[derive(Clone, Debug)]
pub struct CliffWalk {
    row: usize,
    col: usize,
    done: bool,
}

impl CliffWalk {
    pub const ROWS: usize = 4;
    pub const COLS: usize = 12;
    pub const START: (usize, usize) = (3, 0);
    pub const GOAL: (usize, usize) = (3, 11);

    pub const UP: usize = 0;
    pub const RIGHT: usize = 1;
    pub const DOWN: usize = 2;
    pub const LEFT: usize = 3;

    pub fn new() -> Self {
        Self {
            row: Self::START.0,
            col: Self::START.1,
            done: false,
        }
    }

    pub fn cell(&self) -> (usize, usize) {
        (self.row, self.col)
    }

    pub fn set_cell(&mut self, row: usize, col: usize) {
        assert!(row < Self::ROWS && col < Self::COLS);
        self.row = row;
        self.col = col;
        self.done = false;
    }

    pub fn is_cliff(row: usize, col: usize) -> bool {
        row == Self::ROWS - 1 && col > 0 && col < Self::COLS - 1
    }

    fn observe(&self) -> Observation {
        Observation::one_hot(Self::ROWS * Self::COLS, self.row * Self::COLS + self.col)
    }
}

impl Default for CliffWalk {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for CliffWalk {
    fn num_actions(&self) -> usize {
        4
    }
    fn observation_dim(&self) -> usize {
        Self::ROWS * Self::COLS
    }
    fn num_states(&self) -> Option<usize> {
        Some(Self::ROWS * Self::COLS)
    }
    fn reset(&mut self) -> Observation {
        (self.row, self.col) = Self::START;
        self.done = false;
        self.observe()
    }
    fn step(&mut self, action: usize) -> Result<Step> {
        check_step(self.done, action, 4)?;
        match action {
            Self::UP => self.row = self.row.saturating_sub(1),
            Self::RIGHT => self.col = (self.col + 1).min(Self::COLS - 1),
            Self::DOWN => self.row = (self.row + 1).min(Self::ROWS - 1),
            _ => self.col = self.col.saturating_sub(1),
        }
        let mut reward = -1.0;
        if Self::is_cliff(self.row, self.col) {
            reward = -100.0;
            (self.row, self.col) = Self::START;
        }
        let terminal = (self.row, self.col) == Self::GOAL;
        self.done = terminal;
        Ok(Step {
            observation: self.observe(),
            reward,
            terminal,
            truncated: false,
        })
    }
}

/// Chain with momentum. Actions change the velocity by -1, 0 or +1; the
/// position then advances by the velocity. Hitting the left wall stops the
/// agent. Every other step costs `step_cost`; reaching the last position
/// pays 1 and ends the episode.
///
/// Observations are a one-hot position followed by a one-hot velocity, so
/// masking the velocity block makes the task partially observable.
#[derive(Clone, Debug)]
pub struct VelocityChain {
    length: usize,
    max_speed: i64,
    step_cost: f64,
    pos: usize,
    vel: i64,
    done: bool,
}

impl VelocityChain {
    pub fn new(length: usize, max_speed: usize, step_cost: f64) -> Self {
        assert!(length >= 2 && max_speed >= 1);
        Self {
            length,
            max_speed: max_speed as i64,
            step_cost,
            pos: 0,
            vel: 0,
            done: false,
        }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn velocity(&self) -> i64 {
        self.vel
    }

    /// Indices of the position features.
    pub fn position_features(&self) -> Vec<usize> {
        (0..self.length).collect()
    }

    /// Indices of the velocity features.
    pub fn velocity_features(&self) -> Vec<usize> {
        (self.length..self.observation_dim()).collect()
    }

    fn speeds(&self) -> usize {
        (2 * self.max_speed + 1) as usize
    }

    fn observe(&self) -> Observation {
        let speeds = self.speeds();
        let v = (self.vel + self.max_speed) as usize;
        let mut features = vec![0.0; self.length + speeds];
        features[self.pos] = 1.0;
        features[self.length + v] = 1.0;
        Observation {
            features,
            id: Some(self.pos * speeds + v),
        }
    }
}

impl Environment for VelocityChain {
    fn num_actions(&self) -> usize {
        3
    }
    fn observation_dim(&self) -> usize {
        self.length + self.speeds()
    }
    fn num_states(&self) -> Option<usize> {
        Some(self.length * self.speeds())
    }
    fn reset(&mut self) -> Observation {
        self.pos = 0;
        self.vel = 0;
        self.done = false;
        self.observe()
    }
    fn step(&mut self, action: usize) -> Result<Step> {
        check_step(self.done, action, 3)?;
        self.vel = (self.vel + action as i64 - 1).clamp(-self.max_speed, self.max_speed);
        let next = self.pos as i64 + self.vel;
        if next <= 0 {
            self.pos = 0;
            self.vel = 0;
        } else {
            self.pos = (next as usize).min(self.length - 1);
        }
        let terminal = self.pos == self.length - 1;
        self.done = terminal;
        Ok(Step {
            observation: self.observe(),
            reward: if terminal { 1.0 } else { -self.step_cost },
            terminal,
            truncated: false,
        })
    }
}

/// Ends episodes after a fixed number of steps, flagging them as truncated.
#[derive(Clone, Debug)]
pub struct TimeLimit<E> {
    inner: E,
    limit: usize,
    steps: usize,
}

impl<E: Environment> TimeLimit<E> {
    pub fn new(inner: E, limit: usize) -> Self {
        assert!(limit >= 1);
        Self {
            inner,
            limit,
            steps: 0,
        }
    }

    pub fn elapsed(&self) -> usize {
        self.steps
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Environment> Environment for TimeLimit<E> {
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }
    fn observation_dim(&self) -> usize {
        self.inner.observation_dim()
    }
    fn num_states(&self) -> Option<usize> {
        self.inner.num_states()
    }
    fn max_history_len(&self) -> Option<usize> {
        self.inner.max_history_len()
    }
    fn reset(&mut self) -> Observation {
        self.steps = 0;
        self.inner.reset()
    }
    fn step(&mut self, action: usize) -> Result<Step> {
        if self.steps >= self.limit {
            return Err(Error::EpisodeOver);
        }
        let mut step = self.inner.step(action)?;
        self.steps += 1;
        if self.steps >= self.limit && !step.terminal {
            step.terminal = true;
            step.truncated = true;
        }
        Ok(step)
    }
}

/// Sign of the reward: values in {-1, 0, +1}.
pub fn clip_reward(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug)]
pub struct ClipReward<E> {
    inner: E,
}

impl<E: Environment> ClipReward<E> {
    pub fn new(inner: E) -> Self {
        Self { inner }
    }
}

impl<E: Environment> Environment for ClipReward<E> {
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }
    fn observation_dim(&self) -> usize {
        self.inner.observation_dim()
    }
    fn num_states(&self) -> Option<usize> {
        self.inner.num_states()
    }
    fn max_history_len(&self) -> Option<usize> {
        self.inner.max_history_len()
    }
    fn reset(&mut self) -> Observation {
        self.inner.reset()
    }
    fn step(&mut self, action: usize) -> Result<Step> {
        let mut step = self.inner.step(action)?;
        step.reward = clip_reward(step.reward);
        Ok(step)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MaskSpec {
    /// Keep only these feature indices.
    Keep(Vec<usize>),
    /// Remove these feature indices.
    Drop(Vec<usize>),
    /// Leave observations intact but restrict φ to the current observation.
    SingleFrame,
}

/// Wrapper emitting reduced observations over unchanged dynamics.
///
/// Masked observations lose their tabular id since the id encodes the
/// hidden features.
#[derive(Clone, Debug)]
pub struct PartiallyObservable<E> {
    inner: E,
    keep: Option<Vec<usize>>,
}

impl<E: Environment> PartiallyObservable<E> {
    fn project(&self, obs: Observation) -> Observation {
        match &self.keep {
            None => obs,
            Some(keep) => Observation {
                features: keep.iter().map(|&i| obs.features[i]).collect(),
                id: None,
            },
        }
    }
}

pub fn make_partially_observable<E: Environment>(
    env: E,
    mask: MaskSpec,
) -> Result<PartiallyObservable<E>> {
    let dim = env.observation_dim();
    let keep = match mask {
        MaskSpec::SingleFrame => None,
        MaskSpec::Keep(mut idx) => {
            idx.sort_unstable();
            idx.dedup();
            Some(idx)
        }
        MaskSpec::Drop(drop) => Some((0..dim).filter(|i| !drop.contains(i)).collect()),
    };
    if let Some(keep) = &keep {
        if keep.is_empty() {
            return Err(Error::InvalidMask("mask removes every feature".into()));
        }
        if let Some(&bad) = keep.iter().find(|&&i| i >= dim) {
            return Err(Error::InvalidMask(format!("feature index {bad} >= {dim}")));
        }
        if keep.len() == dim {
            return Err(Error::InvalidMask(
                "mask must hide at least one feature".into(),
            ));
        }
    }
    Ok(PartiallyObservable { inner: env, keep })
}

impl<E: Environment> Environment for PartiallyObservable<E> {
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }
    fn observation_dim(&self) -> usize {
        self.keep
            .as_ref()
            .map_or(self.inner.observation_dim(), Vec::len)
    }
    fn num_states(&self) -> Option<usize> {
        match self.keep {
            None => self.inner.num_states(),
            Some(_) => None,
        }
    }
    fn max_history_len(&self) -> Option<usize> {
        match self.keep {
            None => Some(1),
            Some(_) => self.inner.max_history_len(),
        }
    }
    fn reset(&mut self) -> Observation {
        let obs = self.inner.reset();
        self.project(obs)
    }
    fn step(&mut self, action: usize) -> Result<Step> {
        let mut step = self.inner.step(action)?;
        step.observation = self.project(step.observation);
        Ok(step)
    }
}

/// φ over an explicit history: the most recent `history_len` observations,
/// oldest first, zero-padded at the front when the history is shorter.
pub fn phi(history: &[Observation], history_len: usize) -> Result<ApproxState> {
    let last = history
        .last()
        .ok_or_else(|| Error::InvalidBlock("φ needs at least one observation".into()))?;
    let dim = last.features.len();
    let history_len = history_len.max(1);
    let window = &history[history.len().saturating_sub(history_len)..];
    let mut features = vec![0.0; dim * (history_len - window.len())];
    for obs in window {
        if obs.features.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: obs.features.len(),
            });
        }
        features.extend_from_slice(&obs.features);
    }
    let id = if history_len == 1 { last.id } else { None };
    Ok(ApproxState::new(features, id))
}

/// Rolling φ window kept by the agent while acting.
#[derive(Clone, Debug)]
pub struct ObservationWindow {
    history_len: usize,
    frames: VecDeque<Observation>,
}

impl ObservationWindow {
    pub fn new(history_len: usize, first: Observation) -> Self {
        let mut window = Self {
            history_len: history_len.max(1),
            frames: VecDeque::new(),
        };
        window.reset(first);
        window
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    pub fn reset(&mut self, first: Observation) {
        self.frames.clear();
        self.frames.push_back(first);
    }

    pub fn push(&mut self, obs: Observation) {
        if self.frames.len() == self.history_len {
            self.frames.pop_front();
        }
        self.frames.push_back(obs);
    }

    pub fn state(&self) -> ApproxState {
        let frames: Vec<Observation> = self.frames.iter().cloned().collect();
        phi(&frames, self.history_len).expect("window is never empty")
    }
}
