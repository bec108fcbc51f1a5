//! Training loops: DQN(λ) over a refreshed λ-return cache, and the n-step
//! DQN baseline with a target network.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::env::{ApproxState, Environment, ObservationWindow, Transition};
use crate::error::{Error, Result};
use crate::qfunc::{
    load_snapshot, snapshot, train_step, Optimizer, OptimizerConfig, QFunction, TrainSample,
};
use crate::replay::{anneal_p, build_cache, ReplayMemory};
use crate::returns::ReturnEstimatorConfig;

/// Episodes averaged by the rolling score.
pub const ROLLING_WINDOW: usize = 100;

const POLICY_STREAM: u64 = 1;
const REPLAY_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: usize,
}

impl EpsilonSchedule {
    pub fn value(&self, t: usize) -> f64 {
        if t >= self.anneal_steps {
            self.end
        } else {
            self.start + (self.end - self.start) * t as f64 / self.anneal_steps as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Main-loop timesteps T, not counting the random replay-start phase.
    pub total_steps: usize,
    /// Cache refresh period for DQN(λ), target-network period for the
    /// baseline (F).
    pub refresh_every: usize,
    pub minibatch: usize,
    /// Environment steps per gradient minibatch.
    pub train_every: usize,
    pub cache_size: usize,
    pub block: usize,
    /// Uniform-random steps stored before training starts (N).
    pub replay_start: usize,
    pub replay_capacity: usize,
    pub history_len: usize,
    pub epsilon: EpsilonSchedule,
    pub estimator: ReturnEstimatorConfig,
    /// Initial prioritization strength, annealed to 0 over the run.
    pub priority: f64,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl TrainConfig {
    /// Cache size that keeps one minibatch per `train_every` steps when all
    /// of a refresh's minibatches are drawn from one cache.
    pub fn derived_cache_size(refresh_every: usize, minibatch: usize, train_every: usize) -> usize {
        refresh_every * minibatch / train_every
    }

    pub fn minibatches_per_refresh(&self) -> usize {
        self.refresh_every / self.train_every
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let positive = [
            ("total_steps", self.total_steps),
            ("refresh_every", self.refresh_every),
            ("minibatch", self.minibatch),
            ("train_every", self.train_every),
            ("cache_size", self.cache_size),
            ("block", self.block),
            ("replay_capacity", self.replay_capacity),
            ("history_len", self.history_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{name} must be positive"));
        }
        if self.refresh_every % self.train_every != 0 {
            return bad(format!(
                "refresh_every {} must be a multiple of train_every {}",
                self.refresh_every, self.train_every
            ));
        }
        if self.cache_size % self.block != 0 {
            return bad(format!(
                "cache_size {} must be a multiple of block {}",
                self.cache_size, self.block
            ));
        }
        if self.replay_start <= self.block {
            return bad(format!(
                "replay_start {} must exceed the block size {}",
                self.replay_start, self.block
            ));
        }
        if self.replay_capacity < self.replay_start {
            return bad("replay_capacity must hold the replay-start transitions".into());
        }
        let e = self.epsilon;
        if !(0.0..=1.0).contains(&e.start) || !(0.0..=1.0).contains(&e.end) {
            return bad("epsilon values must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.priority) {
            return bad(format!("priority {} outside [0, 1]", self.priority));
        }
        self.estimator.validate()?;
        self.optimizer.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Main-loop timestep at which the episode ended.
    pub env_step: usize,
    pub length: usize,
    pub score: f64,
    /// Mean score of the last (up to) 100 completed episodes.
    pub rolling_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefreshRecord {
    pub refresh: usize,
    pub env_step: usize,
    pub q_evaluations: u64,
    pub median_abs_td: f64,
    pub mean_abs_td: f64,
    pub mean_lambda: f64,
    pub priority: f64,
    pub mean_loss: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub episodes: Vec<EpisodeRecord>,
    pub refreshes: Vec<RefreshRecord>,
    pub env_steps: usize,
    pub minibatches: usize,
    pub target_syncs: usize,
    /// State evaluations of the online and target networks together.
    pub q_evaluations: u64,
    /// Refresh (or target period) index at which the loss went non-finite.
    pub diverged_at: Option<usize>,
}

impl RunLog {
    fn record_episode(&mut self, env_step: usize, length: usize, score: f64) {
        let episode = self.episodes.len();
        let from = (episode + 1).saturating_sub(ROLLING_WINDOW);
        let window = self.episodes[from..].iter().map(|e| e.score).sum::<f64>() + score;
        let rolling_mean = window / (episode + 1 - from) as f64;
        self.episodes.push(EpisodeRecord {
            episode,
            env_step,
            length,
            score,
            rolling_mean,
        });
    }

    /// First timestep at which the rolling mean over a full window of 100
    /// episodes reaches `threshold`.
    pub fn steps_to_reach(&self, threshold: f64) -> Option<usize> {
        self.episodes
            .iter()
            .skip(ROLLING_WINDOW - 1)
            .find(|e| e.rolling_mean >= threshold)
            .map(|e| e.env_step)
    }

    /// Rolling mean at the end of the run.
    pub fn final_score(&self) -> Option<f64> {
        self.episodes.last().map(|e| e.rolling_mean)
    }
}

/// Greedy action (lowest index on ties) with probability `1 - ε`, uniform
/// otherwise. Always consumes one coin flip so runs stay aligned.
pub fn epsilon_greedy<R: Rng + ?Sized>(qvec: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if rng.gen::<f64>() < epsilon {
        rng.gen_range(0..qvec.len())
    } else {
        argmax(qvec)
    }
}

pub fn argmax(qvec: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in qvec.iter().enumerate().skip(1) {
        if v > qvec[best] {
            best = i;
        }
    }
    best
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Steps the environment and keeps the φ window and episode tallies.
struct Actor<'a> {
    env: &'a mut dyn Environment,
    window: ObservationWindow,
    state: ApproxState,
    score: f64,
    length: usize,
}

impl<'a> Actor<'a> {
    fn new(env: &'a mut dyn Environment, history_len: usize) -> Self {
        let h = env
            .max_history_len()
            .map_or(history_len, |m| m.min(history_len));
        let window = ObservationWindow::new(h, env.reset());
        let state = window.state();
        Self {
            env,
            window,
            state,
            score: 0.0,
            length: 0,
        }
    }

    fn restart(&mut self) {
        self.window.reset(self.env.reset());
        self.state = self.window.state();
        self.score = 0.0;
        self.length = 0;
    }

    /// Returns the transition and, when the episode ended, its score and
    /// length. The environment is reset automatically.
    fn step(&mut self, action: usize) -> Result<(Transition, Option<(f64, usize)>)> {
        let step = self.env.step(action)?;
        self.window.push(step.observation);
        let next_state = self.window.state();
        self.score += step.reward;
        self.length += 1;
        let transition = Transition {
            state: std::mem::replace(&mut self.state, next_state.clone()),
            action,
            reward: step.reward,
            next_state,
            terminal: step.terminal,
            truncated: step.truncated,
        };
        let finished = if step.terminal {
            let done = (self.score, self.length);
            self.restart();
            Some(done)
        } else {
            None
        };
        Ok((transition, finished))
    }
}

/// Fills the memory with `cfg.replay_start` uniform-random steps. The last
/// stored transition is marked as a truncated episode end so no block
/// bootstraps across the restart that follows.
fn seed_memory(
    env: &mut dyn Environment,
    mem: &mut ReplayMemory,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    fill_random_memory(env, mem, cfg.replay_start, cfg.history_len, rng)
}

/// Stores `steps` transitions of a uniform-random policy, marking the last
/// one as a truncated episode end.
pub fn fill_random_memory<R: Rng + ?Sized>(
    env: &mut dyn Environment,
    mem: &mut ReplayMemory,
    steps: usize,
    history_len: usize,
    rng: &mut R,
) -> Result<()> {
    let actions = env.num_actions();
    let mut actor = Actor::new(env, history_len);
    for i in 0..steps {
        let (mut transition, _) = actor.step(rng.gen_range(0..actions))?;
        if i + 1 == steps && !transition.terminal {
            transition.terminal = true;
            transition.truncated = true;
        }
        mem.store(transition);
    }
    Ok(())
}

fn check_spaces(env: &dyn Environment, q: &dyn QFunction) -> Result<()> {
    if env.num_actions() != q.num_actions() {
        return Err(Error::Config(format!(
            "environment has {} actions, Q-function {}",
            env.num_actions(),
            q.num_actions()
        )));
    }
    Ok(())
}

/// DQN(λ): every `refresh_every` steps a fresh cache of λ-returns is built
/// from the replay memory under the current parameters and all of the
/// refresh's minibatch updates are taken from it. No target network.
pub fn train_dqn_lambda(
    env: &mut dyn Environment,
    q: &mut dyn QFunction,
    cfg: &TrainConfig,
) -> Result<RunLog> {
    cfg.validate()?;
    check_spaces(env, q)?;
    let mut policy_rng = stream(cfg.seed, POLICY_STREAM);
    let mut replay_rng = stream(cfg.seed, REPLAY_STREAM);
    let mut mem = ReplayMemory::new(cfg.replay_capacity);
    seed_memory(env, &mut mem, cfg, &mut policy_rng)?;

    let mut opt = Optimizer::new(cfg.optimizer);
    let mut log = RunLog::default();
    let mut actor = Actor::new(env, cfg.history_len);
    let evals_at_start = q.evaluations();

    for t in 0..cfg.total_steps {
        if t % cfg.refresh_every == 0 {
            let refresh = log.refreshes.len();
            let started = Instant::now();
            let p = anneal_p(t, cfg.total_steps, cfg.priority);
            let cache = build_cache(
                &mem,
                q,
                &cfg.estimator,
                cfg.cache_size,
                cfg.block,
                &mut replay_rng,
            )?;
            let mut loss_sum = 0.0;
            for _ in 0..cfg.minibatches_per_refresh() {
                let batch: Vec<TrainSample> = cache
                    .sample_minibatch(cfg.minibatch, p, &mut replay_rng)
                    .into_iter()
                    .map(|e| TrainSample {
                        state: &e.state,
                        action: e.action,
                        target: e.lambda_return,
                    })
                    .collect();
                let loss = match train_step(q, &batch, &mut opt) {
                    Ok(loss) if loss.is_finite() => loss,
                    Ok(_) | Err(Error::NonFiniteTarget(_)) => {
                        log.diverged_at = Some(refresh);
                        log.q_evaluations = q.evaluations() - evals_at_start;
                        return Ok(log);
                    }
                    Err(e) => return Err(e),
                };
                loss_sum += loss;
                log.minibatches += 1;
            }
            let lambdas: Vec<f64> = cache
                .block_lambdas()
                .iter()
                .copied()
                .filter(|l| l.is_finite())
                .collect();
            log.refreshes.push(RefreshRecord {
                refresh,
                env_step: t,
                q_evaluations: cache.q_evaluations(),
                median_abs_td: cache.median_abs_error(),
                mean_abs_td: cache.mean_abs_error(),
                mean_lambda: if lambdas.is_empty() {
                    f64::NAN
                } else {
                    lambdas.iter().sum::<f64>() / lambdas.len() as f64
                },
                priority: p,
                mean_loss: loss_sum / cfg.minibatches_per_refresh() as f64,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
        }

        let qvec = q.evaluate(&[&actor.state])?.remove(0);
        let action = epsilon_greedy(&qvec, cfg.epsilon.value(t), &mut policy_rng);
        let (transition, finished) = actor.step(action)?;
        mem.store(transition);
        if let Some((score, length)) = finished {
            log.record_episode(t + 1, length, score);
        }
    }
    log.env_steps = cfg.total_steps;
    log.q_evaluations = q.evaluations() - evals_at_start;
    Ok(log)
}

/// Discounted reward sum from logical index `start` over at most `n`
/// transitions, stopping at the episode end or the newest transition.
/// Returns the sum and, when the return bootstraps, the discount and the
/// state to bootstrap from.
fn nstep_prefix(
    mem: &ReplayMemory,
    start: usize,
    n: usize,
    gamma: f64,
) -> (f64, Option<(f64, &ApproxState)>) {
    let mut ret = 0.0;
    let mut discount = 1.0;
    let last = (start + n).min(mem.len()) - 1;
    for i in start..=last {
        let t = mem.get(i);
        ret += discount * t.reward;
        discount *= gamma;
        if !t.bootstraps() {
            return (ret, None);
        }
        if t.ends_episode() || i == last {
            return (ret, Some((discount, &t.next_state)));
        }
    }
    unreachable!("loop always returns at `last`")
}

/// n-step DQN with a target network copied every `refresh_every` steps and
/// one uniform minibatch from the whole memory every `train_every` steps.
pub fn train_dqn_nstep_baseline(
    env: &mut dyn Environment,
    q: &mut dyn QFunction,
    cfg: &TrainConfig,
    n: usize,
) -> Result<RunLog> {
    cfg.validate()?;
    check_spaces(env, q)?;
    if n == 0 {
        return Err(Error::Config("n-step horizon must be >= 1".into()));
    }
    let mut policy_rng = stream(cfg.seed, POLICY_STREAM);
    let mut replay_rng = stream(cfg.seed, REPLAY_STREAM);
    let mut mem = ReplayMemory::new(cfg.replay_capacity);
    seed_memory(env, &mut mem, cfg, &mut policy_rng)?;

    let mut opt = Optimizer::new(cfg.optimizer);
    let mut target = q.clone_box();
    let mut log = RunLog::default();
    let mut actor = Actor::new(env, cfg.history_len);
    let evals_at_start = q.evaluations();
    let gamma = cfg.estimator.gamma;

    for t in 0..cfg.total_steps {
        if t % cfg.train_every == 0 {
            let picks: Vec<usize> = (0..cfg.minibatch)
                .map(|_| replay_rng.gen_range(0..mem.len()))
                .collect();
            let prefixes: Vec<_> = picks
                .iter()
                .map(|&j| nstep_prefix(&mem, j, n, gamma))
                .collect();
            let boot_states: Vec<&ApproxState> = prefixes
                .iter()
                .filter_map(|(_, b)| b.map(|(_, s)| s))
                .collect();
            let boot_values = target.evaluate(&boot_states)?;
            let mut boot = boot_values.iter();
            let batch: Vec<TrainSample> = picks
                .iter()
                .zip(&prefixes)
                .map(|(&j, (ret, b))| {
                    let target = match b {
                        Some((discount, _)) => {
                            let qv = boot.next().unwrap();
                            ret + discount * qv.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                        }
                        None => *ret,
                    };
                    let tr = mem.get(j);
                    TrainSample {
                        state: &tr.state,
                        action: tr.action,
                        target,
                    }
                })
                .collect();
            match train_step(q, &batch, &mut opt) {
                Ok(loss) if loss.is_finite() => {}
                Ok(_) | Err(Error::NonFiniteTarget(_)) => {
                    log.diverged_at = Some(t / cfg.refresh_every);
                    log.q_evaluations = q.evaluations() - evals_at_start + target.evaluations();
                    return Ok(log);
                }
                Err(e) => return Err(e),
            }
            log.minibatches += 1;
        }

        let qvec = q.evaluate(&[&actor.state])?.remove(0);
        let action = epsilon_greedy(&qvec, cfg.epsilon.value(t), &mut policy_rng);
        let (transition, finished) = actor.step(action)?;
        mem.store(transition);
        if let Some((score, length)) = finished {
            log.record_episode(t + 1, length, score);
        }

        if (t + 1) % cfg.refresh_every == 0 {
            let evals = target.evaluations();
            load_snapshot(target.as_mut(), &snapshot(q))?;
            debug_assert_eq!(evals, target.evaluations());
            log.target_syncs += 1;
        }
    }
    log.env_steps = cfg.total_steps;
    log.q_evaluations = q.evaluations() - evals_at_start + target.evaluations();
    Ok(log)
}

/// Mean undiscounted return of greedy rollouts. `max_steps` caps each
/// episode in case the environment has no time limit of its own.
pub fn evaluate_policy(
    env: &mut dyn Environment,
    q: &dyn QFunction,
    episodes: usize,
    history_len: usize,
    max_steps: usize,
) -> Result<f64> {
    if episodes == 0 {
        return Err(Error::Config(
            "evaluation needs at least one episode".into(),
        ));
    }
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut actor = Actor::new(env, history_len);
        for _ in 0..max_steps {
            let qvec = q.evaluate(&[&actor.state])?.remove(0);
            let (_, finished) = actor.step(argmax(&qvec))?;
            if let Some((score, _)) = finished {
                total += score;
                break;
            }
        }
        if actor.length > 0 {
            total += actor.score;
        }
    }
    Ok(total / episodes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Chain, TimeLimit};
    use crate::qfunc::{AdamConfig, TabularQ};

    pub(crate) fn small_config(seed: u64) -> TrainConfig {
        TrainConfig {
            total_steps: 4000,
            refresh_every: 200,
            minibatch: 16,
            train_every: 4,
            cache_size: 800,
            block: 20,
            replay_start: 500,
            replay_capacity: 5000,
            history_len: 1,
            epsilon: EpsilonSchedule {
                start: 1.0,
                end: 0.1,
                anneal_steps: 1000,
            },
            estimator: ReturnEstimatorConfig::fixed(0.9, 0.5),
            priority: 0.1,
            optimizer: OptimizerConfig::Adam(AdamConfig {
                lr: 0.05,
                ..AdamConfig::default()
            }),
            seed,
        }
    }

    #[test]
    fn epsilon_greedy_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(epsilon_greedy(&[0.0, 3.0, 1.0], 0.0, &mut rng), 1);
            assert_eq!(epsilon_greedy(&[2.0, 2.0, 1.0], 0.0, &mut rng), 0);
        }
        let mut counts = [0u64; 4];
        let draws = 40_000;
        for _ in 0..draws {
            counts[epsilon_greedy(&[0.0, 9.0, 0.0, 0.0], 1.0, &mut rng)] += 1;
        }
        let p = 0.25;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() < 4.0 * sd);
        }
    }

    #[test]
    fn epsilon_schedule_is_linear_then_flat() {
        let s = EpsilonSchedule {
            start: 1.0,
            end: 0.1,
            anneal_steps: 100,
        };
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(50) - 0.55).abs() < 1e-12);
        assert_eq!(s.value(100), 0.1);
        assert_eq!(s.value(10_000), 0.1);
    }

    #[test]
    fn rolling_mean_uses_last_hundred() {
        let mut log = RunLog::default();
        for i in 0..150 {
            log.record_episode(i, 1, if i < 50 { 0.0 } else { 1.0 });
        }
        assert_eq!(log.episodes[49].rolling_mean, 0.0);
        assert_eq!(log.episodes[99].rolling_mean, 0.5);
        assert_eq!(log.final_score(), Some(1.0));
        assert_eq!(log.steps_to_reach(0.5), Some(99));
        assert_eq!(log.steps_to_reach(1.0), Some(149));
    }

    #[test]
    fn nstep_prefix_one_step_target() {
        let mut mem = ReplayMemory::new(10);
        let s = |i| ApproxState::new(vec![], Some(i));
        for i in 0..4 {
            mem.store(Transition {
                state: s(i),
                action: 0,
                reward: 1.0,
                next_state: s(i + 1),
                terminal: i == 2,
                truncated: false,
            });
        }
        let (ret, boot) = nstep_prefix(&mem, 0, 1, 0.9);
        assert_eq!(ret, 1.0);
        let (d, st) = boot.unwrap();
        assert_eq!((d, st.id()), (0.9, Some(1)));
        let (ret, boot) = nstep_prefix(&mem, 1, 3, 0.9);
        assert!((ret - 1.9).abs() < 1e-15);
        assert!(boot.is_none());
        // Newest transition: the return is cut at the memory end.
        let (_, boot) = nstep_prefix(&mem, 3, 3, 0.9);
        assert_eq!(boot.unwrap().1.id(), Some(4));
    }

    #[test]
    fn zero_reward_run_leaves_table_untouched() {
        struct Flat(Chain);
        impl Environment for Flat {
            fn num_actions(&self) -> usize {
                2
            }
            fn observation_dim(&self) -> usize {
                self.0.observation_dim()
            }
            fn num_states(&self) -> Option<usize> {
                self.0.num_states()
            }
            fn reset(&mut self) -> crate::env::Observation {
                self.0.reset()
            }
            fn step(&mut self, a: usize) -> Result<crate::env::Step> {
                let mut s = self.0.step(a)?;
                s.reward = 0.0;
                Ok(s)
            }
        }
        let mut env = TimeLimit::new(Flat(Chain::new(6)), 50);
        let mut q = TabularQ::new(6, 2);
        let log = train_dqn_lambda(&mut env, &mut q, &small_config(3)).unwrap();
        assert!(q.params().iter().all(|&p| p == 0.0));
        assert!(log
            .refreshes
            .iter()
            .all(|r| r.mean_abs_td == 0.0 && r.mean_loss == 0.0));
    }

    #[test]
    fn counters_and_ratios() {
        let cfg = small_config(1);
        let mut env = TimeLimit::new(Chain::new(6), 50);
        let mut q = TabularQ::new(6, 2);
        let log = train_dqn_lambda(&mut env, &mut q, &cfg).unwrap();
        assert_eq!(log.minibatches * 4, cfg.total_steps);
        assert_eq!(log.target_syncs, 0);
        assert_eq!(log.refreshes.len(), cfg.total_steps / cfg.refresh_every);
        let per_refresh = (cfg.cache_size / cfg.block * (cfg.block + 1) + cfg.cache_size) as u64;
        assert!(log.refreshes.iter().all(|r| r.q_evaluations == per_refresh));
        assert_eq!(
            log.q_evaluations,
            per_refresh * log.refreshes.len() as u64 + cfg.total_steps as u64
        );

        let mut env = TimeLimit::new(Chain::new(6), 50);
        let mut q = TabularQ::new(6, 2);
        let log = train_dqn_nstep_baseline(&mut env, &mut q, &cfg, 3).unwrap();
        assert_eq!(log.minibatches * 4, cfg.total_steps);
        assert_eq!(log.target_syncs, cfg.total_steps / cfg.refresh_every);
    }

    #[test]
    fn evaluate_optimal_and_random_chain() {
        let mut q = TabularQ::new(10, 2);
        for s in 0..10 {
            q.set(s, Chain::RIGHT, 1.0);
        }
        let mut env = TimeLimit::new(Chain::new(10), 200);
        assert_eq!(evaluate_policy(&mut env, &q, 3, 1, 1000).unwrap(), 1.0);

        // Greedy on all-zero values always moves left and never arrives.
        let zero = TabularQ::new(10, 2);
        assert_eq!(evaluate_policy(&mut env, &zero, 2, 1, 1000).unwrap(), 0.0);
        assert!(evaluate_policy(&mut env, &zero, 0, 1, 10).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(small_config(0).validate().is_ok());
        let mut c = small_config(0);
        c.cache_size = 810;
        assert!(c.validate().is_err());
        let mut c = small_config(0);
        c.refresh_every = 201;
        assert!(c.validate().is_err());
        let mut c = small_config(0);
        c.replay_start = 10;
        assert!(c.validate().is_err());
    }
}
