//! Replay memory, the λ-return cache and directly prioritized sampling.
//!
//! Every refresh promotes `S / B` randomly placed blocks of `B` consecutive
//! transitions into a cache of `S` entries. Each block is evaluated once
//! under the current parameters (`B + 1` bootstrap states plus `B` states
//! for the TD errors), so the refresh cost depends on `S` and `B` only,
//! never on the memory capacity.

use rand::Rng;
use rayon::prelude::*;

use crate::env::{ApproxState, Transition};
use crate::error::{Error, Result};
use crate::qfunc::QFunction;
use crate::returns::{compute_returns, BlockView, ReturnEstimatorConfig};

/// Fixed-capacity ring buffer of transitions in experience order.
#[derive(Clone, Debug)]
pub struct ReplayMemory {
    capacity: usize,
    buf: Vec<Transition>,
    /// Physical index of the oldest transition once the buffer is full.
    head: usize,
    written: u64,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            buf: Vec::with_capacity(capacity.min(1 << 20)),
            head: 0,
            written: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Number of transitions ever stored.
    pub fn total_written(&self) -> u64 {
        self.written
    }

    pub fn store(&mut self, transition: Transition) {
        if self.buf.len() < self.capacity {
            self.buf.push(transition);
        } else {
            self.buf[self.head] = transition;
            self.head = (self.head + 1) % self.capacity;
        }
        self.written += 1;
    }

    /// Transition at logical index `i`, 0 being the oldest.
    pub fn get(&self, i: usize) -> &Transition {
        assert!(i < self.buf.len(), "index {i} out of range");
        &self.buf[(self.head + i) % self.buf.len()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// Uniform start index for a block of `block` transitions whose
    /// successor transition is also held in memory.
    pub fn sample_block_start<R: Rng + ?Sized>(&self, block: usize, rng: &mut R) -> Result<usize> {
        let needed = block + 1;
        if block == 0 || self.len() < needed {
            return Err(Error::MemoryTooSmall {
                len: self.len(),
                needed,
            });
        }
        Ok(rng.gen_range(0..self.len() - block))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CacheEntry {
    pub state: ApproxState,
    pub action: usize,
    pub lambda_return: f64,
    pub abs_td_error: f64,
}

/// Median split of the cache by absolute TD error.
///
/// Entries are ranked by error with ties broken by entry index. The rank
/// at `j` from the bottom is paired with the rank at `j` from the top; a
/// pair whose two errors differ goes to `below`/`above`, every other entry
/// (the middle one or two, and any pair tied in value) is `at` the median.
/// The halves therefore always have equal size.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrioritySplit {
    pub below: Vec<usize>,
    pub at: Vec<usize>,
    pub above: Vec<usize>,
}

pub fn priority_split(errors: &[f64]) -> PrioritySplit {
    let n = errors.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| errors[a].total_cmp(&errors[b]));
    let mut split = PrioritySplit::default();
    for j in 0..n / 2 {
        let (lo, hi) = (order[j], order[n - 1 - j]);
        if j < (n - 1) / 2 && errors[lo] < errors[hi] {
            split.below.push(lo);
            split.above.push(hi);
        } else {
            split.at.push(lo);
            split.at.push(hi);
        }
    }
    if n % 2 == 1 {
        split.at.push(order[n / 2]);
    }
    split.at.sort_unstable();
    split
}

/// Linearly annealed prioritization strength.
pub fn anneal_p(t: usize, total_steps: usize, p0: f64) -> f64 {
    if total_steps == 0 {
        return 0.0;
    }
    p0 * (1.0 - (t.min(total_steps) as f64 / total_steps as f64))
}

#[derive(Clone, Debug)]
pub struct Cache {
    entries: Vec<CacheEntry>,
    block_size: usize,
    /// Mean λ applied within each block (NaN for n-step returns).
    block_lambdas: Vec<f64>,
    split: PrioritySplit,
    median_abs_error: f64,
    mean_abs_error: f64,
    q_evaluations: u64,
}

impl Cache {
    /// Cache over precomputed entries, split around the median of their
    /// absolute TD errors.
    pub fn from_entries(entries: Vec<CacheEntry>, block_size: usize) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidBlock("cache has no entries".into()));
        }
        let errors: Vec<f64> = entries.iter().map(|e| e.abs_td_error).collect();
        let split = priority_split(&errors);
        let mut sorted = errors.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median_abs_error = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let mean_abs_error = errors.iter().sum::<f64>() / n as f64;
        Ok(Cache {
            entries,
            block_size,
            block_lambdas: Vec::new(),
            split,
            median_abs_error,
            mean_abs_error,
            q_evaluations: 0,
        })
    }

    pub fn entries(&self) -> &[CacheEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn block_lambdas(&self) -> &[f64] {
        &self.block_lambdas
    }

    pub fn split(&self) -> &PrioritySplit {
        &self.split
    }

    pub fn median_abs_error(&self) -> f64 {
        self.median_abs_error
    }

    pub fn mean_abs_error(&self) -> f64 {
        self.mean_abs_error
    }

    /// State evaluations spent building this cache.
    pub fn q_evaluations(&self) -> u64 {
        self.q_evaluations
    }

    /// Sampling probability of every entry at prioritization `p`.
    pub fn probabilities(&self, p: f64) -> Vec<f64> {
        let s = self.entries.len() as f64;
        let mut probs = vec![1.0 / s; self.entries.len()];
        for &i in &self.split.above {
            probs[i] = (1.0 + p) / s;
        }
        for &i in &self.split.below {
            probs[i] = (1.0 - p) / s;
        }
        probs
    }

    /// `m` independent draws, with replacement, from the median-split
    /// distribution: `(1+p)/S` above the median, `1/S` at it, `(1-p)/S`
    /// below it.
    pub fn sample_minibatch<R: Rng + ?Sized>(
        &self,
        m: usize,
        p: f64,
        rng: &mut R,
    ) -> Vec<&CacheEntry> {
        let p = p.clamp(0.0, 1.0);
        let above = self.split.above.len() as f64 * (1.0 + p);
        let at = self.split.at.len() as f64;
        let below = self.split.below.len() as f64 * (1.0 - p);
        let total = above + at + below;
        (0..m)
            .map(|_| {
                let u = rng.gen::<f64>() * total;
                let class = if u < above {
                    &self.split.above
                } else if u < above + at || below == 0.0 {
                    &self.split.at
                } else {
                    &self.split.below
                };
                let class = if class.is_empty() {
                    &self.split.at
                } else {
                    class
                };
                &self.entries[class[rng.gen_range(0..class.len())]]
            })
            .collect()
    }
}

/// Evaluates one block starting at logical index `start` and returns its
/// cache entries.
fn refresh_block(
    mem: &ReplayMemory,
    q: &dyn QFunction,
    cfg: &ReturnEstimatorConfig,
    start: usize,
    block: usize,
) -> Result<(Vec<CacheEntry>, f64)> {
    let transitions: Vec<&Transition> = (start..start + block).map(|i| mem.get(i)).collect();

    let mut boot_states: Vec<&ApproxState> = Vec::with_capacity(block + 1);
    boot_states.push(&transitions[0].state);
    boot_states.extend(transitions.iter().map(|t| &t.next_state));
    let q_bootstrap = q.evaluate(&boot_states)?;

    let own_states: Vec<&ApproxState> = transitions.iter().map(|t| &t.state).collect();
    let q_own = q.evaluate(&own_states)?;

    let view = BlockView {
        rewards: transitions.iter().map(|t| t.reward).collect(),
        actions: transitions.iter().map(|t| t.action).collect(),
        terminals: transitions.iter().map(|t| !t.bootstraps()).collect(),
        episode_ends: transitions.iter().map(|t| t.ends_episode()).collect(),
        q_bootstrap,
        q_taken: transitions
            .iter()
            .zip(&q_own)
            .map(|(t, q)| q[t.action])
            .collect(),
    };
    let seq = compute_returns(&view, cfg)?;
    let mean_lambda = if seq.lambdas.is_empty() {
        f64::NAN
    } else {
        seq.lambdas.iter().sum::<f64>() / seq.lambdas.len() as f64
    };
    let entries = transitions
        .iter()
        .zip(seq.returns.iter().zip(&seq.abs_td_errors))
        .map(|(t, (&ret, &err))| CacheEntry {
            state: t.state.clone(),
            action: t.action,
            lambda_return: ret,
            abs_td_error: err,
        })
        .collect();
    Ok((entries, mean_lambda))
}

/// Samples `cache_size / block` block starts and refreshes every block
/// under the current parameters. Blocks are evaluated in parallel; the
/// result does not depend on the thread count.
pub fn build_cache<R: Rng + ?Sized>(
    mem: &ReplayMemory,
    q: &dyn QFunction,
    cfg: &ReturnEstimatorConfig,
    cache_size: usize,
    block: usize,
    rng: &mut R,
) -> Result<Cache> {
    if block == 0 || cache_size == 0 || cache_size % block != 0 {
        return Err(Error::CacheNotDivisible { cache_size, block });
    }
    let starts = (0..cache_size / block)
        .map(|_| mem.sample_block_start(block, rng))
        .collect::<Result<Vec<_>>>()?;

    let before = q.evaluations();
    let blocks = starts
        .par_iter()
        .map(|&start| refresh_block(mem, q, cfg, start, block))
        .collect::<Result<Vec<_>>>()?;
    let q_evaluations = q.evaluations() - before;

    let mut entries = Vec::with_capacity(cache_size);
    let mut block_lambdas = Vec::with_capacity(blocks.len());
    for (e, lambda) in blocks {
        entries.extend(e);
        block_lambdas.push(lambda);
    }
    let mut cache = Cache::from_entries(entries, block)?;
    cache.block_lambdas = block_lambdas;
    cache.q_evaluations = q_evaluations;
    Ok(cache)
}
