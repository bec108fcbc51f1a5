//! Return estimators over a block of consecutive transitions.
//!
//! A block holds `B` transitions and the `B + 1` action-value vectors of
//! the states that bracket them. The recursive λ-return walks the block
//! backwards and reads one bootstrap maximum per step; the direct form sums
//! every n-step return and is kept as an O(N²) reference.
//!
//! Blocks may span episode boundaries. The recursion restarts at every
//! transition that ends an episode: absorbing successors contribute only
//! their reward, truncated ones bootstrap from their own successor.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TraceVariant {
    /// Always back up the maximising action.
    Peng,
    /// Cut the trace (λ = 0) after a non-greedy action.
    Watkins,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaMode {
    Fixed(f64),
    /// Per-step median over λ ∈ {0/k, 1/k, …, k/k}.
    MedianDynamic {
        k: usize,
    },
    /// Largest λ whose mean absolute TD error over the block stays within
    /// `max_error`, found by bisection.
    ErrorBounded {
        max_error: f64,
        max_depth: usize,
    },
    /// Plain n-step returns, truncated at the block end.
    NStep(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReturnEstimatorConfig {
    pub gamma: f64,
    pub mode: LambdaMode,
    pub variant: TraceVariant,
}

impl ReturnEstimatorConfig {
    pub fn fixed(gamma: f64, lambda: f64) -> Self {
        Self {
            gamma,
            mode: LambdaMode::Fixed(lambda),
            variant: TraceVariant::Peng,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        match self.mode {
            LambdaMode::Fixed(l) if !(0.0..=1.0).contains(&l) => {
                bad(format!("lambda {l} outside [0, 1]"))
            }
            LambdaMode::MedianDynamic { k: 0 } => bad("median k must be >= 1".into()),
            LambdaMode::ErrorBounded {
                max_error,
                max_depth,
            } => {
                if !(max_error > 0.0) {
                    bad(format!("error bound {max_error} must be > 0"))
                } else if max_depth == 0 {
                    bad("bisection depth must be >= 1".into())
                } else {
                    Ok(())
                }
            }
            LambdaMode::NStep(0) => bad("n-step horizon must be >= 1".into()),
            _ => Ok(()),
        }
    }
}

/// A block of `B` transitions with action values under the current
/// parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockView {
    pub rewards: Vec<f64>,
    pub actions: Vec<usize>,
    /// Transition `i` reached an absorbing state: no bootstrap.
    pub terminals: Vec<bool>,
    /// Transition `i` ended its episode (absorbing or truncated).
    pub episode_ends: Vec<bool>,
    /// `B + 1` vectors: entry 0 is the first state, entry `i + 1` the
    /// successor of transition `i`. Entries for absorbing successors may be
    /// empty.
    pub q_bootstrap: Vec<Vec<f64>>,
    /// `Q(ŝ_i, a_i)` for each transition's own state.
    pub q_taken: Vec<f64>,
}

impl BlockView {
    /// Block over a contiguous trajectory in which each transition starts
    /// where the previous one ended; `q_taken` is read from `q_bootstrap`.
    pub fn contiguous(
        rewards: Vec<f64>,
        actions: Vec<usize>,
        terminals: Vec<bool>,
        q_bootstrap: Vec<Vec<f64>>,
    ) -> Self {
        let q_taken = actions
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                q_bootstrap
                    .get(i)
                    .and_then(|q| q.get(a))
                    .copied()
                    .unwrap_or(0.0)
            })
            .collect();
        Self {
            episode_ends: terminals.clone(),
            rewards,
            actions,
            terminals,
            q_bootstrap,
            q_taken,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.len();
        let bad = |msg: String| Err(Error::InvalidBlock(msg));
        if b == 0 {
            return bad("block has no transitions".into());
        }
        if self.actions.len() != b
            || self.terminals.len() != b
            || self.episode_ends.len() != b
            || self.q_taken.len() != b
        {
            return bad(format!("per-step arrays disagree with {b} rewards"));
        }
        if self.q_bootstrap.len() != b + 1 {
            return bad(format!(
                "expected {} bootstrap vectors, got {}",
                b + 1,
                self.q_bootstrap.len()
            ));
        }
        for i in 0..b {
            if self.terminals[i] && !self.episode_ends[i] {
                return bad(format!("step {i} is terminal but does not end the episode"));
            }
            if !self.terminals[i] && self.q_bootstrap[i + 1].is_empty() {
                return bad(format!(
                    "missing bootstrap values for successor of step {i}"
                ));
            }
        }
        Ok(())
    }

    /// `max_a Q(ŝ_i, a)` for every bracketing state; 0 where no values are
    /// given (absorbing states).
    fn bootstrap_maxima(&self) -> Vec<f64> {
        self.q_bootstrap
            .iter()
            .map(|q| if q.is_empty() { 0.0 } else { max_of(q) })
            .collect()
    }

    /// Index of the last step of the episode segment containing `t`.
    fn segment_end(&self, t: usize) -> usize {
        (t..self.len())
            .find(|&i| self.episode_ends[i])
            .unwrap_or(self.len() - 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReturnSequence {
    pub returns: Vec<f64>,
    /// λ used at each step; empty for n-step returns.
    pub lambdas: Vec<f64>,
    pub abs_td_errors: Vec<f64>,
}

impl ReturnSequence {
    fn new(block: &BlockView, returns: Vec<f64>, lambdas: Vec<f64>) -> Self {
        let abs_td_errors = returns
            .iter()
            .zip(&block.q_taken)
            .map(|(r, q)| (r - q).abs())
            .collect();
        Self {
            returns,
            lambdas,
            abs_td_errors,
        }
    }

    pub fn mean_abs_td_error(&self) -> f64 {
        self.abs_td_errors.iter().sum::<f64>() / self.abs_td_errors.len().max(1) as f64
    }
}

/// `Σ_{i<n} γ^i r_{t+i} + γ^n max_a Q(ŝ_{t+n}, a)`, stopping early at the
/// end of the episode (no bootstrap after an absorbing state).
pub fn n_step_return(block: &BlockView, t: usize, n: usize, gamma: f64) -> Result<f64> {
    let max = block.len().saturating_sub(t);
    if n == 0 || n > max {
        return Err(Error::HorizonOutOfRange { n, max });
    }
    let mut ret = 0.0;
    let mut discount = 1.0;
    let mut boot = t + n;
    for i in t..t + n {
        ret += discount * block.rewards[i];
        discount *= gamma;
        if block.terminals[i] {
            return Ok(ret);
        }
        if block.episode_ends[i] {
            boot = i + 1;
            break;
        }
    }
    Ok(ret + discount * max_of(&block.q_bootstrap[boot]))
}

fn max_of(q: &[f64]) -> f64 {
    q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// λ-return at `t` as the explicit weighted sum
/// `(1-λ) Σ_{n<N} λ^{n-1} R⁽ⁿ⁾ + λ^{N-1} R⁽ᴺ⁾` over every n-step return up
/// to the horizon `N` (episode end or block end).
pub fn lambda_return_direct(block: &BlockView, t: usize, lambda: f64, gamma: f64) -> Result<f64> {
    block.validate()?;
    if t >= block.len() {
        return Err(Error::HorizonOutOfRange {
            n: t,
            max: block.len() - 1,
        });
    }
    let horizon = block.segment_end(t) + 1 - t;
    let mut sum = 0.0;
    // Running reward sum Σ_{i<n} γ^i r_{t+i} shared by consecutive R⁽ⁿ⁾.
    let mut partial = 0.0;
    let mut discount = 1.0;
    for n in 1..=horizon {
        let i = t + n - 1;
        partial += discount * block.rewards[i];
        discount *= gamma;
        let nstep = if block.terminals[i] {
            partial
        } else {
            partial + discount * max_of(&block.q_bootstrap[i + 1])
        };
        let weight = if n < horizon {
            (1.0 - lambda) * lambda.powi(n as i32 - 1)
        } else {
            lambda.powi(n as i32 - 1)
        };
        sum += weight * nstep;
    }
    Ok(sum)
}

/// Backward recursion with a per-step λ. `maxima` holds `max_a Q` for the
/// `B + 1` bracketing states.
fn recurse(
    block: &BlockView,
    maxima: &[f64],
    gamma: f64,
    lambda_at: impl Fn(usize) -> f64,
) -> Vec<f64> {
    let b = block.len();
    let mut out = vec![0.0; b];
    let mut later = maxima[b];
    for i in (0..b).rev() {
        let r = block.rewards[i];
        out[i] = if block.terminals[i] {
            r
        } else {
            let bootstrap = maxima[i + 1];
            if i + 1 == b || block.episode_ends[i] {
                r + gamma * bootstrap
            } else {
                let lambda = lambda_at(i);
                r + gamma * (lambda * later + (1.0 - lambda) * bootstrap)
            }
        };
        later = out[i];
    }
    out
}

/// Steps after which Watkins's Q(λ) cuts the trace: the action taken at the
/// successor is not greedy under the current values. Steps that end an
/// episode or the block never cut.
pub fn watkins_cut_mask(block: &BlockView) -> Vec<bool> {
    let b = block.len();
    (0..b)
        .map(|i| {
            if i + 1 == b || block.episode_ends[i] {
                return false;
            }
            let q = &block.q_bootstrap[i + 1];
            let max = max_of(q);
            q.get(block.actions[i + 1]).is_some_and(|&v| v < max)
        })
        .collect()
}

fn cut_mask(block: &BlockView, variant: TraceVariant) -> Vec<bool> {
    match variant {
        TraceVariant::Peng => vec![false; block.len()],
        TraceVariant::Watkins => watkins_cut_mask(block),
    }
}

/// Recursive λ-return sequence for a fixed λ under the configured variant.
pub fn lambda_return_sequence(
    block: &BlockView,
    cfg: &ReturnEstimatorConfig,
    lambda: f64,
) -> Result<ReturnSequence> {
    block.validate()?;
    let maxima = block.bootstrap_maxima();
    let mask = cut_mask(block, cfg.variant);
    let lambdas: Vec<f64> = mask
        .iter()
        .map(|&cut| if cut { 0.0 } else { lambda })
        .collect();
    let returns = recurse(block, &maxima, cfg.gamma, |i| lambdas[i]);
    Ok(ReturnSequence::new(block, returns, lambdas))
}

/// Per-step median of the `k + 1` sequences for λ = j/k, all sharing one
/// set of bootstrap maxima. Candidates sort by value, ties by λ index; an
/// even candidate count averages the two middle values.
pub fn median_dynamic_returns(
    block: &BlockView,
    cfg: &ReturnEstimatorConfig,
    k: usize,
) -> Result<ReturnSequence> {
    block.validate()?;
    if k == 0 {
        return Err(Error::Config("median k must be >= 1".into()));
    }
    let maxima = block.bootstrap_maxima();
    let mask = cut_mask(block, cfg.variant);
    let candidates: Vec<Vec<f64>> = (0..=k)
        .map(|j| {
            let lambda = j as f64 / k as f64;
            recurse(block, &maxima, cfg.gamma, |i| {
                if mask[i] {
                    0.0
                } else {
                    lambda
                }
            })
        })
        .collect();

    let mut returns = Vec::with_capacity(block.len());
    let mut lambdas = Vec::with_capacity(block.len());
    let mut column: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for t in 0..block.len() {
        column.clear();
        column.extend(candidates.iter().enumerate().map(|(j, c)| (c[t], j)));
        column.sort_by(|a, b| a.0.total_cmp(&b.0));
        let lam = |j: usize| if mask[t] { 0.0 } else { j as f64 / k as f64 };
        let mid = column.len() / 2;
        if column.len() % 2 == 1 {
            returns.push(column[mid].0);
            lambdas.push(lam(column[mid].1));
        } else {
            let (lo, hi) = (column[mid - 1], column[mid]);
            returns.push(0.5 * (lo.0 + hi.0));
            lambdas.push(0.5 * (lam(lo.1) + lam(hi.1)));
        }
    }
    Ok(ReturnSequence::new(block, returns, lambdas))
}

/// Largest λ keeping the block's mean absolute TD error within `max_error`.
///
/// λ = 1 and λ = 0 are tried first; otherwise bisection on [0, 1] runs for
/// `max_depth` probes and returns the largest feasible probe.
pub fn error_bounded_lambda(
    block: &BlockView,
    cfg: &ReturnEstimatorConfig,
    max_error: f64,
    max_depth: usize,
) -> Result<(f64, ReturnSequence)> {
    if !(max_error > 0.0) {
        return Err(Error::Config(format!(
            "error bound {max_error} must be > 0"
        )));
    }
    let eval = |lambda: f64| lambda_return_sequence(block, cfg, lambda);

    let upper = eval(1.0)?;
    if upper.mean_abs_td_error() <= max_error {
        return Ok((1.0, upper));
    }
    let lower = eval(0.0)?;
    if lower.mean_abs_td_error() > max_error {
        return Ok((0.0, lower));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = lower;
    for _ in 0..max_depth {
        let mid = 0.5 * (lo + hi);
        let seq = eval(mid)?;
        if seq.mean_abs_td_error() <= max_error {
            lo = mid;
            best = seq;
        } else {
            hi = mid;
        }
    }
    Ok((lo, best))
}

fn n_step_sequence(block: &BlockView, n: usize, gamma: f64) -> Result<ReturnSequence> {
    block.validate()?;
    let b = block.len();
    let returns = (0..b)
        .map(|t| n_step_return(block, t, n.min(b - t), gamma))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReturnSequence::new(block, returns, Vec::new()))
}

/// Returns for a block under any configured mode.
pub fn compute_returns(block: &BlockView, cfg: &ReturnEstimatorConfig) -> Result<ReturnSequence> {
    match cfg.mode {
        LambdaMode::Fixed(lambda) => lambda_return_sequence(block, cfg, lambda),
        LambdaMode::MedianDynamic { k } => median_dynamic_returns(block, cfg, k),
        LambdaMode::ErrorBounded {
            max_error,
            max_depth,
        } => error_bounded_lambda(block, cfg, max_error, max_depth).map(|(_, seq)| seq),
        LambdaMode::NStep(n) => n_step_sequence(block, n, cfg.gamma),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peng(gamma: f64) -> ReturnEstimatorConfig {
        ReturnEstimatorConfig::fixed(gamma, 0.0)
    }

    /// r = [1, 2], γ = 0.9, max Q(ŝ_1) = 10, absorbing after step 1.
    fn two_step() -> BlockView {
        BlockView::contiguous(
            vec![1.0, 2.0],
            vec![0, 0],
            vec![false, true],
            vec![vec![0.0, 0.0], vec![10.0, 3.0], vec![]],
        )
    }

    #[test]
    fn n_step_examples() {
        let b = BlockView::contiguous(vec![1.0], vec![0], vec![true], vec![vec![0.0], vec![]]);
        assert_eq!(n_step_return(&b, 0, 1, 0.9).unwrap(), 1.0);

        let b = BlockView::contiguous(
            vec![1.0, 2.0],
            vec![0, 0],
            vec![false, false],
            vec![vec![0.0], vec![0.0], vec![10.0, -1.0]],
        );
        assert!((n_step_return(&b, 0, 2, 0.9).unwrap() - 10.9).abs() < 1e-12);

        let b = BlockView::contiguous(vec![0.0], vec![0], vec![false], vec![vec![0.0], vec![4.0]]);
        assert_eq!(n_step_return(&b, 0, 1, 0.99).unwrap(), 0.99 * 4.0);

        assert!(matches!(
            n_step_return(&b, 0, 2, 0.99),
            Err(Error::HorizonOutOfRange { .. })
        ));
        assert!(n_step_return(&b, 0, 0, 0.99).is_err());
    }

    #[test]
    fn direct_two_step_example() {
        let b = two_step();
        assert!((lambda_return_direct(&b, 0, 0.5, 0.9).unwrap() - 6.4).abs() < 1e-12);
        assert_eq!(
            lambda_return_direct(&b, 0, 0.0, 0.9).unwrap(),
            1.0 + 0.9 * 10.0
        );
        assert!((lambda_return_direct(&b, 0, 1.0, 0.9).unwrap() - 2.8).abs() < 1e-12);
    }

    #[test]
    fn recursive_two_step_example() {
        let seq = lambda_return_sequence(&two_step(), &peng(0.9), 0.5).unwrap();
        assert!((seq.returns[0] - 6.4).abs() < 1e-12);
        assert_eq!(seq.returns[1], 2.0);
    }

    #[test]
    fn lambda_zero_gives_one_step_targets() {
        let b = two_step();
        let seq = lambda_return_sequence(&b, &peng(0.9), 0.0).unwrap();
        assert_eq!(seq.returns, vec![1.0 + 0.9 * 10.0, 2.0]);
    }

    #[test]
    fn missing_bootstrap_is_an_error() {
        let mut b = two_step();
        b.q_bootstrap[1].clear();
        assert!(matches!(
            lambda_return_sequence(&b, &peng(0.9), 0.5),
            Err(Error::InvalidBlock(_))
        ));
        let mut b = two_step();
        b.q_bootstrap.pop();
        assert!(b.validate().is_err());
    }

    #[test]
    fn truncated_step_bootstraps_and_restarts() {
        // Step 0 is cut by a time limit, step 1 starts a new episode.
        let mut b = BlockView::contiguous(
            vec![0.0, 5.0],
            vec![0, 0],
            vec![false, true],
            vec![vec![0.0], vec![2.0], vec![]],
        );
        b.episode_ends[0] = true;
        let seq = lambda_return_sequence(&b, &peng(0.5), 1.0).unwrap();
        assert_eq!(seq.returns, vec![1.0, 5.0]);
        assert_eq!(lambda_return_direct(&b, 0, 1.0, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn watkins_cuts_after_non_greedy_action() {
        // Greedy action at every state is 0.
        let q = vec![vec![1.0, 0.0]; 4];
        let greedy = BlockView::contiguous(
            vec![0.0, 1.0, 0.5],
            vec![0, 0, 0],
            vec![false; 3],
            q.clone(),
        );
        assert_eq!(watkins_cut_mask(&greedy), vec![false; 3]);
        let w = ReturnEstimatorConfig {
            variant: TraceVariant::Watkins,
            ..peng(0.9)
        };
        assert_eq!(
            lambda_return_sequence(&greedy, &w, 0.7).unwrap(),
            lambda_return_sequence(&greedy, &peng(0.9), 0.7).unwrap()
        );

        let b = BlockView::contiguous(vec![0.0, 1.0, 0.5], vec![0, 1, 0], vec![false; 3], q);
        assert_eq!(watkins_cut_mask(&b), vec![true, false, false]);
        let seq = lambda_return_sequence(&b, &w, 0.7).unwrap();
        assert_eq!(seq.returns[0], n_step_return(&b, 0, 1, 0.9).unwrap());
        assert_eq!(seq.lambdas, vec![0.0, 0.7, 0.7]);
    }

    #[test]
    fn median_k2_hand_case() {
        // Q ≡ 0, r = [1, 2], γ = 1, absorbing after step 1. The λ ∈ {0, ½, 1}
        // candidates at t = 0 are 1, 2 and 3.
        let b = BlockView::contiguous(
            vec![1.0, 2.0],
            vec![0, 0],
            vec![false, true],
            vec![vec![0.0], vec![0.0], vec![]],
        );
        let cfg = peng(1.0);
        for (j, want) in [(0.0, 1.0), (0.5, 2.0), (1.0, 3.0)] {
            assert_eq!(
                lambda_return_sequence(&b, &cfg, j).unwrap().returns[0],
                want
            );
        }
        let seq = median_dynamic_returns(&b, &cfg, 2).unwrap();
        assert_eq!(seq.returns, vec![2.0, 2.0]);
        assert_eq!(seq.lambdas[0], 0.5);
        // All candidates tie at t = 1; the middle λ index wins.
        assert_eq!(seq.lambdas[1], 0.5);
    }

    #[test]
    fn median_even_candidate_count_averages() {
        let b = BlockView::contiguous(
            vec![1.0, 2.0],
            vec![0, 0],
            vec![false, true],
            vec![vec![0.0], vec![0.0], vec![]],
        );
        // k = 1: candidates {1, 3}.
        let seq = median_dynamic_returns(&b, &peng(1.0), 1).unwrap();
        assert_eq!(seq.returns[0], 2.0);
        assert!(median_dynamic_returns(&b, &peng(1.0), 0).is_err());
    }

    /// γ = 1, r = [0, 2], max Q(ŝ_1) = 0, Q(ŝ_0, a_0) = 0 and
    /// Q(ŝ_1, a_1) = 2, so the block's mean absolute error is exactly λ.
    pub(crate) fn linear_error_block() -> BlockView {
        let mut b = BlockView::contiguous(
            vec![0.0, 2.0],
            vec![0, 0],
            vec![false, true],
            vec![vec![0.0], vec![0.0, -1.0], vec![]],
        );
        b.q_taken = vec![0.0, 2.0];
        b
    }

    #[test]
    fn error_bounded_bisection() {
        let b = linear_error_block();
        let cfg = peng(1.0);
        for lam in [0.0, 0.25, 0.3, 0.9, 1.0] {
            let l = lambda_return_sequence(&b, &cfg, lam)
                .unwrap()
                .mean_abs_td_error();
            assert!((l - lam).abs() < 1e-15);
        }
        let (lambda, seq) = error_bounded_lambda(&b, &cfg, 0.3, 7).unwrap();
        assert!(lambda >= 0.3 - 2f64.powi(-7) && lambda <= 0.3, "{lambda}");
        assert!(seq.mean_abs_td_error() <= 0.3);
        // 0.3 in binary: .0100110011..., seven probes give 38/128.
        assert_eq!(lambda, 38.0 / 128.0);
    }

    #[test]
    fn error_bounded_early_returns() {
        let b = linear_error_block();
        let cfg = peng(1.0);
        assert_eq!(error_bounded_lambda(&b, &cfg, 1.0, 7).unwrap().0, 1.0);
        let mut shifted = b.clone();
        shifted.q_taken = vec![5.0, 2.0];
        // L(0) = 2.5 here.
        assert_eq!(error_bounded_lambda(&shifted, &cfg, 0.1, 7).unwrap().0, 0.0);
        let zero = BlockView::contiguous(
            vec![0.0; 3],
            vec![0; 3],
            vec![false, false, true],
            vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0], vec![]],
        );
        assert_eq!(error_bounded_lambda(&zero, &cfg, 1e-9, 7).unwrap().0, 1.0);
        assert!(error_bounded_lambda(&zero, &cfg, 0.0, 7).is_err());
    }

    #[test]
    fn n_step_mode_truncates_at_block_end() {
        let b = BlockView::contiguous(
            vec![1.0, 1.0, 1.0],
            vec![0; 3],
            vec![false; 3],
            vec![vec![0.0], vec![2.0], vec![2.0], vec![2.0]],
        );
        let cfg = ReturnEstimatorConfig {
            mode: LambdaMode::NStep(3),
            ..peng(0.5)
        };
        let seq = compute_returns(&b, &cfg).unwrap();
        assert_eq!(
            seq.returns,
            vec![1.0 + 0.5 + 0.25 + 0.125 * 2.0, 1.0 + 0.5 + 0.25 * 2.0, 2.0]
        );
        assert!(seq.lambdas.is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(peng(0.99).validate().is_ok());
        assert!(ReturnEstimatorConfig::fixed(1.1, 0.5).validate().is_err());
        assert!(ReturnEstimatorConfig::fixed(0.9, -0.1).validate().is_err());
        let mut c = peng(0.9);
        c.mode = LambdaMode::ErrorBounded {
            max_error: 0.0,
            max_depth: 7,
        };
        assert!(c.validate().is_err());
        c.mode = LambdaMode::MedianDynamic { k: 0 };
        assert!(c.validate().is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        /// Random block with absorbing ends, truncations and ties in Q.
        fn arb_block() -> impl Strategy<Value = BlockView> {
            (1usize..40, 1usize..4).prop_flat_map(|(b, na)| {
                (
                    prop::collection::vec(-1.0f64..1.0, b),
                    prop::collection::vec(0..na, b),
                    prop::collection::vec(0u8..20, b),
                    prop::collection::vec(prop::collection::vec(-5i32..5, na), b + 1),
                )
                    .prop_map(move |(rewards, actions, kinds, q)| {
                        let terminals: Vec<bool> = kinds.iter().map(|&k| k == 0).collect();
                        let episode_ends: Vec<bool> = kinds.iter().map(|&k| k <= 1).collect();
                        let mut q_bootstrap: Vec<Vec<f64>> = q
                            .into_iter()
                            .map(|v| v.into_iter().map(|x| x as f64 * 0.5).collect())
                            .collect();
                        for i in 0..b {
                            if terminals[i] {
                                q_bootstrap[i + 1].clear();
                            }
                        }
                        let q_taken = (0..b).map(|i| i as f64 * 0.1).collect();
                        BlockView {
                            rewards,
                            actions,
                            terminals,
                            episode_ends,
                            q_bootstrap,
                            q_taken,
                        }
                    })
            })
        }

        proptest! {
            #[test]
            fn recursion_matches_direct_sum(block in arb_block(), lambda in 0.0f64..=1.0, gamma in 0.0f64..=1.0) {
                let cfg = ReturnEstimatorConfig::fixed(gamma, lambda);
                let seq = lambda_return_sequence(&block, &cfg, lambda).unwrap();
                for t in 0..block.len() {
                    let direct = lambda_return_direct(&block, t, lambda, gamma).unwrap();
                    prop_assert!((seq.returns[t] - direct).abs() < 1e-9, "t={t}: {} vs {direct}", seq.returns[t]);
                }
            }

            #[test]
            fn lambda_return_lies_between_n_step_returns(block in arb_block(), lambda in 0.0f64..=1.0, gamma in 0.0f64..=1.0) {
                let cfg = ReturnEstimatorConfig::fixed(gamma, lambda);
                let seq = lambda_return_sequence(&block, &cfg, lambda).unwrap();
                for t in 0..block.len() {
                    let horizon = block.segment_end(t) + 1 - t;
                    let nstep: Vec<f64> =
                        (1..=horizon).map(|n| n_step_return(&block, t, n, gamma).unwrap()).collect();
                    let lo = nstep.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = nstep.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(seq.returns[t] >= lo - 1e-9 && seq.returns[t] <= hi + 1e-9);
                }
            }

            #[test]
            fn weights_telescope_to_one(b in 1usize..60, lambda in 0.0f64..=1.0, c in -10.0f64..10.0) {
                let block = BlockView::contiguous(vec![0.0; b], vec![0; b], vec![false; b], vec![vec![c]; b + 1]);
                for t in 0..b {
                    let r = lambda_return_direct(&block, t, lambda, 1.0).unwrap();
                    prop_assert!((r - c).abs() < 1e-9);
                }
            }

            #[test]
            fn watkins_with_every_action_exploratory_is_one_step(block in arb_block(), lambda in 0.0f64..=1.0, gamma in 0.0f64..=1.0) {
                let mut block = block;
                for i in 0..block.len() {
                    let q = &mut block.q_bootstrap[i];
                    if q.is_empty() { continue; }
                    let a = block.actions[i] % q.len();
                    block.actions[i] = a;
                    if q.len() == 1 {
                        q.push(q[0] + 1.0);
                    }
                    let other = q.iter().enumerate().filter(|&(j, _)| j != a).map(|(_, &v)| v);
                    q[a] = other.fold(f64::NEG_INFINITY, f64::max) - 1.0;
                }
                for i in 0..block.len() {
                    if block.terminals[i] { continue; }
                    while block.q_bootstrap[i + 1].len() < 2 {
                        block.q_bootstrap[i + 1].push(0.0);
                    }
                }
                prop_assume!(block.validate().is_ok());
                let mut cfg = ReturnEstimatorConfig::fixed(gamma, lambda);
                cfg.variant = TraceVariant::Watkins;
                let seq = lambda_return_sequence(&block, &cfg, lambda).unwrap();
                for t in 0..block.len() {
                    let one = n_step_return(&block, t, 1, gamma).unwrap();
                    prop_assert!((seq.returns[t] - one).abs() < 1e-12);
                }
            }
        }
    }
}
