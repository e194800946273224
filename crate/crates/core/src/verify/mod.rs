//! Checkers for the structural truthfulness conditions, by exhaustive
//! enumeration of realizations and bid grids, plus Monte-Carlo checks for
//! randomized rules.

mod counterexample;
mod montecarlo;
mod named;
mod structural;
mod truthful;

pub use counterexample::{replay_mechanism, replay_rule, Counterexample, Observed, Verdict, ViolationKind};
pub use montecarlo::{
    check_monotone_in_expectation_mc, check_weakly_truthful_mc, MonotoneReport, MonotoneRow, WeakTruthReport,
    WeakTruthRow,
};
pub use named::{run_named_checks, CheckKind, CheckOutcome, NamedBudget};
pub use structural::{
    check_bid_independent, check_exploration_separated, check_pointwise_monotone, check_weakly_separated,
    find_influential_rounds, is_secured, Influence,
};
pub use truthful::{check_normalized, check_truthful_exhaustive};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest `k * T` any exhaustive check will enumerate.
pub const HARD_CAP_KT: usize = 22;

/// Finite, strictly increasing, positive bid values per agent.
#[derive(Clone, Debug, PartialEq)]
pub struct BidGrid<B: Scalar = f64> {
    per_agent: Vec<Vec<B>>,
}

impl<B: Scalar> BidGrid<B> {
    pub fn new(per_agent: Vec<Vec<B>>) -> Result<Self> {
        if per_agent.is_empty() {
            return Err(Error::Config("bid grid needs at least one agent".into()));
        }
        for (i, g) in per_agent.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::Config(format!("bid grid for agent {i} is empty")));
            }
            if !(g[0] > B::zero()) || g.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Config(format!("bid grid for agent {i} must be positive and strictly increasing")));
            }
        }
        Ok(Self { per_agent })
    }

    pub fn uniform(agents: usize, values: &[B]) -> Result<Self> {
        Self::new(vec![values.to_vec(); agents])
    }

    /// `{1/4, 1/2, 1, 2, 4} * base` for every agent.
    pub fn standard(agents: usize, base: B) -> Result<Self> {
        let four = B::from_count(4);
        let two = B::from_count(2);
        Self::uniform(agents, &[base / four, base / two, base, base * two, base * four])
    }

    pub fn agents(&self) -> usize {
        self.per_agent.len()
    }

    pub fn values(&self, agent: usize) -> &[B] {
        &self.per_agent[agent]
    }

    pub fn profile_count(&self) -> u128 {
        self.per_agent.iter().map(|g| g.len() as u128).product()
    }

    /// Profile number `index` in lexicographic order, agent 0 slowest.
    pub fn profile(&self, index: usize) -> Vec<B> {
        let digits = self.digits(index);
        digits.iter().enumerate().map(|(i, &d)| self.per_agent[i][d]).collect()
    }

    fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.agents()];
        for i in (0..self.agents()).rev() {
            let n = self.per_agent[i].len();
            out[i] = index % n;
            index /= n;
        }
        out
    }

    fn index_of(&self, digits: &[usize]) -> usize {
        digits.iter().enumerate().fold(0, |acc, (i, &d)| acc * self.per_agent[i].len() + d)
    }

    /// Index of the profile equal to `index` with agent's grid position
    /// replaced by `position`.
    pub(crate) fn with_position(&self, index: usize, agent: usize, position: usize) -> usize {
        let mut d = self.digits(index);
        d[agent] = position;
        self.index_of(&d)
    }

    pub(crate) fn position(&self, index: usize, agent: usize) -> usize {
        self.digits(index)[agent]
    }
}

/// Limits for exhaustive enumeration.
#[derive(Clone, Debug)]
pub struct EnumerationBudget<B: Scalar = f64> {
    /// Largest `k * T`; `2^(k*T)` realizations are enumerated.
    pub max_kt: usize,
    pub max_profiles: usize,
    pub grid: BidGrid<B>,
}

impl<B: Scalar> EnumerationBudget<B> {
    pub fn new(grid: BidGrid<B>) -> Self {
        Self { max_kt: 16, max_profiles: 4096, grid }
    }

    pub fn with_max_kt(mut self, max_kt: usize) -> Result<Self> {
        if max_kt > HARD_CAP_KT {
            return Err(Error::Config(format!("max k*T {max_kt} exceeds the hard cap {HARD_CAP_KT}")));
        }
        self.max_kt = max_kt;
        Ok(self)
    }

    /// Validates a `k x T` enumeration against the budget and returns the
    /// number of realizations.
    pub fn admit(&self, agents: usize, horizon: usize) -> Result<u64> {
        if self.grid.agents() != agents {
            return Err(Error::dim("bid grid agents", agents, self.grid.agents()));
        }
        let kt = agents * horizon;
        let cap = self.max_kt.min(HARD_CAP_KT);
        if kt > cap {
            return Err(Error::Budget {
                what: "realizations",
                needed: 1u128.checked_shl(kt as u32).unwrap_or(u128::MAX),
                limit: 1u128 << cap,
            });
        }
        let profiles = self.grid.profile_count();
        if profiles > self.max_profiles as u128 {
            return Err(Error::Budget { what: "bid profiles", needed: profiles, limit: self.max_profiles as u128 });
        }
        Ok(1u64 << kt)
    }
}
