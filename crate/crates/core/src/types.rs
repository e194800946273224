//! Domain value types: realizations, bid profiles, instances, histories and
//! per-run outcomes.
//!
//! Agents and rounds are 0-based throughout the crate and in every file
//! format it reads or writes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Anything that can answer "would agent `i` be clicked if shown at round
/// `t`?". The engine queries it only for the agent actually shown.
pub trait ClickSource {
    fn agents(&self) -> usize;
    fn horizon(&self) -> usize;
    fn click(&self, agent: usize, round: usize) -> bool;
}

/// Full `k x T` click table, including bits that no run ever observes.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Realization {
    agents: usize,
    horizon: usize,
    bits: Vec<bool>,
}

impl Realization {
    pub fn new(agents: usize, horizon: usize, bits: Vec<bool>) -> Result<Self> {
        if agents == 0 {
            return Err(Error::InvalidInstance("realization needs at least one agent".into()));
        }
        if bits.len() != agents * horizon {
            return Err(Error::dim("realization bits", agents * horizon, bits.len()));
        }
        Ok(Self { agents, horizon, bits })
    }

    pub fn zeros(agents: usize, horizon: usize) -> Self {
        Self { agents, horizon, bits: vec![false; agents * horizon] }
    }

    pub fn from_fn(agents: usize, horizon: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(agents * horizon);
        for i in 0..agents {
            for t in 0..horizon {
                bits.push(f(i, t));
            }
        }
        Self { agents, horizon, bits }
    }

    /// Decodes the `index`-th realization of the `2^(k*T)` enumeration:
    /// bit `i*T + t` of `index` is `rho_i(t)`.
    pub fn from_index(agents: usize, horizon: usize, index: u64) -> Self {
        Self::from_fn(agents, horizon, |i, t| (index >> (i * horizon + t)) & 1 == 1)
    }

    pub fn to_index(&self) -> Option<u64> {
        if self.bits.len() > 64 {
            return None;
        }
        Some(self.bits.iter().enumerate().fold(0u64, |acc, (n, &b)| acc | ((b as u64) << n)))
    }

    /// Parses one line per agent, each `T` characters of `0`/`1`.
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self> {
        let rows: Vec<&str> = rows.iter().map(|r| r.as_ref().trim()).filter(|r| !r.is_empty()).collect();
        if rows.is_empty() {
            return Err(Error::Parse("realization has no rows".into()));
        }
        let horizon = rows[0].len();
        let mut bits = Vec::with_capacity(rows.len() * horizon);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != horizon {
                return Err(Error::Parse(format!(
                    "realization row {i} has {} columns, expected {horizon}",
                    row.len()
                )));
            }
            for c in row.chars() {
                match c {
                    '0' => bits.push(false),
                    '1' => bits.push(true),
                    other => return Err(Error::Parse(format!("unexpected character {other:?} in realization"))),
                }
            }
        }
        Self::new(rows.len(), horizon, bits)
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim_start().starts_with('#')).collect();
        Self::from_rows(&rows)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.agents * (self.horizon + 1));
        for i in 0..self.agents {
            for t in 0..self.horizon {
                out.push(if self.get(i, t) { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn get(&self, agent: usize, round: usize) -> bool {
        self.bits[agent * self.horizon + round]
    }

    pub fn set(&mut self, agent: usize, round: usize, value: bool) {
        self.bits[agent * self.horizon + round] = value;
    }

    /// `rho (+) 1(agent, round)`.
    pub fn flipped(&self, agent: usize, round: usize) -> Self {
        let mut out = self.clone();
        let n = agent * self.horizon + round;
        out.bits[n] = !out.bits[n];
        out
    }

    pub fn total_clicks(&self, agent: usize) -> usize {
        (0..self.horizon).filter(|&t| self.get(agent, t)).count()
    }
}

impl ClickSource for Realization {
    fn agents(&self) -> usize {
        self.agents
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn click(&self, agent: usize, round: usize) -> bool {
        self.get(agent, round)
    }
}

impl fmt::Debug for Realization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self.to_text().lines().map(str::to_owned).collect();
        write!(f, "Realization{rows:?}")
    }
}

/// Strictly positive bids, one per agent.
#[derive(Clone, Debug, PartialEq)]
pub struct BidProfile<B: Scalar = f64>(Vec<B>);

impl<B: Scalar> BidProfile<B> {
    pub fn new(bids: Vec<B>) -> Result<Self> {
        if bids.is_empty() {
            return Err(Error::InvalidInstance("bid profile is empty".into()));
        }
        if let Some((i, b)) = bids.iter().enumerate().find(|(_, b)| !(**b > B::zero())) {
            return Err(Error::InvalidInstance(format!("bid of agent {i} must be positive, got {b}")));
        }
        Ok(Self(bids))
    }

    pub fn as_slice(&self) -> &[B] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> B {
        self.0.iter().copied().fold(self.0[0], B::max_of)
    }

    /// `(x, b_{-i})`.
    pub fn with_bid(&self, agent: usize, x: B) -> Vec<B> {
        let mut out = self.0.clone();
        out[agent] = x;
        out
    }

    pub fn into_vec(self) -> Vec<B> {
        self.0
    }
}

/// Stochastic instance: CTRs, private values and the submitted bids.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticInstance {
    pub horizon: usize,
    pub ctrs: Vec<f64>,
    pub values: Vec<f64>,
    pub bids: BidProfile<f64>,
    pub v_max: f64,
}

impl StochasticInstance {
    pub fn new(horizon: usize, ctrs: Vec<f64>, values: Vec<f64>, bids: BidProfile<f64>, v_max: f64) -> Result<Self> {
        let k = ctrs.len();
        if k == 0 {
            return Err(Error::InvalidInstance("instance has no agents".into()));
        }
        if values.len() != k {
            return Err(Error::dim("values", k, values.len()));
        }
        if bids.len() != k {
            return Err(Error::dim("bids", k, bids.len()));
        }
        if !(v_max > 0.0) {
            return Err(Error::InvalidInstance("v_max must be positive".into()));
        }
        if let Some(mu) = ctrs.iter().find(|mu| !(0.0..=1.0).contains(*mu)) {
            return Err(Error::InvalidInstance(format!("CTR {mu} outside [0, 1]")));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v <= v_max)) {
            return Err(Error::InvalidInstance(format!("value {v} outside (0, v_max]")));
        }
        Ok(Self { horizon, ctrs, values, bids, v_max })
    }

    /// Truthful instance: bids equal values.
    pub fn truthful(horizon: usize, ctrs: Vec<f64>, values: Vec<f64>, v_max: f64) -> Result<Self> {
        let bids = BidProfile::new(values.clone())?;
        Self::new(horizon, ctrs, values, bids, v_max)
    }

    pub fn agents(&self) -> usize {
        self.ctrs.len()
    }

    /// `argmax_i mu_i v_i`, ties to the lowest index.
    pub fn best_agent(&self) -> usize {
        argmax_first(self.ctrs.iter().zip(&self.values).map(|(m, v)| m * v))
    }

    pub fn welfare_rate(&self, agent: usize) -> f64 {
        self.ctrs[agent] * self.values[agent]
    }
}

/// Index of the largest element; ties go to the lowest index.
pub fn argmax_first<T: PartialOrd>(items: impl IntoIterator<Item = T>) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (i, x) in items.into_iter().enumerate() {
        match &best {
            Some((_, b)) if !(x > *b) => {}
            _ => best = Some((i, x)),
        }
    }
    best.map(|(i, _)| i).unwrap_or(0)
}

/// One round as seen by the mechanism.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Record {
    pub agent: usize,
    pub click: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct History(pub Vec<Record>);

impl History {
    pub fn with_capacity(n: usize) -> Self {
        Self(Vec::with_capacity(n))
    }

    pub fn from_pairs(pairs: &[(usize, bool)]) -> Self {
        Self(pairs.iter().map(|&(agent, click)| Record { agent, click }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.0
    }

    pub fn allocations(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|r| r.agent)
    }
}

/// Per-agent click and impression counts of one run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickAllocation {
    pub clicks: Vec<u64>,
    pub impressions: Vec<u64>,
}

impl ClickAllocation {
    pub fn total_clicks(&self) -> u64 {
        self.clicks.iter().sum()
    }
}

/// Counts clicks and impressions per agent. Records naming an agent outside
/// `0..k` are ignored.
pub fn click_allocation(history: &History, agents: usize) -> ClickAllocation {
    let mut clicks = vec![0; agents];
    let mut impressions = vec![0; agents];
    for r in history.records() {
        if r.agent < agents {
            impressions[r.agent] += 1;
            clicks[r.agent] += r.click as u64;
        }
    }
    ClickAllocation { clicks, impressions }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MechanismOutcome<B: Scalar = f64> {
    pub history: History,
    pub clicks: ClickAllocation,
    pub payments: Vec<B>,
    pub utilities: Vec<B>,
}

impl<B: Scalar> MechanismOutcome<B> {
    /// Builds the outcome with quasi-linear utilities `v_i C_i - P_i`.
    pub fn new(history: History, payments: Vec<B>, values: &[B]) -> Result<Self> {
        let k = payments.len();
        if values.len() != k {
            return Err(Error::dim("values", k, values.len()));
        }
        let clicks = click_allocation(&history, k);
        let utilities = (0..k)
            .map(|i| values[i] * B::from_count(clicks.clicks[i]) - payments[i])
            .collect();
        Ok(Self { history, clicks, payments, utilities })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn click_allocation_counts() {
        let h = History::from_pairs(&[(0, true), (0, false), (1, true)]);
        let c = click_allocation(&h, 2);
        assert_eq!(c.clicks, vec![1, 1]);
        assert_eq!(c.impressions, vec![2, 1]);

        let none = History::from_pairs(&[(0, false), (1, false)]);
        assert_eq!(click_allocation(&none, 2).clicks, vec![0, 0]);

        let sat = History::from_pairs(&[(0, true); 7]);
        assert_eq!(click_allocation(&sat, 2).clicks[0], 7);
    }

    #[test]
    fn realization_text_round_trip() {
        let r = Realization::from_rows(&["0110", "1001"]).unwrap();
        assert_eq!(r.agents(), 2);
        assert_eq!(r.horizon(), 4);
        assert!(r.get(0, 1) && !r.get(0, 0) && r.get(1, 3));
        assert_eq!(Realization::parse_text(&r.to_text()).unwrap(), r);
        assert!(Realization::from_rows(&["01", "1"]).is_err());
        assert!(Realization::from_rows(&["0x"]).is_err());
    }

    #[test]
    fn index_encoding_round_trips() {
        for idx in 0..64u64 {
            let r = Realization::from_index(2, 3, idx);
            assert_eq!(r.to_index(), Some(idx));
        }
    }

    #[test]
    fn bids_must_be_positive() {
        assert!(BidProfile::new(vec![1.0, 0.0]).is_err());
        assert!(BidProfile::<f64>::new(vec![]).is_err());
        assert!(BidProfile::new(vec![1.0, f64::NAN]).is_err());
        assert_eq!(BidProfile::new(vec![1.0, 3.0]).unwrap().max(), 3.0);
    }

    #[test]
    fn instance_validation() {
        assert!(StochasticInstance::truthful(10, vec![0.5, 1.2], vec![1.0, 1.0], 1.0).is_err());
        assert!(StochasticInstance::truthful(10, vec![0.5, 0.2], vec![1.0, 2.0], 1.0).is_err());
        let inst = StochasticInstance::truthful(10, vec![0.5, 0.6], vec![1.0, 1.0], 1.0).unwrap();
        assert_eq!(inst.best_agent(), 1);
    }

    #[test]
    fn utilities_are_quasi_linear() {
        let h = History::from_pairs(&[(0, true), (1, true), (1, true)]);
        let out = MechanismOutcome::new(h, vec![0.5, 1.0], &[2.0, 1.0]).unwrap();
        assert_eq!(out.utilities, vec![1.5, 1.0]);
    }

    #[test]
    fn argmax_ties_to_lowest_index() {
        assert_eq!(argmax_first([1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax_first([2, 2]), 0);
    }
}
