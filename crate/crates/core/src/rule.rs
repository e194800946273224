//! The allocation-rule contract and the engine that runs a rule against a
//! click source.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{ClickSource, History, Record};

/// An online allocation rule.
///
/// Per run the engine calls [`begin`](Self::begin) once, then for every round
/// `t` it calls [`choose`](Self::choose) followed by
/// [`observe`](Self::observe) with the click bit of the chosen agent only.
/// A rule therefore never sees bits of agents it did not show.
pub trait AllocationRule<B: Scalar = f64>: Send {
    fn agents(&self) -> usize;
    fn horizon(&self) -> usize;

    fn is_deterministic(&self) -> bool {
        true
    }

    /// Resets all per-run state. Deterministic rules ignore `seed`.
    fn begin(&mut self, bids: &[B], seed: u64);

    fn choose(&mut self, round: usize) -> usize;

    fn observe(&mut self, round: usize, agent: usize, click: bool);
}

pub(crate) fn check_dimensions<B: Scalar, R: AllocationRule<B> + ?Sized>(
    rule: &R,
    bids: &[B],
    clicks: &(impl ClickSource + ?Sized),
) -> Result<()> {
    let k = rule.agents();
    if bids.len() != k {
        return Err(Error::dim("bids", k, bids.len()));
    }
    if clicks.agents() != k {
        return Err(Error::dim("realization agents", k, clicks.agents()));
    }
    if clicks.horizon() != rule.horizon() {
        return Err(Error::dim("realization rounds", rule.horizon(), clicks.horizon()));
    }
    Ok(())
}

/// Runs one full horizon, invoking `on_round(t, agent, click)` after every
/// round. Dimensions must already be validated.
pub(crate) fn drive<B, R, C, F>(rule: &mut R, bids: &[B], clicks: &C, seed: u64, mut on_round: F)
where
    B: Scalar,
    R: AllocationRule<B> + ?Sized,
    C: ClickSource + ?Sized,
    F: FnMut(usize, usize, bool),
{
    let k = rule.agents();
    rule.begin(bids, seed);
    for t in 0..rule.horizon() {
        let agent = rule.choose(t);
        assert!(agent < k, "rule chose agent {agent} out of {k}");
        let click = clicks.click(agent, t);
        rule.observe(t, agent, click);
        on_round(t, agent, click);
    }
}

/// Runs `rule` on `bids` and `clicks`, returning the observed history.
pub fn run_allocation<B, R, C>(rule: &mut R, bids: &[B], clicks: &C) -> Result<History>
where
    B: Scalar,
    R: AllocationRule<B> + ?Sized,
    C: ClickSource + ?Sized,
{
    run_allocation_seeded(rule, bids, clicks, 0)
}

pub fn run_allocation_seeded<B, R, C>(rule: &mut R, bids: &[B], clicks: &C, seed: u64) -> Result<History>
where
    B: Scalar,
    R: AllocationRule<B> + ?Sized,
    C: ClickSource + ?Sized,
{
    check_dimensions(rule, bids, clicks)?;
    let mut history = History::with_capacity(rule.horizon());
    drive(rule, bids, clicks, seed, |_, agent, click| history.0.push(Record { agent, click }));
    Ok(history)
}

/// Allocation sequence only; panics on dimension mismatch. Used by the
/// enumeration checkers after up-front validation.
pub(crate) fn allocations<B, R, C>(rule: &mut R, bids: &[B], clicks: &C) -> Vec<usize>
where
    B: Scalar,
    R: AllocationRule<B> + ?Sized,
    C: ClickSource + ?Sized,
{
    let mut out = Vec::with_capacity(rule.horizon());
    drive(rule, bids, clicks, 0, |_, agent, _| out.push(agent));
    out
}

/// Always shows the same agent.
#[derive(Clone, Debug)]
pub struct ConstantRule {
    agents: usize,
    horizon: usize,
    agent: usize,
}

impl ConstantRule {
    pub fn new(agents: usize, horizon: usize, agent: usize) -> Result<Self> {
        if agent >= agents {
            return Err(Error::Config(format!("constant agent {agent} out of range for k={agents}")));
        }
        Ok(Self { agents, horizon, agent })
    }
}

impl<B: Scalar> AllocationRule<B> for ConstantRule {
    fn agents(&self) -> usize {
        self.agents
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn begin(&mut self, _bids: &[B], _seed: u64) {}
    fn choose(&mut self, _round: usize) -> usize {
        self.agent
    }
    fn observe(&mut self, _round: usize, _agent: usize, _click: bool) {}
}

/// Two-agent bid comparison, ignoring clicks: agent 0 every round iff
/// `b_0 >= b_1` (or, when `inverted`, iff `b_0 < b_1`).
#[derive(Clone, Debug)]
pub struct ThresholdRule {
    horizon: usize,
    inverted: bool,
    winner: usize,
}

impl ThresholdRule {
    pub fn new(horizon: usize) -> Self {
        Self { horizon, inverted: false, winner: 0 }
    }

    /// Anti-monotone variant: raising b_0 past b_1 loses every impression.
    pub fn inverted(horizon: usize) -> Self {
        Self { horizon, inverted: true, winner: 0 }
    }
}

impl<B: Scalar> AllocationRule<B> for ThresholdRule {
    fn agents(&self) -> usize {
        2
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn begin(&mut self, bids: &[B], _seed: u64) {
        let first = if self.inverted { bids[0] < bids[1] } else { bids[0] >= bids[1] };
        self.winner = if first { 0 } else { 1 };
    }
    fn choose(&mut self, _round: usize) -> usize {
        self.winner
    }
    fn observe(&mut self, _round: usize, _agent: usize, _click: bool) {}
}

/// Plays the fixed sequence `agents[t]`, ignoring bids and clicks.
#[derive(Clone, Debug)]
pub struct ScheduleRule {
    agents: usize,
    schedule: Vec<usize>,
}

impl ScheduleRule {
    pub fn new(agents: usize, schedule: Vec<usize>) -> Result<Self> {
        if let Some(&a) = schedule.iter().find(|&&a| a >= agents) {
            return Err(Error::Config(format!("schedule names agent {a} out of range for k={agents}")));
        }
        Ok(Self { agents, schedule })
    }
}

impl<B: Scalar> AllocationRule<B> for ScheduleRule {
    fn agents(&self) -> usize {
        self.agents
    }
    fn horizon(&self) -> usize {
        self.schedule.len()
    }
    fn begin(&mut self, _bids: &[B], _seed: u64) {}
    fn choose(&mut self, round: usize) -> usize {
        self.schedule[round]
    }
    fn observe(&mut self, _round: usize, _agent: usize, _click: bool) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Realization;

    #[test]
    fn constant_rule_history() {
        let rho = Realization::from_rows(&["1011", "0100"]).unwrap();
        let mut rule = ConstantRule::new(2, 4, 0).unwrap();
        let h = run_allocation(&mut rule, &[1.0, 2.0], &rho).unwrap();
        assert_eq!(h, History::from_pairs(&[(0, true), (0, false), (0, true), (0, true)]));
    }

    #[test]
    fn single_agent_always_shown() {
        let rho = Realization::from_rows(&["101"]).unwrap();
        let mut rule = ConstantRule::new(1, 3, 0).unwrap();
        let h = run_allocation(&mut rule, &[7.0], &rho).unwrap();
        assert!(h.allocations().all(|a| a == 0));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let rho = Realization::zeros(2, 3);
        let mut rule = ConstantRule::new(2, 4, 0).unwrap();
        assert!(matches!(
            run_allocation(&mut rule, &[1.0, 1.0], &rho),
            Err(Error::Dimension { .. })
        ));
        let mut rule = ConstantRule::new(2, 3, 0).unwrap();
        assert!(run_allocation(&mut rule, &[1.0], &rho).is_err());
    }

    #[test]
    fn threshold_rule_compares_bids() {
        let rho = Realization::zeros(2, 1);
        let mut rule = ThresholdRule::new(1);
        assert_eq!(allocations(&mut rule, &[3.0, 2.0], &rho), vec![0]);
        assert_eq!(allocations(&mut rule, &[2.0, 2.0], &rho), vec![0]);
        assert_eq!(allocations(&mut rule, &[1.0, 2.0], &rho), vec![1]);
        let mut anti = ThresholdRule::inverted(1);
        assert_eq!(allocations(&mut anti, &[1.0, 2.0], &rho), vec![0]);
    }
}
