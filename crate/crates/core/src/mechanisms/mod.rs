//! Allocation rules and payment rules.

pub mod elimination;
pub mod mechanism;
pub mod myerson;
pub mod naive;
pub mod psim;
pub mod ucb1;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rule::AllocationRule;
use crate::types::ClickSource;

pub use elimination::{r0, EliminationRule, EliminationState, EliminationThreshold};
pub use mechanism::{run_mechanism, Mechanism, NaiveMechanism, PaymentRule, PaymentWrapper, PsimMechanism, RunResult, Ucb1Mechanism};
pub use myerson::{integrate_step, myerson_payment, myerson_payment_exact, myerson_payment_with, ratio_candidates, Breakpoints, StepValue};
pub use naive::{naive_exploration_rounds, naive_payments, NaiveParams, NaiveRule};
pub use psim::{psim_gamma, psim_gammas, psim_payment_per_click, psim_price_closed_form, PsimParams, PsimRule};
pub use ucb1::{ucb1_round_price, Ucb1Rule, Ucb1State};

/// Named rules selectable from sweeps and the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleKind {
    Naive,
    Ucb1,
    Elimination,
    Psim,
}

impl RuleKind {
    pub const ALL: [RuleKind; 4] = [RuleKind::Naive, RuleKind::Ucb1, RuleKind::Elimination, RuleKind::Psim];

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Naive => "naive",
            RuleKind::Ucb1 => "ucb1",
            RuleKind::Elimination => "elimination",
            RuleKind::Psim => "psim",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|r| r.name()).collect::<Vec<_>>().join(", ")
    }

    pub fn build(self, agents: usize, horizon: usize, v_max: f64) -> Result<AnyRule> {
        Ok(match self {
            RuleKind::Naive => AnyRule::Naive(NaiveRule::new(agents, horizon)?),
            RuleKind::Ucb1 => AnyRule::Ucb1(Ucb1Rule::new(agents, horizon)),
            RuleKind::Elimination => AnyRule::Elimination(EliminationRule::with_threshold(
                agents,
                horizon,
                v_max,
                EliminationThreshold::default(),
            )),
            RuleKind::Psim => AnyRule::Psim(PsimRule::new(agents, horizon, v_max)?),
        })
    }

    /// The rule with its own payment scheme. Elimination has none of its
    /// own and is paired with the full-information Myerson payment.
    pub fn mechanism(self, agents: usize, horizon: usize, v_max: f64) -> Result<Box<dyn Mechanism<f64>>> {
        Ok(match self {
            RuleKind::Naive => Box::new(NaiveMechanism::<f64>::new(agents, horizon)?),
            RuleKind::Ucb1 => Box::new(Ucb1Mechanism::new(agents, horizon)),
            RuleKind::Psim => Box::new(PsimMechanism::new(agents, horizon, v_max)?),
            RuleKind::Elimination => Box::new(PaymentWrapper::new(
                EliminationRule::<f64>::with_threshold(agents, horizon, v_max, EliminationThreshold::default()),
                PaymentRule::Myerson,
            )),
        })
    }
}

impl serde::Serialize for RuleKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown rule '{s}'; valid rules: {}", Self::valid_names())))
    }
}

/// Closed set of `f64` rules, so sweeps can hold heterogeneous rules by value.
#[derive(Clone, Debug)]
pub enum AnyRule {
    Naive(NaiveRule<f64>),
    Ucb1(Ucb1Rule),
    Elimination(EliminationRule<f64>),
    Psim(PsimRule),
}

macro_rules! dispatch {
    ($self:expr, $r:ident => $body:expr) => {
        match $self {
            AnyRule::Naive($r) => $body,
            AnyRule::Ucb1($r) => $body,
            AnyRule::Elimination($r) => $body,
            AnyRule::Psim($r) => $body,
        }
    };
}

impl AllocationRule<f64> for AnyRule {
    fn agents(&self) -> usize {
        dispatch!(self, r => AllocationRule::<f64>::agents(r))
    }
    fn horizon(&self) -> usize {
        dispatch!(self, r => AllocationRule::<f64>::horizon(r))
    }
    fn is_deterministic(&self) -> bool {
        dispatch!(self, r => AllocationRule::<f64>::is_deterministic(r))
    }
    fn begin(&mut self, bids: &[f64], seed: u64) {
        dispatch!(self, r => r.begin(bids, seed))
    }
    fn choose(&mut self, round: usize) -> usize {
        dispatch!(self, r => r.choose(round))
    }
    fn observe(&mut self, round: usize, agent: usize, click: bool) {
        dispatch!(self, r => r.observe(round, agent, click))
    }
}

/// Convenience check that a source matches a rule's shape.
pub fn same_shape(rule: &impl AllocationRule<f64>, clicks: &dyn ClickSource) -> bool {
    rule.agents() == clicks.agents() && rule.horizon() == clicks.horizon()
}
