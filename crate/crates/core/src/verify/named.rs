//! Checks selected by name for one of the named rules, as used by the
//! command line and the C interface.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::{
    check_exploration_separated, check_normalized, check_pointwise_monotone, check_truthful_exhaustive, check_weakly_separated,
    BidGrid, EnumerationBudget, Verdict, ViolationKind,
};
use crate::error::{Error, Result};
use crate::mechanisms::{
    EliminationRule, EliminationThreshold, Mechanism, NaiveMechanism, NaiveRule, PaymentRule, PaymentWrapper, RuleKind, Ucb1Mechanism,
    Ucb1Rule,
};
use crate::rule::AllocationRule;
use crate::scalar::{Rational, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    Pointwise,
    Expsep,
    Weaksep,
    Truthful,
    Normalized,
}

impl CheckKind {
    pub const ALL: [CheckKind; 5] =
        [CheckKind::Pointwise, CheckKind::Expsep, CheckKind::Weaksep, CheckKind::Truthful, CheckKind::Normalized];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Pointwise => "pointwise",
            CheckKind::Expsep => "expsep",
            CheckKind::Weaksep => "weaksep",
            CheckKind::Truthful => "truthful",
            CheckKind::Normalized => "normalized",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|c| c.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CheckKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown check {s:?}; valid checks: {}", Self::valid_names())))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub check: CheckKind,
    pub violation: Option<ViolationKind>,
    /// Counterexample in its text format.
    pub counterexample: Option<String>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Limits and the common bid/value grid for [`run_named_checks`].
#[derive(Clone, Debug, PartialEq)]
pub struct NamedBudget {
    pub grid: Vec<f64>,
    pub max_kt: usize,
    pub max_profiles: usize,
}

impl NamedBudget {
    pub fn new(grid: Vec<f64>) -> Self {
        Self { grid, max_kt: 16, max_profiles: 4096 }
    }

    fn build<B: Scalar>(&self, agents: usize, horizon: usize, grid: Vec<B>) -> Result<EnumerationBudget<B>> {
        let mut budget = EnumerationBudget::new(BidGrid::uniform(agents, &grid)?).with_max_kt(self.max_kt)?;
        budget.max_profiles = self.max_profiles;
        budget.admit(agents, horizon)?;
        Ok(budget)
    }
}

/// Runs `checks` in order. The naive rule is checked in exact rational
/// arithmetic, UCB1 and elimination in floating point; PSim is randomized
/// and rejected.
pub fn run_named_checks(
    rule: RuleKind,
    agents: usize,
    horizon: usize,
    checks: &[CheckKind],
    budget: &NamedBudget,
) -> Result<Vec<CheckOutcome>> {
    match rule {
        RuleKind::Naive => {
            let grid = budget
                .grid
                .iter()
                .map(|&x| Rational::approximate_float(x).ok_or_else(|| Error::Config(format!("grid value {x} is not representable"))))
                .collect::<Result<Vec<_>>>()?;
            let budget = budget.build(agents, horizon, grid)?;
            let r = NaiveRule::<Rational>::new(agents, horizon)?;
            run_all(checks, &r, &NaiveMechanism(r.clone()), &budget)
        }
        RuleKind::Ucb1 => {
            let budget = budget.build(agents, horizon, budget.grid.clone())?;
            run_all(checks, &Ucb1Rule::new(agents, horizon), &Ucb1Mechanism::new(agents, horizon), &budget)
        }
        RuleKind::Elimination => {
            let v_max = budget.grid.iter().fold(0.0, |m: f64, &x| m.max(x));
            let budget = budget.build(agents, horizon, budget.grid.clone())?;
            let r = EliminationRule::<f64>::with_threshold(agents, horizon, v_max, EliminationThreshold::default());
            run_all(checks, &r, &PaymentWrapper::new(r.clone(), PaymentRule::Myerson), &budget)
        }
        RuleKind::Psim => Err(Error::NonDeterministic),
    }
}

fn run_all<B, R, M>(checks: &[CheckKind], rule: &R, mech: &M, budget: &EnumerationBudget<B>) -> Result<Vec<CheckOutcome>>
where
    B: Scalar,
    R: AllocationRule<B> + Clone + Sync,
    M: Mechanism<B> + Clone + Sync,
{
    checks
        .iter()
        .map(|&check| {
            let verdict: Verdict<B> = match check {
                CheckKind::Pointwise => check_pointwise_monotone(rule, budget)?,
                CheckKind::Expsep => check_exploration_separated(rule, budget)?,
                CheckKind::Weaksep => check_weakly_separated(rule, budget)?,
                CheckKind::Truthful => check_truthful_exhaustive(mech, budget)?,
                CheckKind::Normalized => check_normalized(mech, budget)?,
            };
            let ce = verdict.counterexample();
            Ok(CheckOutcome { check, violation: ce.map(|c| c.kind), counterexample: ce.map(|c| c.to_text()) })
        })
        .collect()
}
