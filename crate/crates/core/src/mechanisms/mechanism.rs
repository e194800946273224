//! Mechanisms: an allocation rule paired with a payment rule.

use crate::error::{Error, Result};
use crate::mechanisms::myerson::{myerson_payment_with, DefaultBreakpoints};
use crate::mechanisms::naive::{naive_payments, NaiveRule};
use crate::mechanisms::psim::{psim_price_closed_form, PsimRule};
use crate::mechanisms::ucb1::{ucb1_round_price, Ucb1Rule};
use crate::rule::{check_dimensions, run_allocation_seeded, AllocationRule};
use crate::scalar::Scalar;
use crate::types::{click_allocation, ClickSource, History, MechanismOutcome, Record};

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult<B: Scalar = f64> {
    pub history: History,
    pub payments: Vec<B>,
}

pub trait Mechanism<B: Scalar = f64>: Send {
    fn agents(&self) -> usize;
    fn horizon(&self) -> usize;
    fn is_deterministic(&self) -> bool;
    fn run(&mut self, bids: &[B], clicks: &dyn ClickSource, seed: u64) -> Result<RunResult<B>>;
}

/// Runs `mech` and evaluates quasi-linear utilities for `values`.
pub fn run_mechanism<B: Scalar, M: Mechanism<B> + ?Sized>(
    mech: &mut M,
    bids: &[B],
    values: &[B],
    clicks: &dyn ClickSource,
    seed: u64,
) -> Result<MechanismOutcome<B>> {
    if values.len() != mech.agents() {
        return Err(Error::dim("values", mech.agents(), values.len()));
    }
    let r = mech.run(bids, clicks, seed)?;
    MechanismOutcome::new(r.history, r.payments, values)
}

impl<B: Scalar, M: Mechanism<B> + ?Sized> Mechanism<B> for Box<M> {
    fn agents(&self) -> usize {
        (**self).agents()
    }
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
    fn run(&mut self, bids: &[B], clicks: &dyn ClickSource, seed: u64) -> Result<RunResult<B>> {
        (**self).run(bids, clicks, seed)
    }
}

#[derive(Clone, Debug)]
pub struct NaiveMechanism<B: Scalar = f64>(pub NaiveRule<B>);

impl<B: Scalar> NaiveMechanism<B> {
    pub fn new(agents: usize, horizon: usize) -> Result<Self> {
        Ok(Self(NaiveRule::new(agents, horizon)?))
    }
}

impl<B: Scalar> Mechanism<B> for NaiveMechanism<B> {
    fn agents(&self) -> usize {
        self.0.agents()
    }
    fn horizon(&self) -> usize {
        AllocationRule::<B>::horizon(&self.0)
    }
    fn is_deterministic(&self) -> bool {
        true
    }
    fn run(&mut self, bids: &[B], clicks: &dyn ClickSource, seed: u64) -> Result<RunResult<B>> {
        let history = run_allocation_seeded(&mut self.0, bids, clicks, seed)?;
        let payments = naive_payments(&history, bids, self.0.params())?;
        Ok(RunResult { history, payments })
    }
}

/// UCB1 charging the per-round index ratio on every click.
#[derive(Clone, Debug)]
pub struct Ucb1Mechanism(pub Ucb1Rule);

impl Ucb1Mechanism {
    pub fn new(agents: usize, horizon: usize) -> Self {
        Self(Ucb1Rule::new(agents, horizon))
    }
}

impl Mechanism<f64> for Ucb1Mechanism {
    fn agents(&self) -> usize {
        self.0.agents()
    }
    fn horizon(&self) -> usize {
        self.0.horizon()
    }
    fn is_deterministic(&self) -> bool {
        true
    }
    fn run(&mut self, bids: &[f64], clicks: &dyn ClickSource, seed: u64) -> Result<RunResult<f64>> {
        let rule = &mut self.0;
        check_dimensions(rule, bids, clicks)?;
        let mut history = History::with_capacity(rule.horizon());
        let mut payments = vec![0.0; bids.len()];
        rule.begin(bids, seed);
        for t in 0..rule.horizon() {
            let agent = rule.choose(t);
            let price = ucb1_round_price(rule.state(), bids, agent);
            let click = clicks.click(agent, t);
            rule.observe(t, agent, click);
            if click {
                payments[agent] += price;
            }
            history.0.push(Record { agent, click });
        }
        Ok(RunResult { history, payments })
    }
}

/// PSim charging the closed-form per-click price on exploitation clicks.
#[derive(Clone, Debug)]
pub struct PsimMechanism(pub PsimRule);

impl PsimMechanism {
    pub fn new(agents: usize, horizon: usize, v_max: f64) -> Result<Self> {
        Ok(Self(PsimRule::new(agents, horizon, v_max)?))
    }
}

impl Mechanism<f64> for PsimMechanism {
    fn agents(&self) -> usize {
        self.0.agents()
    }
    fn horizon(&self) -> usize {
        self.0.horizon()
    }
    fn is_deterministic(&self) -> bool {
        false
    }
    fn run(&mut self, bids: &[f64], clicks: &dyn ClickSource, seed: u64) -> Result<RunResult<f64>> {
        let rule = &mut self.0;
        check_dimensions(rule, bids, clicks)?;
        let k = bids.len();
        let mut history = History::with_capacity(rule.horizon());
        let mut payments = vec![0.0; k];
        let mut prices: Vec<Option<f64>> = vec![None; k];
        let mut cached_phase = usize::MAX;
        rule.begin(bids, seed);
        for t in 0..rule.horizon() {
            let agent = rule.choose(t);
            let click = clicks.click(agent, t);
            let explore = rule.is_exploration(t);
            rule.observe(t, agent, click);
            if click && !explore {
                let phase = rule.params().phase_of(t);
                if phase != cached_phase {
                    prices.iter_mut().for_each(|p| *p = None);
                    cached_phase = phase;
                }
                let params = *rule.params();
                let committed = rule.committed_clicks();
                payments[agent] +=
                    *prices[agent].get_or_insert_with(|| psim_price_closed_form(&params, bids, committed, agent));
            }
            history.0.push(Record { agent, click });
        }
        Ok(RunResult { history, payments })
    }
}

/// Which payment a [`PaymentWrapper`] charges on top of its rule's history.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PaymentRule {
    Zero,
    /// `b_i` per click.
    FirstPrice,
    /// `b_i` per impression.
    PerImpression,
    /// Myerson payment computed from the full click source.
    Myerson,
}

#[derive(Clone, Debug)]
pub struct PaymentWrapper<R> {
    pub rule: R,
    pub payment: PaymentRule,
}

impl<R> PaymentWrapper<R> {
    pub fn new(rule: R, payment: PaymentRule) -> Self {
        Self { rule, payment }
    }
}

impl<B, R> Mechanism<B> for PaymentWrapper<R>
where
    B: Scalar + DefaultBreakpoints,
    R: AllocationRule<B>,
{
    fn agents(&self) -> usize {
        self.rule.agents()
    }
    fn horizon(&self) -> usize {
        self.rule.horizon()
    }
    fn is_deterministic(&self) -> bool {
        self.rule.is_deterministic()
    }
    fn run(&mut self, bids: &[B], clicks: &dyn ClickSource, seed: u64) -> Result<RunResult<B>> {
        let history = run_allocation_seeded(&mut self.rule, bids, clicks, seed)?;
        let alloc = click_allocation(&history, bids.len());
        let payments = match self.payment {
            PaymentRule::Zero => vec![B::zero(); bids.len()],
            PaymentRule::FirstPrice => bids.iter().zip(&alloc.clicks).map(|(&b, &c)| b * B::from_count(c)).collect(),
            PaymentRule::PerImpression => {
                bids.iter().zip(&alloc.impressions).map(|(&b, &n)| b * B::from_count(n)).collect()
            }
            PaymentRule::Myerson => {
                let horizon = self.rule.horizon();
                (0..bids.len())
                    .map(|i| {
                        let locator = B::default_breakpoints(bids, i, horizon);
                        myerson_payment_with(&mut self.rule, bids, clicks, i, &locator)
                    })
                    .collect::<Result<_>>()?
            }
        };
        Ok(RunResult { history, payments })
    }
}
