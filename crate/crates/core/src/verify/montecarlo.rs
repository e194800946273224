//! Statistical checks for randomized rules. A clean report is evidence, not
//! proof.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanisms::Mechanism;
use crate::regret::rule_seed;
use crate::rng::{derive_seed, BernoulliClicks};
use crate::rule::{check_dimensions, drive, AllocationRule};
use crate::stats::Estimate;
use crate::types::{click_allocation, Realization, StochasticInstance};
use crate::verify::BidGrid;

pub const EVIDENCE_NOTE: &str = "Monte-Carlo evidence at 3 standard errors, not a proof";

#[derive(Clone, Debug, Serialize)]
pub struct WeakTruthRow {
    pub realization: usize,
    pub agent: usize,
    pub value: f64,
    pub deviation: f64,
    /// `E[U(truthful)] - E[U(deviation)]` over paired seeds.
    pub advantage: Estimate,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakTruthReport {
    pub seeds: usize,
    pub rows: Vec<WeakTruthRow>,
    pub note: &'static str,
}

impl WeakTruthReport {
    pub fn flagged(&self) -> impl Iterator<Item = &WeakTruthRow> {
        self.rows.iter().filter(|r| r.flagged)
    }
}

fn flag(e: &Estimate) -> bool {
    e.mean < -3.0 * e.stderr
}

fn utility<M: Mechanism<f64> + ?Sized>(mech: &mut M, bids: &[f64], rho: &Realization, seed: u64, agent: usize, value: f64) -> Result<f64> {
    let r = mech.run(bids, rho, seed)?;
    let c = click_allocation(&r.history, bids.len()).clicks[agent];
    Ok(value * c as f64 - r.payments[agent])
}

/// For each realization, agent and grid deviation, estimates the expected
/// utility advantage of truthful bidding over the mechanism's seed. Truthful
/// and deviating runs share seeds. Rows with advantage below `-3 SE` are
/// flagged.
pub fn check_weakly_truthful_mc<M>(
    mech: &M,
    values: &[f64],
    deviations: &BidGrid<f64>,
    realizations: &[Realization],
    seeds: usize,
    seed: u64,
) -> Result<WeakTruthReport>
where
    M: Mechanism<f64> + Clone + Sync,
{
    let k = mech.agents();
    if values.len() != k {
        return Err(Error::dim("values", k, values.len()));
    }
    if deviations.agents() != k {
        return Err(Error::dim("deviation grid agents", k, deviations.agents()));
    }
    if seeds < 2 {
        return Err(Error::Config("weak truthfulness check needs at least 2 seeds".into()));
    }
    let run_seed = |r: usize, s: usize| derive_seed(seed, s as u64, r as u64);
    let truthful: Vec<Vec<Vec<f64>>> = realizations
        .iter()
        .enumerate()
        .map(|(r, rho)| {
            (0..seeds)
                .into_par_iter()
                .map_init(
                    || mech.clone(),
                    |m, s| -> Result<Vec<f64>> {
                        let out = m.run(values, rho, run_seed(r, s))?;
                        let c = click_allocation(&out.history, k).clicks;
                        Ok((0..k).map(|i| values[i] * c[i] as f64 - out.payments[i]).collect())
                    },
                )
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut combos = Vec::new();
    for r in 0..realizations.len() {
        for i in 0..k {
            for &x in deviations.values(i).iter().filter(|&&x| x != values[i]) {
                combos.push((r, i, x));
            }
        }
    }
    let rows = combos
        .into_par_iter()
        .map_init(
            || mech.clone(),
            |m, (r, i, x)| -> Result<WeakTruthRow> {
                let mut bids = values.to_vec();
                bids[i] = x;
                let diffs = (0..seeds)
                    .map(|s| Ok(truthful[r][s][i] - utility(m, &bids, &realizations[r], run_seed(r, s), i, values[i])?))
                    .collect::<Result<Vec<f64>>>()?;
                let advantage = Estimate::from_samples(&diffs);
                Ok(WeakTruthRow { realization: r, agent: i, value: values[i], deviation: x, flagged: flag(&advantage), advantage })
            },
        )
        .collect::<Result<Vec<_>>>()?;
    Ok(WeakTruthReport { seeds, rows, note: EVIDENCE_NOTE })
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotoneRow {
    pub bid: f64,
    pub clicks: Estimate,
    /// Paired change in clicks from the previous grid bid.
    pub step: Option<Estimate>,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotoneReport {
    pub agent: usize,
    pub trials: usize,
    pub rows: Vec<MonotoneRow>,
    pub note: &'static str,
}

impl MonotoneReport {
    pub fn flagged(&self) -> impl Iterator<Item = &MonotoneRow> {
        self.rows.iter().filter(|r| r.flagged)
    }
}

/// Expected clicks of `agent` across a grid of its bids on a stochastic
/// instance, with common random numbers across grid points. Decreases
/// beyond `3 SE` of the paired difference are flagged.
pub fn check_monotone_in_expectation_mc<R>(
    rule: &R,
    inst: &StochasticInstance,
    agent: usize,
    grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<MonotoneReport>
where
    R: AllocationRule<f64> + Clone + Sync,
{
    let k = inst.agents();
    if agent >= k {
        return Err(Error::Config(format!("agent {agent} out of range for k={k}")));
    }
    if trials < 2 {
        return Err(Error::Config("monotonicity check needs at least 2 trials".into()));
    }
    if grid.is_empty() || grid.iter().any(|&x| !(x > 0.0)) || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("bid grid must be positive and strictly increasing".into()));
    }
    check_dimensions(rule, inst.bids.as_slice(), &BernoulliClicks::new(&inst.ctrs, inst.horizon, seed, 0))?;
    let counts: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map_init(
            || rule.clone(),
            |r, trial| {
                let clicks = BernoulliClicks::new(&inst.ctrs, inst.horizon, seed, trial);
                grid.iter()
                    .map(|&x| {
                        let mut bids = inst.bids.as_slice().to_vec();
                        bids[agent] = x;
                        let mut c = 0u64;
                        drive(r, &bids, &clicks, rule_seed(seed, trial), |_, a, click| c += (a == agent && click) as u64);
                        c as f64
                    })
                    .collect()
            },
        )
        .collect();
    let rows = (0..grid.len())
        .map(|g| {
            let clicks = Estimate::from_samples(&counts.iter().map(|c| c[g]).collect::<Vec<_>>());
            let step = (g > 0).then(|| Estimate::from_samples(&counts.iter().map(|c| c[g] - c[g - 1]).collect::<Vec<_>>()));
            let flagged = step.as_ref().is_some_and(|s| s.mean < 0.0 && flag(s));
            MonotoneRow { bid: grid[g], clicks, step, flagged }
        })
        .collect();
    Ok(MonotoneReport { agent, trials, rows, note: EVIDENCE_NOTE })
}
