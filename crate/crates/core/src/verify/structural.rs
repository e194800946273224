use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rule::{allocations, check_dimensions, AllocationRule};
use crate::scalar::Scalar;
use crate::types::{ClickSource, Realization};

fn rule_horizon(rho: &Realization) -> usize {
    rho.horizon()
}
use crate::verify::counterexample::{Counterexample, Observed, Verdict, ViolationKind};
use crate::verify::{BidGrid, EnumerationBudget};

/// Round `round` is influential: flipping the shown agent's bit there
/// changes who is shown at `influenced_round`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Influence {
    pub round: usize,
    /// The agent shown at `round`, whose bit is flipped.
    pub agent: usize,
    pub influenced_round: usize,
    /// Agents shown at `influenced_round` before and after the flip.
    pub shown: (usize, usize),
}

fn require_deterministic<B: Scalar, R: AllocationRule<B> + ?Sized>(rule: &R) -> Result<()> {
    if rule.is_deterministic() {
        Ok(())
    } else {
        Err(Error::NonDeterministic)
    }
}

fn influences_from<B, R>(rule: &mut R, bids: &[B], rho: &Realization, base: &[usize]) -> Vec<Influence>
where
    B: Scalar,
    R: AllocationRule<B> + ?Sized,
{
    let mut out = Vec::new();
    for (t, &j) in base.iter().enumerate() {
        let alt = allocations(rule, bids, &rho.flipped(j, t));
        for t2 in t + 1..base.len() {
            if alt[t2] != base[t2] {
                out.push(Influence { round: t, agent: j, influenced_round: t2, shown: (base[t2], alt[t2]) });
            }
        }
    }
    out
}

/// Every influential round of `rule` at `(bids, rho)` with each round it
/// influences. Only the shown agent's bit is ever flipped, since the rule
/// never observes the others.
pub fn find_influential_rounds<B, R>(rule: &mut R, bids: &[B], rho: &Realization) -> Result<Vec<Influence>>
where
    B: Scalar,
    R: AllocationRule<B> + ?Sized,
{
    require_deterministic(rule)?;
    check_dimensions(rule, bids, rho)?;
    let base = allocations(rule, bids, rho);
    Ok(influences_from(rule, bids, rho, &base))
}

/// Whether the allocation at `round` survives every raise of `agent`'s bid
/// to a larger value of `grid`.
pub fn is_secured<B, R>(rule: &mut R, bids: &[B], rho: &Realization, round: usize, agent: usize, grid: &[B]) -> Result<bool>
where
    B: Scalar,
    R: AllocationRule<B> + ?Sized,
{
    require_deterministic(rule)?;
    check_dimensions(rule, bids, rho)?;
    let shown = allocations(rule, bids, rho)[round];
    let mut local = bids.to_vec();
    for &x in grid.iter().filter(|&&x| x > bids[agent]) {
        local[agent] = x;
        if allocations(rule, &local, rho)[round] != shown {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Allocations per grid profile, `[profile][round]`.
fn table<B, R>(rule: &mut R, grid: &BidGrid<B>, rho: &Realization) -> Vec<Vec<usize>>
where
    B: Scalar,
    R: AllocationRule<B> + ?Sized,
{
    (0..grid.profile_count() as usize).map(|p| allocations(rule, &grid.profile(p), rho)).collect()
}

/// Whether the allocation at `round` is the same for every grid profile.
pub fn check_bid_independent<B, R>(rule: &mut R, rho: &Realization, round: usize, budget: &EnumerationBudget<B>) -> Result<bool>
where
    B: Scalar,
    R: AllocationRule<B> + ?Sized,
{
    require_deterministic(rule)?;
    let grid = &budget.grid;
    if grid.profile_count() > budget.max_profiles as u128 {
        return Err(Error::Budget {
            what: "bid profiles",
            needed: grid.profile_count(),
            limit: budget.max_profiles as u128,
        });
    }
    check_dimensions(rule, &grid.profile(0), rho)?;
    if round >= rule.horizon() {
        return Err(Error::Config(format!("round {round} beyond horizon {}", rule.horizon())));
    }
    let t = table(rule, grid, rho);
    Ok(t.iter().all(|a| a[round] == t[0][round]))
}

/// Enumerates all realizations in index order and returns the first
/// counterexample, independent of scheduling.
fn enumerate<B, R, F>(rule: &R, budget: &EnumerationBudget<B>, check: F) -> Result<Verdict<B>>
where
    B: Scalar,
    R: AllocationRule<B> + Clone + Sync,
    F: Fn(&mut R, &BidGrid<B>, &Realization) -> Option<Counterexample<B>> + Sync,
{
    require_deterministic(rule)?;
    let (k, horizon) = (rule.agents(), rule.horizon());
    let n = budget.admit(k, horizon)?;
    let grid = &budget.grid;
    let found = (0..n)
        .into_par_iter()
        .map_init(|| rule.clone(), |r, idx| check(r, grid, &Realization::from_index(k, horizon, idx)))
        .find_map_first(|c| c);
    Ok(Verdict::from_option(found))
}

fn allocation_ce<B: Scalar>(
    kind: ViolationKind,
    agent: usize,
    rounds: Vec<usize>,
    grid: &BidGrid<B>,
    profiles: (usize, usize),
    rho: &Realization,
    shown: (usize, usize),
) -> Counterexample<B> {
    Counterexample {
        kind,
        agents: vec![agent],
        rounds,
        bids: grid.profile(profiles.0),
        alt_bids: Some(grid.profile(profiles.1)),
        value: None,
        realization: rho.clone(),
        outcomes: vec![Observed::Agent(shown.0), Observed::Agent(shown.1)],
    }
}

/// Raising a bid never loses an impression, for every realization, grid
/// profile and round.
pub fn check_pointwise_monotone<B, R>(rule: &R, budget: &EnumerationBudget<B>) -> Result<Verdict<B>>
where
    B: Scalar,
    R: AllocationRule<B> + Clone + Sync,
{
    enumerate(rule, budget, |r, grid, rho| {
        let tab = table(r, grid, rho);
        for (p, row) in tab.iter().enumerate() {
            for (t, &i) in row.iter().enumerate() {
                let pos = grid.position(p, i);
                for q in pos + 1..grid.values(i).len() {
                    let p2 = grid.with_position(p, i, q);
                    if tab[p2][t] != i {
                        return Some(allocation_ce(
                            ViolationKind::Monotonicity,
                            i,
                            vec![t],
                            grid,
                            (p, p2),
                            rho,
                            (i, tab[p2][t]),
                        ));
                    }
                }
            }
        }
        None
    })
}

/// A round that is influential for some grid profile must be bid
/// independent.
pub fn check_exploration_separated<B, R>(rule: &R, budget: &EnumerationBudget<B>) -> Result<Verdict<B>>
where
    B: Scalar,
    R: AllocationRule<B> + Clone + Sync,
{
    enumerate(rule, budget, |r, grid, rho| {
        let tab = table(r, grid, rho);
        let horizon = rule_horizon(rho);
        let varies: Vec<Option<usize>> =
            (0..horizon).map(|t| tab.iter().position(|row| row[t] != tab[0][t])).collect();
        for (p, row) in tab.iter().enumerate() {
            let bids = grid.profile(p);
            for t in 0..horizon {
                if varies[t].is_none() {
                    continue;
                }
                let j = row[t];
                let alt = allocations(r, &bids, &rho.flipped(j, t));
                let Some(t2) = (t + 1..horizon).find(|&t2| alt[t2] != row[t2]) else {
                    continue;
                };
                let q = tab.iter().position(|other| other[t] != row[t]).expect("round varies");
                return Some(allocation_ce(
                    ViolationKind::ExplorationSeparation,
                    j,
                    vec![t, t2],
                    grid,
                    (p, q),
                    rho,
                    (row[t], tab[q][t]),
                ));
            }
        }
        None
    })
}

/// A round influencing agent `i` must be secured from `i`.
pub fn check_weakly_separated<B, R>(rule: &R, budget: &EnumerationBudget<B>) -> Result<Verdict<B>>
where
    B: Scalar,
    R: AllocationRule<B> + Clone + Sync,
{
    enumerate(rule, budget, |r, grid, rho| {
        let tab = table(r, grid, rho);
        for (p, row) in tab.iter().enumerate() {
            let bids = grid.profile(p);
            for inf in influences_from(r, &bids, rho, row) {
                let t = inf.round;
                let mut influenced = [inf.shown.0, inf.shown.1];
                influenced.sort_unstable();
                for &i in influenced.iter().take(if influenced[0] == influenced[1] { 1 } else { 2 }) {
                    let pos = grid.position(p, i);
                    for q in pos + 1..grid.values(i).len() {
                        let p2 = grid.with_position(p, i, q);
                        if tab[p2][t] != row[t] {
                            return Some(allocation_ce(
                                ViolationKind::WeakSeparation,
                                i,
                                vec![t, inf.influenced_round],
                                grid,
                                (p, p2),
                                rho,
                                (row[t], tab[p2][t]),
                            ));
                        }
                    }
                }
            }
        }
        None
    })
}
