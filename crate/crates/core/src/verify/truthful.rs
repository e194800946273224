use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mechanisms::Mechanism;
use crate::scalar::Scalar;
use crate::types::{click_allocation, Realization};
use crate::verify::counterexample::{Counterexample, Observed, Verdict, ViolationKind};
use crate::verify::{BidGrid, EnumerationBudget};

struct Outcome<B> {
    clicks: Vec<u64>,
    payments: Vec<B>,
}

fn outcomes<B, M>(mech: &mut M, grid: &BidGrid<B>, rho: &Realization) -> Result<Vec<Outcome<B>>>
where
    B: Scalar,
    M: Mechanism<B> + ?Sized,
{
    (0..grid.profile_count() as usize)
        .map(|p| {
            let bids = grid.profile(p);
            let r = mech.run(&bids, rho, 0)?;
            Ok(Outcome { clicks: click_allocation(&r.history, bids.len()).clicks, payments: r.payments })
        })
        .collect()
}

fn enumerate<B, M, F>(mech: &M, budget: &EnumerationBudget<B>, check: F) -> Result<Verdict<B>>
where
    B: Scalar,
    M: Mechanism<B> + Clone + Sync,
    F: Fn(&BidGrid<B>, &Realization, &[Outcome<B>]) -> Option<Counterexample<B>> + Sync,
{
    if !mech.is_deterministic() {
        return Err(Error::NonDeterministic);
    }
    let (k, horizon) = (mech.agents(), mech.horizon());
    let n = budget.admit(k, horizon)?;
    let grid = &budget.grid;
    let found = (0..n)
        .into_par_iter()
        .map_init(
            || mech.clone(),
            |m, idx| -> Result<Option<Counterexample<B>>> {
                let rho = Realization::from_index(k, horizon, idx);
                let table = outcomes(m, grid, &rho)?;
                Ok(check(grid, &rho, &table))
            },
        )
        .find_map_first(|r| match r {
            Ok(None) => None,
            other => Some(other),
        });
    match found {
        None => Ok(Verdict::Pass),
        Some(r) => Ok(Verdict::from_option(r?)),
    }
}

/// Truthful bidding is a best response on every realization, for every
/// agent, true value and opponent profile drawn from the grid. Utilities
/// are compared with tolerance 0.
pub fn check_truthful_exhaustive<B, M>(mech: &M, budget: &EnumerationBudget<B>) -> Result<Verdict<B>>
where
    B: Scalar,
    M: Mechanism<B> + Clone + Sync,
{
    enumerate(mech, budget, |grid, rho, table| {
        let k = grid.agents();
        for (p, truthful) in table.iter().enumerate() {
            for i in 0..k {
                let pos = grid.position(p, i);
                let v = grid.values(i)[pos];
                let u_truth = v * B::from_count(truthful.clicks[i]) - truthful.payments[i];
                for q in (0..grid.values(i).len()).filter(|&q| q != pos) {
                    let p2 = grid.with_position(p, i, q);
                    let dev = &table[p2];
                    let u_dev = v * B::from_count(dev.clicks[i]) - dev.payments[i];
                    if u_dev > u_truth {
                        return Some(Counterexample {
                            kind: ViolationKind::Truthfulness,
                            agents: vec![i],
                            rounds: vec![],
                            bids: grid.profile(p),
                            alt_bids: Some(grid.profile(p2)),
                            value: Some(v),
                            realization: rho.clone(),
                            outcomes: vec![Observed::Utility(u_truth), Observed::Utility(u_dev)],
                        });
                    }
                }
            }
        }
        None
    })
}

/// `0 <= P_i <= b_i C_i` on every realization and grid profile.
pub fn check_normalized<B, M>(mech: &M, budget: &EnumerationBudget<B>) -> Result<Verdict<B>>
where
    B: Scalar,
    M: Mechanism<B> + Clone + Sync,
{
    enumerate(mech, budget, |grid, rho, table| {
        for (p, out) in table.iter().enumerate() {
            let bids = grid.profile(p);
            for i in 0..bids.len() {
                let pay = out.payments[i];
                if pay < B::zero() || pay > bids[i] * B::from_count(out.clicks[i]) {
                    return Some(Counterexample {
                        kind: ViolationKind::Normalization,
                        agents: vec![i],
                        rounds: vec![],
                        bids,
                        alt_bids: None,
                        value: None,
                        realization: rho.clone(),
                        outcomes: vec![Observed::Payment { payment: pay, clicks: out.clicks[i] }],
                    });
                }
            }
        }
        None
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{NaiveMechanism, NaiveRule, PaymentRule, PaymentWrapper};
    use crate::rule::ConstantRule;
    use crate::scalar::Rational;
    use crate::verify::replay_mechanism;

    fn grid() -> EnumerationBudget<Rational> {
        let vals: Vec<Rational> = (1..=4).map(Rational::from_integer).collect();
        EnumerationBudget::new(BidGrid::uniform(2, &vals).unwrap())
    }

    #[test]
    fn naive_is_truthful_and_normalized() {
        let mech = NaiveMechanism::<Rational>(NaiveRule::with_exploration(2, 4, 1).unwrap());
        assert!(check_truthful_exhaustive(&mech, &grid()).unwrap().is_pass());
        assert!(check_normalized(&mech, &grid()).unwrap().is_pass());
    }

    #[test]
    fn per_impression_charges_violate_normalization() {
        let mech = PaymentWrapper::new(ConstantRule::new(2, 3, 0).unwrap(), PaymentRule::PerImpression);
        let v = check_normalized(&mech, &grid()).unwrap();
        let ce = v.counterexample().expect("violation").clone();
        assert_eq!(ce.realization, Realization::zeros(2, 3));
        let mut m = mech.clone();
        assert!(replay_mechanism(&mut m, &ce).unwrap());
        let zero = PaymentWrapper::new(ConstantRule::new(2, 3, 0).unwrap(), PaymentRule::Zero);
        assert!(check_normalized(&zero, &grid()).unwrap().is_pass());
        assert!(check_truthful_exhaustive(&zero, &grid()).unwrap().is_pass());
    }
}
