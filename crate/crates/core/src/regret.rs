//! Regret estimators for the stochastic and the oblivious-adversary settings.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, BernoulliClicks};
use crate::rule::{check_dimensions, drive, AllocationRule};
use crate::stats::Estimate;
use crate::types::{argmax_first, Realization, StochasticInstance};

/// Stream tag for the rule's own randomness within a trial.
pub const RULE_STREAM: u64 = 0x5255_4c45;

/// Per-trial seed handed to randomized rules.
pub fn rule_seed(seed: u64, trial: u64) -> u64 {
    derive_seed(seed, trial, RULE_STREAM)
}

/// Monte-Carlo estimate of `T v* mu* - E[sum_t mu_{x_t} v_{x_t}]`.
///
/// Every trial draws clicks from the counter-based stream keyed by
/// `(seed, trial)` and scores each round by its expected welfare rather
/// than the realized click, which has the same mean and less variance.
pub fn regret_stochastic<R>(rule: &R, inst: &StochasticInstance, trials: usize, seed: u64) -> Result<Estimate>
where
    R: AllocationRule<f64> + Clone + Sync,
{
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    let samples = regret_samples(rule, inst, trials, seed)?;
    Ok(Estimate::from_samples(&samples))
}

/// Per-trial regrets behind [`regret_stochastic`], in trial order.
pub fn regret_samples<R>(rule: &R, inst: &StochasticInstance, trials: usize, seed: u64) -> Result<Vec<f64>>
where
    R: AllocationRule<f64> + Clone + Sync,
{
    let k = inst.agents();
    let horizon = inst.horizon;
    let probe = BernoulliClicks::new(&inst.ctrs, horizon, seed, 0);
    check_dimensions(rule, inst.bids.as_slice(), &probe)?;
    if k == 1 {
        return Ok(vec![0.0; trials]);
    }
    let rates: Vec<f64> = (0..k).map(|i| inst.welfare_rate(i)).collect();
    let best = rates[inst.best_agent()];
    let gaps: Vec<f64> = rates.iter().map(|r| best - r).collect();
    let samples = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rule = rule.clone();
            let clicks = BernoulliClicks::new(&inst.ctrs, horizon, seed, trial);
            let mut shown = vec![0u64; k];
            drive(&mut rule, inst.bids.as_slice(), &clicks, rule_seed(seed, trial), |_, agent, _| {
                shown[agent] += 1;
            });
            shown.iter().zip(&gaps).map(|(&n, g)| n as f64 * g).sum()
        })
        .collect();
    Ok(samples)
}

/// Regret against the best fixed agent in hindsight on one realization,
/// `max_i v_i sum_t rho_i(t) - sum_t v_{x_t} rho_{x_t}(t)`, averaged over
/// `seeds` randomness streams (a deterministic rule is run once).
pub fn regret_adversarial<R>(
    rule: &R,
    bids: &[f64],
    values: &[f64],
    realization: &Realization,
    seeds: usize,
    seed: u64,
) -> Result<Estimate>
where
    R: AllocationRule<f64> + Clone + Sync,
{
    use crate::types::ClickSource;
    check_dimensions(rule, bids, realization)?;
    let k = rule.agents();
    if values.len() != k {
        return Err(Error::dim("values", k, values.len()));
    }
    let hindsight: Vec<f64> = (0..k).map(|i| values[i] * realization.total_clicks(i) as f64).collect();
    let best = hindsight[argmax_first(hindsight.iter().copied())];
    let runs = if rule.is_deterministic() { 1 } else { seeds.max(1) };
    let samples: Vec<f64> = (0..runs as u64)
        .into_par_iter()
        .map(|s| {
            let mut rule = rule.clone();
            let mut clicked = vec![0u64; k];
            drive(&mut rule, bids, realization, rule_seed(seed, s), |t, agent, click| {
                debug_assert_eq!(click, realization.click(agent, t));
                clicked[agent] += click as u64;
            });
            best - clicked.iter().zip(values).map(|(&c, v)| c as f64 * v).sum::<f64>()
        })
        .collect();
    Ok(Estimate::from_samples(&samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::ConstantRule;

    #[test]
    fn single_agent_has_zero_regret() {
        let inst = StochasticInstance::truthful(100, vec![0.3], vec![1.0], 1.0).unwrap();
        let rule = ConstantRule::new(1, 100, 0).unwrap();
        let e = regret_stochastic(&rule, &inst, 5, 1).unwrap();
        assert_eq!(e.mean, 0.0);
    }

    #[test]
    fn playing_the_benchmark_costs_nothing() {
        let inst = StochasticInstance::truthful(200, vec![0.3, 0.6, 0.5], vec![1.0, 0.9, 1.0], 1.0).unwrap();
        let best = inst.best_agent();
        let rule = ConstantRule::new(3, 200, best).unwrap();
        let e = regret_stochastic(&rule, &inst, 10, 9).unwrap();
        assert_eq!(e.mean, 0.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn constant_suboptimal_regret_is_exact() {
        let inst = StochasticInstance::truthful(50, vec![0.8, 0.5], vec![1.0, 1.0], 1.0).unwrap();
        let rule = ConstantRule::new(2, 50, 1).unwrap();
        let e = regret_stochastic(&rule, &inst, 3, 0).unwrap();
        assert!((e.mean - 50.0 * 0.3).abs() < 1e-9);
    }

    #[test]
    fn zero_trials_rejected() {
        let inst = StochasticInstance::truthful(5, vec![0.5, 0.5], vec![1.0, 1.0], 1.0).unwrap();
        let rule = ConstantRule::new(2, 5, 0).unwrap();
        assert!(regret_stochastic(&rule, &inst, 0, 0).is_err());
    }

    #[test]
    fn adversarial_regret_basics() {
        let rule = ConstantRule::new(2, 4, 1).unwrap();
        let zeros = Realization::zeros(2, 4);
        let e = regret_adversarial(&rule, &[1.0, 1.0], &[1.0, 1.0], &zeros, 3, 0).unwrap();
        assert_eq!(e.mean, 0.0);

        let rho = Realization::from_rows(&["1101", "0100"]).unwrap();
        let best = ConstantRule::new(2, 4, 0).unwrap();
        assert_eq!(regret_adversarial(&best, &[1.0, 1.0], &[1.0, 1.0], &rho, 1, 0).unwrap().mean, 0.0);
        let worst = regret_adversarial(&rule, &[1.0, 1.0], &[1.0, 1.0], &rho, 1, 0).unwrap();
        assert_eq!(worst.mean, 2.0);
    }
}
