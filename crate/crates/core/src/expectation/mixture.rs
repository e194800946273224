//! The gamma-mixture of a deterministic rule `A*` with uniform exploration,
//! charging per-monomial payments on exploration runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expectation::{monomial_payment, myerson_expected_payment_polynomial, CtrPolynomial};
use crate::mechanisms::myerson::DefaultBreakpoints;
use crate::mechanisms::{Mechanism, RunResult};
use crate::regret::rule_seed;
use crate::rng::BernoulliClicks;
use crate::rule::{check_dimensions, run_allocation, AllocationRule};
use crate::scalar::Scalar;
use crate::stats::Estimate;
use crate::types::{ClickSource, History, Record};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixtureParams<B: Scalar = f64> {
    /// Probability of running `A*`.
    pub gamma: B,
}

impl<B: Scalar> MixtureParams<B> {
    pub fn new(gamma: B) -> Result<Self> {
        if !(gamma > B::zero() && gamma < B::one()) {
            return Err(Error::Config(format!("mixture gamma must lie in (0, 1), got {gamma}")));
        }
        Ok(Self { gamma })
    }

    /// `gamma = 1 - 1/T`.
    pub fn regret_preserving(horizon: usize) -> Result<Self> {
        Self::new(B::one() - B::one() / B::from_count(horizon as u64))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// The run used `A*`.
    Optimized,
    /// The run showed a uniformly random agent every round.
    Exploration,
}

#[derive(Clone, Debug)]
pub struct MixtureMechanism<B: Scalar, R> {
    pub astar: R,
    pub params: MixtureParams<B>,
    cache: Option<(Vec<B>, Vec<CtrPolynomial<B>>)>,
}

impl<B, R> MixtureMechanism<B, R>
where
    B: Scalar + DefaultBreakpoints,
    R: AllocationRule<B> + Clone,
{
    pub fn new(astar: R, params: MixtureParams<B>) -> Result<Self> {
        if !astar.is_deterministic() {
            return Err(Error::NonDeterministic);
        }
        Ok(Self { astar, params, cache: None })
    }

    /// The expected-payment polynomials at `bids`, one per agent.
    pub fn payment_polynomials(&mut self, bids: &[B]) -> Result<&[CtrPolynomial<B>]> {
        if self.cache.as_ref().is_none_or(|(b, _)| b != bids) {
            let mut rule = self.astar.clone();
            let polys = (0..bids.len())
                .map(|i| myerson_expected_payment_polynomial(&mut rule, bids, i, self.params.gamma))
                .collect::<Result<Vec<_>>>()?;
            self.cache = Some((bids.to_vec(), polys));
        }
        Ok(&self.cache.as_ref().expect("filled above").1)
    }

    pub fn run_with_branch(&mut self, bids: &[B], clicks: &dyn ClickSource, seed: u64) -> Result<(RunResult<B>, Branch)> {
        check_dimensions(&self.astar, bids, clicks)?;
        let k = bids.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: f64 = rng.random();
        if u < self.params.gamma.to_f64() {
            let history = run_allocation(&mut self.astar, bids, clicks)?;
            return Ok((RunResult { history, payments: vec![B::zero(); k] }, Branch::Optimized));
        }
        let horizon = self.astar.horizon();
        let mut history = History::with_capacity(horizon);
        for t in 0..horizon {
            let agent = rng.random_range(0..k);
            history.0.push(Record { agent, click: clicks.click(agent, t) });
        }
        let gamma = self.params.gamma;
        let polys = self.payment_polynomials(bids)?;
        let payments = polys.iter().map(|p| monomial_payment(&history, p, gamma, Branch::Exploration)).collect();
        Ok((RunResult { history, payments }, Branch::Exploration))
    }
}

impl<B, R> Mechanism<B> for MixtureMechanism<B, R>
where
    B: Scalar + DefaultBreakpoints,
    R: AllocationRule<B> + Clone,
{
    fn agents(&self) -> usize {
        self.astar.agents()
    }
    fn horizon(&self) -> usize {
        self.astar.horizon()
    }
    fn is_deterministic(&self) -> bool {
        false
    }
    fn run(&mut self, bids: &[B], clicks: &dyn ClickSource, seed: u64) -> Result<RunResult<B>> {
        Ok(self.run_with_branch(bids, clicks, seed)?.0)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PaymentCheck {
    pub agent: usize,
    /// The expected-payment polynomial evaluated at the CTRs.
    pub polynomial: f64,
    pub estimate: Estimate,
    pub z: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpectedPaymentReport {
    pub trials: usize,
    pub ctrs: Vec<f64>,
    pub agents: Vec<PaymentCheck>,
}

impl ExpectedPaymentReport {
    pub fn max_abs_z(&self) -> f64 {
        self.agents.iter().map(|a| a.z.abs()).fold(0.0, f64::max)
    }
}

/// Runs the full mixture `trials` times on Bernoulli clicks with CTRs `mu`
/// and compares the mean monomial payment of every agent with its
/// expected-payment polynomial.
pub fn verify_expected_payment<B, R>(
    astar: &R,
    bids: &[B],
    params: MixtureParams<B>,
    mu: &[f64],
    trials: usize,
    seed: u64,
) -> Result<ExpectedPaymentReport>
where
    B: Scalar + DefaultBreakpoints,
    R: AllocationRule<B> + Clone + Sync,
{
    if trials < 2 {
        return Err(Error::Config("expected-payment check needs at least 2 trials".into()));
    }
    let k = astar.agents();
    if mu.len() != k {
        return Err(Error::dim("ctrs", k, mu.len()));
    }
    let mut mech = MixtureMechanism::new(astar.clone(), params)?;
    let polys: Vec<f64> = mech.payment_polynomials(bids)?.iter().map(|p| p.eval_f64(mu)).collect();
    let horizon = astar.horizon();
    let samples: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map_init(
            || mech.clone(),
            |m, trial| -> Result<Vec<f64>> {
                let clicks = BernoulliClicks::new(mu, horizon, seed, trial);
                let r = m.run(bids, &clicks, rule_seed(seed, trial))?;
                Ok(r.payments.iter().map(|p| p.to_f64()).collect())
            },
        )
        .collect::<Result<_>>()?;
    let agents = (0..k)
        .map(|i| {
            let estimate = Estimate::from_samples(&samples.iter().map(|s| s[i]).collect::<Vec<_>>());
            PaymentCheck { agent: i, polynomial: polys[i], z: estimate.z_score(polys[i]), estimate }
        })
        .collect();
    Ok(ExpectedPaymentReport { trials, ctrs: mu.to_vec(), agents })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::{ConstantRule, ThresholdRule};
    use crate::scalar::Rational;
    use crate::types::Realization;

    #[test]
    fn gamma_range() {
        assert!(MixtureParams::new(0.0).is_err());
        assert!(MixtureParams::new(1.0).is_err());
        assert_eq!(MixtureParams::<Rational>::regret_preserving(4).unwrap().gamma, Rational::new(3, 4));
    }

    #[test]
    fn bid_independent_astar_pays_nothing() {
        let rep = verify_expected_payment(&ConstantRule::new(2, 3, 1).unwrap(), &[1.0, 2.0], MixtureParams::new(0.5).unwrap(), &[0.3, 0.6], 200, 1)
            .unwrap();
        for a in &rep.agents {
            assert_eq!(a.polynomial, 0.0);
            assert_eq!(a.estimate.mean, 0.0);
            assert_eq!(a.z, 0.0);
        }
    }

    #[test]
    fn both_branches_occur() {
        let mut m = MixtureMechanism::new(ThresholdRule::new(1), MixtureParams::new(0.5).unwrap()).unwrap();
        let rho = Realization::from_rows(&["1", "1"]).unwrap();
        let mut seen = [false; 2];
        for seed in 0..64 {
            let (r, b) = m.run_with_branch(&[3.0, 2.0], &rho, seed).unwrap();
            seen[(b == Branch::Exploration) as usize] = true;
            if b == Branch::Optimized {
                assert_eq!(r.payments, vec![0.0, 0.0]);
            } else if r.history.records()[0].agent == 0 {
                assert!((r.payments[0] - 4.0).abs() < 1e-7);
            }
        }
        assert_eq!(seen, [true, true]);
    }
}
