//! Counter-based randomness.
//!
//! Stochastic clicks are a pure function of `(seed, trial, agent, round)`, so
//! two rules compared on the same trial index see the same click stream and
//! any trial can be regenerated independently of thread scheduling.

use crate::types::ClickSource;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent 64-bit seed for `(seed, trial, stream)`.
pub fn derive_seed(seed: u64, trial: u64, stream: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ trial) ^ stream.rotate_left(17))
}

/// Uniform draw in `[0, 1)` keyed by `(seed, trial, agent, round)`.
pub fn keyed_uniform(seed: u64, trial: u64, agent: usize, round: usize) -> f64 {
    let key = ((agent as u64) << 40) ^ round as u64;
    let h = splitmix(splitmix(splitmix(seed) ^ trial) ^ key);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Lazily evaluated i.i.d. Bernoulli(`mu_i`) realization for one trial.
#[derive(Clone, Debug)]
pub struct BernoulliClicks<'a> {
    ctrs: &'a [f64],
    horizon: usize,
    seed: u64,
    trial: u64,
}

impl<'a> BernoulliClicks<'a> {
    pub fn new(ctrs: &'a [f64], horizon: usize, seed: u64, trial: u64) -> Self {
        Self { ctrs, horizon, seed, trial }
    }
}

impl ClickSource for BernoulliClicks<'_> {
    fn agents(&self) -> usize {
        self.ctrs.len()
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn click(&self, agent: usize, round: usize) -> bool {
        keyed_uniform(self.seed, self.trial, agent, round) < self.ctrs[agent]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clicks_are_reproducible_and_roughly_calibrated() {
        let ctrs = [0.3, 0.8];
        let a = BernoulliClicks::new(&ctrs, 20_000, 11, 4);
        let b = BernoulliClicks::new(&ctrs, 20_000, 11, 4);
        let mut n = [0usize; 2];
        for t in 0..20_000 {
            for (i, count) in n.iter_mut().enumerate() {
                assert_eq!(a.click(i, t), b.click(i, t));
                *count += a.click(i, t) as usize;
            }
        }
        let f0 = n[0] as f64 / 20_000.0;
        let f1 = n[1] as f64 / 20_000.0;
        assert!((f0 - 0.3).abs() < 0.015, "{f0}");
        assert!((f1 - 0.8).abs() < 0.015, "{f1}");
    }

    #[test]
    fn trials_differ() {
        let ctrs = [0.5];
        let a = BernoulliClicks::new(&ctrs, 64, 1, 0);
        let b = BernoulliClicks::new(&ctrs, 64, 1, 1);
        assert!((0..64).any(|t| a.click(0, t) != b.click(0, t)));
    }

    #[test]
    fn extreme_ctrs() {
        let ctrs = [0.0, 1.0];
        let c = BernoulliClicks::new(&ctrs, 100, 3, 0);
        assert!((0..100).all(|t| !c.click(0, t) && c.click(1, t)));
    }
}
