//! Successive elimination on sample products `mean * bid`.

use crate::rule::AllocationRule;
use crate::scalar::Scalar;

/// Elimination radius.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EliminationThreshold {
    /// `sqrt(8 ln T / n) * v_max` after `n` samples per active agent.
    #[default]
    PerSample,
    /// Fixed `r0 = sqrt(8 ln T / T) * v_max`.
    Horizon,
}

/// `sqrt(8 ln T / T) * v_max`.
pub fn r0(horizon: usize, v_max: f64) -> f64 {
    let t = horizon as f64;
    (8.0 * t.ln() / t).sqrt() * v_max
}

#[derive(Clone, Debug, PartialEq)]
pub struct EliminationState {
    pub active: Vec<bool>,
    pub samples: Vec<u64>,
    pub clicks: Vec<u64>,
}

impl EliminationState {
    fn new(agents: usize) -> Self {
        Self { active: vec![true; agents], samples: vec![0; agents], clicks: vec![0; agents] }
    }

    pub fn active_agents(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i)
    }
}

#[derive(Clone, Debug)]
pub struct EliminationRule<B: Scalar = f64> {
    horizon: usize,
    v_max: f64,
    threshold: EliminationThreshold,
    bids: Vec<B>,
    state: EliminationState,
    pass: Vec<usize>,
    cursor: usize,
}

impl<B: Scalar> EliminationRule<B> {
    pub fn new(agents: usize, horizon: usize) -> Self {
        Self::with_threshold(agents, horizon, 1.0, EliminationThreshold::default())
    }

    pub fn with_threshold(agents: usize, horizon: usize, v_max: f64, threshold: EliminationThreshold) -> Self {
        Self {
            horizon,
            v_max,
            threshold,
            bids: Vec::new(),
            state: EliminationState::new(agents),
            pass: Vec::new(),
            cursor: 0,
        }
    }

    pub fn state(&self) -> &EliminationState {
        &self.state
    }

    fn radius(&self, samples: u64) -> f64 {
        match self.threshold {
            EliminationThreshold::Horizon => r0(self.horizon, self.v_max),
            EliminationThreshold::PerSample => {
                (8.0 * (self.horizon as f64).ln() / samples as f64).sqrt() * self.v_max
            }
        }
    }

    fn product(&self, agent: usize) -> f64 {
        let n = self.state.samples[agent];
        if n == 0 {
            return 0.0;
        }
        self.state.clicks[agent] as f64 / n as f64 * self.bids[agent].to_f64()
    }

    fn end_pass(&mut self) {
        let active: Vec<usize> = self.state.active_agents().collect();
        let best = active.iter().map(|&i| self.product(i)).fold(f64::NEG_INFINITY, f64::max);
        for &i in &active {
            if best - self.product(i) > self.radius(self.state.samples[i]) {
                self.state.active[i] = false;
            }
        }
        self.pass = self.state.active_agents().collect();
        self.cursor = 0;
    }
}

impl<B: Scalar> AllocationRule<B> for EliminationRule<B> {
    fn agents(&self) -> usize {
        self.state.active.len()
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn begin(&mut self, bids: &[B], _seed: u64) {
        self.bids.clear();
        self.bids.extend_from_slice(bids);
        self.state = EliminationState::new(self.state.active.len());
        self.pass = (0..self.state.active.len()).collect();
        self.cursor = 0;
    }
    fn choose(&mut self, _round: usize) -> usize {
        self.pass[self.cursor]
    }
    fn observe(&mut self, _round: usize, agent: usize, click: bool) {
        self.state.samples[agent] += 1;
        self.state.clicks[agent] += click as u64;
        self.cursor += 1;
        if self.cursor == self.pass.len() {
            self.end_pass();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::run_allocation;
    use crate::types::Realization;

    #[test]
    fn r0_value() {
        assert!((r0(100, 1.0) - 0.60697).abs() < 1e-5);
        assert!((r0(100, 2.0) - 2.0 * 0.60697).abs() < 1e-4);
    }

    #[test]
    fn single_agent_never_deactivates() {
        let mut rule = EliminationRule::<f64>::new(1, 10);
        let h = run_allocation(&mut rule, &[1.0], &Realization::zeros(1, 10)).unwrap();
        assert!(h.allocations().all(|a| a == 0));
        assert_eq!(rule.state().active, vec![true]);
    }

    #[test]
    fn identical_samples_stay_active() {
        let mut rule = EliminationRule::<f64>::with_threshold(2, 50, 1.0, EliminationThreshold::Horizon);
        let rho = Realization::from_fn(2, 50, |_, t| t % 4 < 2);
        run_allocation(&mut rule, &[1.0, 1.0], &rho).unwrap();
        assert_eq!(rule.state().active, vec![true, true]);
    }

    #[test]
    fn deactivated_agent_is_not_played_again() {
        let mut rule = EliminationRule::<f64>::with_threshold(3, 400, 1.0, EliminationThreshold::Horizon);
        let rho = Realization::from_fn(3, 400, |i, _| i == 1);
        let h = run_allocation(&mut rule, &[1.0, 1.0, 1.0], &rho).unwrap();
        assert_eq!(rule.state().active, vec![false, true, false]);
        let first_solo = h.records().iter().position(|r| r.agent == 1).unwrap() + 3;
        assert!(h.records()[first_solo..].iter().all(|r| r.agent == 1));
    }

    #[test]
    fn per_sample_radius_shrinks() {
        let rule = EliminationRule::<f64>::new(2, 1000);
        assert!(rule.radius(4) > rule.radius(400));
        assert!((rule.radius(1000) - r0(1000, 1.0)).abs() < 1e-12);
    }
}
