//! UCB1 with bid-weighted indices `(mean + sqrt(8 ln t / n)) * b`.

use crate::rule::AllocationRule;

/// Per-agent statistics after `elapsed` rounds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ucb1State {
    pub impressions: Vec<u64>,
    pub clicks: Vec<u64>,
    pub elapsed: usize,
}

impl Ucb1State {
    pub fn new(agents: usize) -> Self {
        Self { impressions: vec![0; agents], clicks: vec![0; agents], elapsed: 0 }
    }

    pub fn agents(&self) -> usize {
        self.impressions.len()
    }

    pub fn is_initialized(&self, agent: usize) -> bool {
        self.impressions[agent] > 0
    }

    /// Empirical CTR with `0/0 = 0`.
    pub fn mean(&self, agent: usize) -> f64 {
        match self.impressions[agent] {
            0 => 0.0,
            n => self.clicks[agent] as f64 / n as f64,
        }
    }

    /// `sqrt(8 ln t / n)`, infinite while `n = 0`.
    pub fn radius(&self, agent: usize) -> f64 {
        match self.impressions[agent] {
            0 => f64::INFINITY,
            n => (8.0 * (self.elapsed as f64).ln() / n as f64).sqrt(),
        }
    }

    pub fn upper(&self, agent: usize) -> f64 {
        self.mean(agent) + self.radius(agent)
    }

    pub fn index(&self, agent: usize, bid: f64) -> f64 {
        self.upper(agent) * bid
    }

    pub fn record(&mut self, agent: usize, click: bool) {
        self.impressions[agent] += 1;
        self.clicks[agent] += click as u64;
        self.elapsed += 1;
    }

    /// Agent shown next: uninitialized agents go first, highest bid first
    /// and then lowest index; afterwards the largest index, ties to the
    /// lowest agent.
    pub fn select(&self, bids: &[f64]) -> usize {
        let k = self.agents();
        let mut best: Option<usize> = None;
        for i in (0..k).filter(|&i| !self.is_initialized(i)) {
            if best.is_none_or(|b| bids[i] > bids[b]) {
                best = Some(i);
            }
        }
        if let Some(i) = best {
            return i;
        }
        let mut best = 0;
        let mut best_val = self.index(0, bids[0]);
        for i in 1..k {
            let v = self.index(i, bids[i]);
            if v > best_val {
                best = i;
                best_val = v;
            }
        }
        best
    }
}

/// Per-click price of `winner` at the current state, clipped to
/// `[0, b_winner]`.
pub fn ucb1_round_price(state: &Ucb1State, bids: &[f64], winner: usize) -> f64 {
    let b_w = bids[winner];
    let rivals = || (0..bids.len()).filter(move |&j| j != winner);
    if rivals().next().is_none() {
        return 0.0;
    }
    let price = if !state.is_initialized(winner) {
        rivals().filter(|&j| !state.is_initialized(j)).map(|j| bids[j]).fold(0.0, f64::max)
    } else if rivals().any(|j| !state.is_initialized(j)) {
        b_w
    } else {
        let runner_up = rivals().map(|j| state.index(j, bids[j])).fold(0.0, f64::max);
        let denom = state.upper(winner);
        if denom == 0.0 {
            0.0
        } else {
            runner_up / denom
        }
    };
    price.clamp(0.0, b_w)
}

#[derive(Clone, Debug)]
pub struct Ucb1Rule {
    horizon: usize,
    bids: Vec<f64>,
    state: Ucb1State,
}

impl Ucb1Rule {
    pub fn new(agents: usize, horizon: usize) -> Self {
        Self { horizon, bids: Vec::new(), state: Ucb1State::new(agents) }
    }

    pub fn state(&self) -> &Ucb1State {
        &self.state
    }
}

impl AllocationRule<f64> for Ucb1Rule {
    fn agents(&self) -> usize {
        self.state.agents()
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn begin(&mut self, bids: &[f64], _seed: u64) {
        self.bids.clear();
        self.bids.extend_from_slice(bids);
        self.state = Ucb1State::new(self.state.agents());
    }
    fn choose(&mut self, _round: usize) -> usize {
        self.state.select(&self.bids)
    }
    fn observe(&mut self, _round: usize, agent: usize, click: bool) {
        self.state.record(agent, click);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(impressions: Vec<u64>, clicks: Vec<u64>, elapsed: usize) -> Ucb1State {
        Ucb1State { impressions, clicks, elapsed }
    }

    #[test]
    fn uninitialized_agent_wins() {
        let s = state(vec![0, 5], vec![0, 5], 5);
        assert_eq!(s.index(0, 0.01), f64::INFINITY);
        assert_eq!(s.select(&[0.01, 100.0]), 0);
    }

    #[test]
    fn index_value() {
        let s = state(vec![4], vec![3], 100);
        let idx = s.index(0, 2.0);
        assert!((idx - 7.5698).abs() < 1e-4, "{idx}");
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let s = state(vec![3, 3], vec![1, 1], 6);
        assert_eq!(s.select(&[1.0, 1.0]), 0);
        assert_eq!(Ucb1State::new(3).select(&[1.0, 1.0, 1.0]), 0);
        assert_eq!(Ucb1State::new(3).select(&[1.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn second_round_radius_is_zero() {
        let s = state(vec![1, 0], vec![1, 0], 1);
        assert_eq!(s.radius(0), 0.0);
    }

    #[test]
    fn prices() {
        assert_eq!(ucb1_round_price(&Ucb1State::new(1), &[3.0], 0), 0.0);

        // No radius at t = 1: upper bounds are the means, 1 and 1.
        let s = state(vec![1, 1], vec![1, 1], 1);
        let p = ucb1_round_price(&s, &[1.0, 0.75], 0);
        assert!((p - 0.75).abs() < 1e-12);

        let s = state(vec![0, 0, 0], vec![0, 0, 0], 0);
        assert_eq!(ucb1_round_price(&s, &[3.0, 2.0, 1.0], 0), 2.0);
        let s = state(vec![0, 2], vec![0, 1], 2);
        assert_eq!(ucb1_round_price(&s, &[3.0, 2.0], 0), 0.0);
        let s = state(vec![2, 2], vec![0, 0], 1);
        assert_eq!(ucb1_round_price(&s, &[3.0, 2.0], 0), 0.0);
    }

    #[test]
    fn price_is_clipped() {
        let s = state(vec![10, 1], vec![0, 1], 11);
        let p = ucb1_round_price(&s, &[1.0, 5.0], 0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn ratio_formula_generic() {
        let s = state(vec![4, 9], vec![2, 6], 13);
        let bids = [2.0, 1.0];
        let w = s.select(&bids);
        let other = 1 - w;
        let expected = (s.index(other, bids[other]) / s.upper(w)).min(bids[w]);
        assert!((ucb1_round_price(&s, &bids, w) - expected).abs() < 1e-15);
        assert!(expected <= bids[w]);
    }
}
