//! Explore-then-exploit mechanism: round-robin exploration for `T0` rounds
//! per agent, then the agent with the largest `clicks * bid` is shown for
//! the rest of the horizon at a second-price per-click charge.

use crate::error::{Error, Result};
use crate::rule::AllocationRule;
use crate::scalar::Scalar;
use crate::types::History;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NaiveParams {
    /// Exploration rounds per agent (`T0`).
    pub exploration_rounds: usize,
}

/// `T0 = min(ceil(k^(-2/3) T^(2/3) (ln T)^(1/3)), floor(T / k))`, at least 1.
pub fn naive_exploration_rounds(agents: usize, horizon: usize) -> usize {
    let k = agents as f64;
    let t = horizon as f64;
    let raw = k.powf(-2.0 / 3.0) * t.powf(2.0 / 3.0) * t.ln().cbrt();
    (raw.ceil() as usize).max(1).min(horizon / agents)
}

#[derive(Clone, Debug)]
pub struct NaiveRule<B: Scalar = f64> {
    agents: usize,
    horizon: usize,
    params: NaiveParams,
    bids: Vec<B>,
    clicks: Vec<u64>,
    winner: Option<usize>,
}

impl<B: Scalar> NaiveRule<B> {
    pub fn new(agents: usize, horizon: usize) -> Result<Self> {
        if agents == 0 || horizon < agents {
            return Err(Error::Config(format!("naive rule needs T >= k (k={agents}, T={horizon})")));
        }
        let t0 = naive_exploration_rounds(agents, horizon);
        Self::with_exploration(agents, horizon, t0)
    }

    pub fn with_exploration(agents: usize, horizon: usize, exploration_rounds: usize) -> Result<Self> {
        if agents == 0 || exploration_rounds == 0 || agents * exploration_rounds > horizon {
            return Err(Error::Config(format!(
                "naive rule needs 1 <= T0 and k*T0 <= T (k={agents}, T0={exploration_rounds}, T={horizon})"
            )));
        }
        Ok(Self {
            agents,
            horizon,
            params: NaiveParams { exploration_rounds },
            bids: Vec::new(),
            clicks: vec![0; agents],
            winner: None,
        })
    }

    pub fn params(&self) -> NaiveParams {
        self.params
    }

    pub fn exploration_len(&self) -> usize {
        self.agents * self.params.exploration_rounds
    }

    pub fn exploration_clicks(&self) -> &[u64] {
        &self.clicks
    }

    /// Exploitation winner of the current run, once exploration has ended.
    pub fn winner(&self) -> Option<usize> {
        self.winner
    }
}

/// `argmax_i c_i b_i`, ties to the lowest index.
pub fn naive_winner<B: Scalar>(clicks: &[u64], bids: &[B]) -> usize {
    let mut best = 0;
    let mut best_val = B::from_count(clicks[0]) * bids[0];
    for i in 1..bids.len() {
        let v = B::from_count(clicks[i]) * bids[i];
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Per-click price of the winner: `max_{j != w} c_j b_j / c_w`, or 0 when
/// `c_w = 0` (every product is then 0) or there is no competitor.
pub fn naive_price<B: Scalar>(clicks: &[u64], bids: &[B], winner: usize) -> B {
    if clicks[winner] == 0 {
        return B::zero();
    }
    let runner_up = (0..bids.len())
        .filter(|&j| j != winner)
        .map(|j| B::from_count(clicks[j]) * bids[j])
        .fold(None, |acc: Option<B>, x| Some(acc.map_or(x, |a| a.max_of(x))));
    match runner_up {
        Some(r) => r / B::from_count(clicks[winner]),
        None => B::zero(),
    }
}

impl<B: Scalar> AllocationRule<B> for NaiveRule<B> {
    fn agents(&self) -> usize {
        self.agents
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn begin(&mut self, bids: &[B], _seed: u64) {
        self.bids.clear();
        self.bids.extend_from_slice(bids);
        self.clicks.iter_mut().for_each(|c| *c = 0);
        self.winner = None;
    }
    fn choose(&mut self, round: usize) -> usize {
        if round < self.exploration_len() {
            return round % self.agents;
        }
        *self.winner.get_or_insert_with(|| naive_winner(&self.clicks, &self.bids))
    }
    fn observe(&mut self, round: usize, agent: usize, click: bool) {
        if round < self.exploration_len() && click {
            self.clicks[agent] += 1;
        }
    }
}

/// Payments of the naive mechanism computed from its observed history:
/// the winner pays the per-click price for each exploitation click, all
/// exploration rounds are free.
pub fn naive_payments<B: Scalar>(history: &History, bids: &[B], params: NaiveParams) -> Result<Vec<B>> {
    let k = bids.len();
    let explore = k * params.exploration_rounds;
    if history.len() < explore {
        return Err(Error::HistoryMismatch(format!(
            "history has {} rounds, exploration alone needs {explore}",
            history.len()
        )));
    }
    let mut clicks = vec![0u64; k];
    for (t, r) in history.records()[..explore].iter().enumerate() {
        if r.agent != t % k {
            return Err(Error::HistoryMismatch(format!(
                "round {t} shows agent {} but round-robin exploration expects {}",
                r.agent,
                t % k
            )));
        }
        clicks[r.agent] += r.click as u64;
    }
    let winner = naive_winner(&clicks, bids);
    let mut exploit_clicks = 0u64;
    for (t, r) in history.records().iter().enumerate().skip(explore) {
        if r.agent != winner {
            return Err(Error::HistoryMismatch(format!(
                "round {t} shows agent {} but the exploitation winner is {winner}",
                r.agent
            )));
        }
        exploit_clicks += r.click as u64;
    }
    let mut payments = vec![B::zero(); k];
    payments[winner] = naive_price(&clicks, bids, winner) * B::from_count(exploit_clicks);
    Ok(payments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::run_allocation;
    use crate::scalar::Rational;
    use crate::types::Realization;

    #[test]
    fn exploration_length_formula() {
        // 2^(-2/3) * 100 * (ln 1000)^(1/3) = 0.629961 * 100 * 1.904483 = 119.975
        let raw = 2f64.powf(-2.0 / 3.0) * 100.0 * 1000f64.ln().cbrt();
        assert!((raw - 119.975).abs() < 1e-3, "{raw}");
        assert_eq!(naive_exploration_rounds(2, 1000), 120);
        assert_eq!(naive_exploration_rounds(2, 3), 1);
        assert_eq!(naive_exploration_rounds(2, 4), 2);
        assert_eq!(naive_exploration_rounds(1, 1), 1);
    }

    #[test]
    fn rejects_short_horizon() {
        assert!(NaiveRule::<f64>::new(3, 2).is_err());
        assert!(NaiveRule::<f64>::with_exploration(2, 4, 3).is_err());
    }

    #[test]
    fn zero_click_agent_loses() {
        assert_eq!(naive_winner(&[1, 0], &[1.0, 5.0]), 0);
        assert_eq!(naive_winner(&[5, 3], &[2.0, 4.0]), 1);
        assert_eq!(naive_winner(&[0, 0], &[1.0, 5.0]), 0);
    }

    #[test]
    fn hand_simulated_four_rounds() {
        // T0 = 1: both explored agents are clicked, the tie goes to agent 0.
        let rho = Realization::from_rows(&["1110", "0101"]).unwrap();
        let mut rule = NaiveRule::with_exploration(2, 4, 1).unwrap();
        let h = run_allocation(&mut rule, &[1.0, 1.0], &rho).unwrap();
        assert_eq!(h, History::from_pairs(&[(0, true), (1, true), (0, true), (0, false)]));

        let rho = Realization::from_rows(&["0110", "1101"]).unwrap();
        let h = run_allocation(&mut rule, &[1.0, 1.0], &rho).unwrap();
        assert_eq!(h, History::from_pairs(&[(0, false), (1, true), (1, false), (1, true)]));
    }

    #[test]
    fn price_formula() {
        let bids = [Rational::from_integer(2), Rational::from_integer(4)];
        let p = naive_price(&[5, 3], &bids, 1);
        assert_eq!(p, Rational::new(10, 3));
        assert_eq!(p * Rational::from_integer(7), Rational::new(70, 3));
        assert_eq!(naive_price(&[0, 0], &bids, 0), Rational::from_integer(0));
        assert_eq!(naive_price(&[3], &[1.0], 0), 0.0);
    }

    #[test]
    fn payments_from_history() {
        // c = (5, 3) after T0 = 5 exploration rounds each, then agent 1 wins
        // and is clicked 7 times out of 9.
        let mut pairs = Vec::new();
        for t in 0..10 {
            let agent = t % 2;
            let click = if agent == 0 { true } else { t < 6 };
            pairs.push((agent, click));
        }
        for t in 0..9 {
            pairs.push((1, t < 7));
        }
        let h = History::from_pairs(&pairs);
        let bids = [Rational::from_integer(2), Rational::from_integer(4)];
        let p = naive_payments(&h, &bids, NaiveParams { exploration_rounds: 5 }).unwrap();
        assert_eq!(p, vec![Rational::from_integer(0), Rational::new(70, 3)]);

        let no_clicks = History::from_pairs(&[(0, true), (1, false), (0, false), (0, false)]);
        let p = naive_payments(&no_clicks, &[1.0, 1.0], NaiveParams { exploration_rounds: 1 }).unwrap();
        assert_eq!(p, vec![0.0, 0.0]);

        let degenerate = History::from_pairs(&[(0, false), (1, false), (0, true)]);
        let p = naive_payments(&degenerate, &[1.0, 1.0], NaiveParams { exploration_rounds: 1 }).unwrap();
        assert_eq!(p, vec![0.0, 0.0]);
    }

    #[test]
    fn payments_reject_foreign_history() {
        let h = History::from_pairs(&[(1, true), (0, false), (0, false)]);
        assert!(naive_payments(&h, &[1.0, 1.0], NaiveParams { exploration_rounds: 1 }).is_err());
        let h = History::from_pairs(&[(0, true), (1, false), (1, false)]);
        assert!(naive_payments(&h, &[1.0, 1.0], NaiveParams { exploration_rounds: 1 }).is_err());
    }
}
