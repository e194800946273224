//! Phased simulation rule: bid-independent exploration slots drawn up front,
//! exploitation rounds sampled from multiplicative weights over the clicks
//! collected in earlier phases' exploration slots.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rule::AllocationRule;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsimParams {
    pub agents: usize,
    pub horizon: usize,
    pub phases: usize,
    pub phase_len: usize,
    pub epsilon: f64,
    pub v_max: f64,
}

impl PsimParams {
    /// `eps = (k ln k / T)^(1/3)`, `P = max(1, round((ln k)^(1/3) (T/k)^(2/3)))`
    /// clamped so that every phase holds at least `k` rounds.
    pub fn new(agents: usize, horizon: usize, v_max: f64) -> Result<Self> {
        if agents == 0 || horizon < agents {
            return Err(Error::Config(format!("psim needs T >= k (k={agents}, T={horizon})")));
        }
        let k = agents as f64;
        let t = horizon as f64;
        let ln_k = k.ln();
        let epsilon = (k * ln_k / t).cbrt();
        let raw = (ln_k.cbrt() * (t / k).powf(2.0 / 3.0)).round() as usize;
        let phases = raw.clamp(1, horizon / agents);
        Self::with_phases(agents, horizon, phases, epsilon, v_max)
    }

    pub fn with_phases(agents: usize, horizon: usize, phases: usize, epsilon: f64, v_max: f64) -> Result<Self> {
        if phases == 0 || phases > horizon {
            return Err(Error::Config(format!("psim phase count {phases} out of range for T={horizon}")));
        }
        let phase_len = horizon / phases;
        if agents == 0 || agents > phase_len {
            return Err(Error::Config(format!("psim phase length {phase_len} is shorter than k={agents}")));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::Config(format!("psim epsilon must be finite and >= 0, got {epsilon}")));
        }
        if !(v_max > 0.0 && v_max.is_finite()) {
            return Err(Error::Config(format!("v_max must be positive, got {v_max}")));
        }
        Ok(Self { agents, horizon, phases, phase_len, epsilon, v_max })
    }

    /// Phase of `round`; rounds past `P * Q` belong to the last phase.
    pub fn phase_of(&self, round: usize) -> usize {
        (round / self.phase_len).min(self.phases - 1)
    }

    fn log_base(&self) -> f64 {
        self.epsilon.ln_1p()
    }
}

fn log_weight(params: &PsimParams, bid: f64, clicks: u64) -> f64 {
    params.log_base() * bid * clicks as f64 / params.v_max
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Probability that exploitation picks `agent` given exploration clicks `s`
/// from earlier phases.
pub fn psim_gamma(params: &PsimParams, bids: &[f64], clicks: &[u64], agent: usize) -> f64 {
    let logs: Vec<f64> = bids.iter().zip(clicks).map(|(&b, &s)| log_weight(params, b, s)).collect();
    (logs[agent] - log_sum_exp(logs.iter().copied())).exp()
}

pub fn psim_gammas(params: &PsimParams, bids: &[f64], clicks: &[u64]) -> Vec<f64> {
    let logs: Vec<f64> = bids.iter().zip(clicks).map(|(&b, &s)| log_weight(params, b, s)).collect();
    let z = log_sum_exp(logs.iter().copied());
    logs.iter().map(|l| (l - z).exp()).collect()
}

/// `ln` of the rivals' weight sum `D`, `-inf` when there are no rivals.
fn log_rivals(params: &PsimParams, bids: &[f64], clicks: &[u64], agent: usize) -> f64 {
    log_sum_exp((0..bids.len()).filter(|&j| j != agent).map(|j| log_weight(params, bids[j], clicks[j])))
}

fn ln_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// Closed-form `int_0^b gamma(x) dx` for the agent's own bid `b`.
pub fn psim_gamma_integral(params: &PsimParams, bids: &[f64], clicks: &[u64], agent: usize) -> f64 {
    let b = bids[agent];
    let slope = params.log_base() * clicks[agent] as f64 / params.v_max;
    let log_d = log_rivals(params, bids, clicks, agent);
    if slope == 0.0 {
        return b * (-ln_add_exp(0.0, log_d)).exp();
    }
    (ln_add_exp(slope * b, log_d) - ln_add_exp(0.0, log_d)) / slope
}

/// Closed-form per-click exploitation price `b - int_0^b gamma / gamma(b)`,
/// clamped to `[0, b]` against rounding.
pub fn psim_price_closed_form(params: &PsimParams, bids: &[f64], clicks: &[u64], agent: usize) -> f64 {
    let b = bids[agent];
    if clicks[agent] == 0 || params.epsilon == 0.0 {
        return 0.0;
    }
    let integral = psim_gamma_integral(params, bids, clicks, agent);
    let gamma = psim_gamma(params, bids, clicks, agent);
    (b - integral / gamma).clamp(0.0, b)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Quadrature version of [`psim_gamma_integral`].
pub fn psim_gamma_integral_quadrature(params: &PsimParams, bids: &[f64], clicks: &[u64], agent: usize) -> f64 {
    let b = bids[agent];
    let f = |x: f64| {
        let mut local = bids.to_vec();
        local[agent] = x;
        psim_gamma(params, &local, clicks, agent)
    };
    adaptive_simpson(&f, 0.0, b, 1e-14 * b.max(1.0))
}

/// Per-click price, cross-checked against numerical quadrature.
pub fn psim_payment_per_click(params: &PsimParams, bids: &[f64], clicks: &[u64], agent: usize) -> Result<f64> {
    let price = psim_price_closed_form(params, bids, clicks, agent);
    let closed = psim_gamma_integral(params, bids, clicks, agent);
    let numeric = psim_gamma_integral_quadrature(params, bids, clicks, agent);
    if (closed - numeric).abs() > 1e-9 * numeric.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Consistency(format!(
            "psim integral closed form {closed} disagrees with quadrature {numeric}"
        )));
    }
    Ok(price)
}

#[derive(Clone, Debug)]
pub struct PsimRule {
    params: PsimParams,
    bids: Vec<f64>,
    rng: ChaCha8Rng,
    /// Agent assigned to each exploration round, `None` for exploitation.
    slots: Vec<Option<usize>>,
    committed: Vec<u64>,
    pending: Vec<u64>,
    gammas: Vec<f64>,
    phase: usize,
}

impl PsimRule {
    pub fn new(agents: usize, horizon: usize, v_max: f64) -> Result<Self> {
        Ok(Self::with_params(PsimParams::new(agents, horizon, v_max)?))
    }

    pub fn with_params(params: PsimParams) -> Self {
        Self {
            params,
            bids: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
            slots: Vec::new(),
            committed: vec![0; params.agents],
            pending: vec![0; params.agents],
            gammas: vec![1.0 / params.agents as f64; params.agents],
            phase: 0,
        }
    }

    pub fn params(&self) -> &PsimParams {
        &self.params
    }

    pub fn is_exploration(&self, round: usize) -> bool {
        self.slots.get(round).is_some_and(Option::is_some)
    }

    /// Exploration clicks from phases before the current one.
    pub fn committed_clicks(&self) -> &[u64] {
        &self.committed
    }

    pub fn current_gammas(&self) -> &[f64] {
        &self.gammas
    }

    fn enter_phase(&mut self, phase: usize) {
        while self.phase < phase {
            for (c, p) in self.committed.iter_mut().zip(self.pending.iter_mut()) {
                *c += std::mem::take(p);
            }
            self.phase += 1;
        }
        self.gammas = psim_gammas(&self.params, &self.bids, &self.committed);
    }
}

impl AllocationRule<f64> for PsimRule {
    fn agents(&self) -> usize {
        self.params.agents
    }
    fn horizon(&self) -> usize {
        self.params.horizon
    }
    fn is_deterministic(&self) -> bool {
        false
    }
    fn begin(&mut self, bids: &[f64], seed: u64) {
        let PsimParams { agents, horizon, phases, phase_len, .. } = self.params;
        self.bids.clear();
        self.bids.extend_from_slice(bids);
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.slots.clear();
        self.slots.resize(horizon, None);
        let mut order: Vec<usize> = (0..agents).collect();
        for p in 0..phases {
            let offsets = index::sample(&mut self.rng, phase_len, agents);
            order.shuffle(&mut self.rng);
            for (offset, &agent) in offsets.iter().zip(&order) {
                self.slots[p * phase_len + offset] = Some(agent);
            }
        }
        self.committed.iter_mut().for_each(|c| *c = 0);
        self.pending.iter_mut().for_each(|c| *c = 0);
        self.phase = 0;
        self.enter_phase(0);
    }
    fn choose(&mut self, round: usize) -> usize {
        let phase = self.params.phase_of(round);
        if phase != self.phase {
            self.enter_phase(phase);
        }
        if let Some(agent) = self.slots[round] {
            return agent;
        }
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        for (i, g) in self.gammas.iter().enumerate() {
            acc += g;
            if u < acc {
                return i;
            }
        }
        self.params.agents - 1
    }
    fn observe(&mut self, round: usize, agent: usize, click: bool) {
        if self.slots[round].is_some() && click {
            self.pending[agent] += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::run_allocation_seeded;
    use crate::types::Realization;

    fn fixture() -> PsimParams {
        PsimParams::with_phases(2, 4, 2, 0.5, 1.0).unwrap()
    }

    #[test]
    fn worked_gamma_and_price() {
        let p = fixture();
        let g = psim_gammas(&p, &[1.0, 1.0], &[1, 0]);
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.4).abs() < 1e-12);
        let integral = psim_gamma_integral(&p, &[1.0, 1.0], &[1, 0], 0);
        assert!((integral - 0.55034).abs() < 1e-5, "{integral}");
        let price = psim_payment_per_click(&p, &[1.0, 1.0], &[1, 0], 0).unwrap();
        assert!((price - 0.08277).abs() < 1e-5, "{price}");
    }

    #[test]
    fn uniform_without_clicks() {
        let p = PsimParams::with_phases(3, 9, 3, 0.4, 1.0).unwrap();
        for g in psim_gammas(&p, &[1.0, 0.3, 2.0], &[0, 0, 0]) {
            assert!((g - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(psim_payment_per_click(&p, &[1.0, 0.3, 2.0], &[0, 4, 4], 0).unwrap(), 0.0);
    }

    #[test]
    fn single_agent_pays_nothing() {
        let p = PsimParams::new(1, 10, 1.0).unwrap();
        assert_eq!(p.epsilon, 0.0);
        assert_eq!(psim_gamma(&p, &[0.7], &[3], 0), 1.0);
        assert_eq!(psim_payment_per_click(&p, &[0.7], &[3], 0).unwrap(), 0.0);
    }

    #[test]
    fn default_params() {
        let p = PsimParams::new(2, 100, 1.0).unwrap();
        let eps = (2.0 * 2f64.ln() / 100.0).cbrt();
        assert_eq!(p.epsilon, eps);
        // (ln 2)^(1/3) * 50^(2/3) = 11.99...
        assert_eq!(p.phases, 12);
        assert_eq!(p.phase_len, 8);
        assert_eq!(p.phase_of(99), 11);
        assert!(PsimParams::new(3, 2, 1.0).is_err());
        assert_eq!(PsimParams::new(2, 3, 1.0).unwrap().phases, 1);
    }

    #[test]
    fn schedule_has_one_slot_per_agent_per_phase() {
        let p = PsimParams::with_phases(3, 20, 4, 0.3, 1.0).unwrap();
        let mut rule = PsimRule::with_params(p);
        let rho = Realization::zeros(3, 20);
        for seed in 0..20 {
            run_allocation_seeded(&mut rule, &[1.0, 1.0, 1.0], &rho, seed).unwrap();
            for phase in 0..4 {
                let mut seen = vec![0; 3];
                for t in phase * 5..phase * 5 + 5 {
                    if let Some(a) = rule.slots[t] {
                        seen[a] += 1;
                    }
                }
                assert_eq!(seen, vec![1, 1, 1]);
            }
        }
    }

    #[test]
    fn schedule_ignores_bids() {
        let mut rule = PsimRule::new(2, 60, 1.0).unwrap();
        let rho = Realization::from_fn(2, 60, |i, t| (i + t) % 3 == 0);
        rule.begin(&[1.0, 0.2], 9);
        let a = rule.slots.clone();
        rule.begin(&[0.1, 3.0], 9);
        assert_eq!(a, rule.slots);
        let h1 = run_allocation_seeded(&mut rule, &[1.0, 0.5], &rho, 4).unwrap();
        let h2 = run_allocation_seeded(&mut rule, &[1.0, 0.5], &rho, 4).unwrap();
        assert_eq!(h1, h2);
    }

    #[test]
    fn simpson_on_polynomial() {
        let v = adaptive_simpson(&|x| x * x * x, 0.0, 2.0, 1e-12);
        assert!((v - 4.0).abs() < 1e-12);
    }
}
