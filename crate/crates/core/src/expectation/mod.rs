//! Expected payments as polynomials in the CTRs, and the per-monomial
//! payment rule that is truthful in expectation.
//!
//! Payments produced here are not normalized ex post: on individual runs
//! they can be negative or far above `b_i` per click. Only their
//! expectation is meaningful.

mod mixture;
mod poly;

pub use mixture::{verify_expected_payment, Branch, ExpectedPaymentReport, MixtureMechanism, MixtureParams, PaymentCheck};
pub use poly::{agent_exponents, CtrPolynomial, Exponents, FloatPolyRecord, PolyRecord};

use crate::error::{Error, Result};
use crate::mechanisms::{integrate_step, myerson::DefaultBreakpoints};
use crate::rule::AllocationRule;
use crate::scalar::Scalar;
use crate::types::{ClickSource, History, Record};

/// Largest `k * T` handled symbolically.
pub const MAX_SYMBOLIC_KT: usize = 12;
/// Largest history enumeration (`2^T` consistent histories, `k^T` agent
/// sequences).
pub const MAX_HISTORIES: u64 = 4096;

fn admit(agents: usize, horizon: usize) -> Result<()> {
    if agents * horizon > MAX_SYMBOLIC_KT {
        return Err(Error::Budget {
            what: "symbolic k*T",
            needed: (agents * horizon) as u128,
            limit: MAX_SYMBOLIC_KT as u128,
        });
    }
    let seqs = (agents as u128).pow(horizon as u32).max(1u128 << horizon);
    if seqs > MAX_HISTORIES as u128 {
        return Err(Error::Budget { what: "histories", needed: seqs, limit: MAX_HISTORIES as u128 });
    }
    Ok(())
}

fn require_deterministic<B: Scalar, R: AllocationRule<B> + ?Sized>(rule: &R) -> Result<()> {
    if rule.is_deterministic() {
        Ok(())
    } else {
        Err(Error::NonDeterministic)
    }
}

/// `P[h]` for a deterministic rule: the product of
/// `mu_{x_t}^{y_t} (1 - mu_{x_t})^{1 - y_t}` over rounds, or zero when the
/// rule would not have shown `x_t` at some round of `h`.
pub fn history_probability_polynomial<B, R>(rule: &mut R, bids: &[B], history: &History) -> Result<CtrPolynomial<B>>
where
    B: Scalar,
    R: AllocationRule<B> + ?Sized,
{
    require_deterministic(rule)?;
    let (k, horizon) = (rule.agents(), rule.horizon());
    admit(k, horizon)?;
    if bids.len() != k {
        return Err(Error::dim("bids", k, bids.len()));
    }
    if history.len() != horizon {
        return Err(Error::dim("history rounds", horizon, history.len()));
    }
    let mut p = CtrPolynomial::one(k);
    rule.begin(bids, 0);
    for (t, r) in history.records().iter().enumerate() {
        if r.agent >= k {
            return Err(Error::HistoryMismatch(format!("round {t} shows agent {} of {k}", r.agent)));
        }
        if rule.choose(t) != r.agent {
            return Ok(CtrPolynomial::zero(k));
        }
        p = p.mul_click_factor(r.agent, r.click);
        rule.observe(t, r.agent, r.click);
    }
    Ok(p)
}

/// Clicks fixed per round regardless of the agent shown.
struct RoundClicks {
    agents: usize,
    bits: u64,
    horizon: usize,
}

impl ClickSource for RoundClicks {
    fn agents(&self) -> usize {
        self.agents
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn click(&self, _agent: usize, round: usize) -> bool {
        self.bits >> round & 1 == 1
    }
}

/// All `2^T` histories consistent with the rule at `bids`, with their
/// probability polynomials.
pub fn consistent_histories<B, R>(rule: &mut R, bids: &[B]) -> Result<Vec<(History, CtrPolynomial<B>)>>
where
    B: Scalar,
    R: AllocationRule<B> + ?Sized,
{
    require_deterministic(rule)?;
    let (k, horizon) = (rule.agents(), rule.horizon());
    admit(k, horizon)?;
    if bids.len() != k {
        return Err(Error::dim("bids", k, bids.len()));
    }
    let mut out = Vec::with_capacity(1 << horizon);
    for bits in 0..1u64 << horizon {
        let src = RoundClicks { agents: k, bits, horizon };
        let mut h = History::with_capacity(horizon);
        let mut p = CtrPolynomial::one(k);
        rule.begin(bids, 0);
        for t in 0..horizon {
            let a = rule.choose(t);
            let y = src.click(a, t);
            rule.observe(t, a, y);
            p = p.mul_click_factor(a, y);
            h.0.push(Record { agent: a, click: y });
        }
        out.push((h, p));
    }
    Ok(out)
}

/// `C_i(b) = sum_h P[h] * clicks_i(h)`.
pub fn expected_clicks_polynomial<B, R>(rule: &mut R, bids: &[B], agent: usize) -> Result<CtrPolynomial<B>>
where
    B: Scalar,
    R: AllocationRule<B> + ?Sized,
{
    if agent >= rule.agents() {
        return Err(Error::Config(format!("agent {agent} out of range for k={}", rule.agents())));
    }
    let mut sum = CtrPolynomial::zero(rule.agents());
    for (h, p) in consistent_histories(rule, bids)? {
        let c = h.records().iter().filter(|r| r.agent == agent && r.click).count() as u64;
        if c > 0 {
            sum.add_assign_scaled(&p, B::from_count(c));
        }
    }
    Ok(sum)
}

/// `gamma * [b_i C_i(b_i) - int_0^{b_i} C_i(x) dx]`, coefficient by
/// coefficient, with the jumps in `x` located as for ex-post Myerson
/// payments.
pub fn myerson_expected_payment_polynomial<B, R>(rule: &mut R, bids: &[B], agent: usize, gamma: B) -> Result<CtrPolynomial<B>>
where
    B: Scalar + DefaultBreakpoints,
    R: AllocationRule<B> + ?Sized,
{
    let (k, horizon) = (rule.agents(), rule.horizon());
    admit(k, horizon)?;
    if bids.len() != k || agent >= k {
        return Err(Error::dim("bids", k, bids.len()));
    }
    let b = bids[agent];
    let locator = B::default_breakpoints(bids, agent, horizon);
    let limit = (1usize << horizon) * horizon * (k + 1);
    let mut local = bids.to_vec();
    let (c_b, integral) = integrate_step(
        b,
        |x| {
            local[agent] = x;
            expected_clicks_polynomial(rule, &local, agent)
        },
        &locator,
        limit,
    )?;
    Ok(c_b.scale(b).sub(&integral).scale(gamma))
}

/// Whether `h` starts with agent 0 shown `q[0]` times and clicked every
/// time, then agent 1 `q[1]` times, and so on; later rounds are free.
pub fn relevant_history_member(q: &[u32], history: &History) -> bool {
    let degree: u32 = q.iter().sum();
    if degree as usize > history.len() {
        return false;
    }
    let mut recs = history.records().iter();
    for (agent, &alpha) in q.iter().enumerate() {
        for _ in 0..alpha {
            match recs.next() {
                Some(r) if r.agent == agent && r.click => {}
                _ => return false,
            }
        }
    }
    true
}

/// Ex-post payment of `agent`: zero on the `A*` branch; on the exploration
/// branch `1/(1-gamma) * sum_Q k^deg(Q) coef(Q)` over the monomials `Q` of
/// `pmi` whose relevant set contains `h`.
pub fn monomial_payment<C: Scalar>(history: &History, pmi: &CtrPolynomial<C>, gamma: C, branch: Branch) -> C {
    if branch == Branch::Optimized {
        return C::zero();
    }
    let k = C::from_count(pmi.agents() as u64);
    let total = pmi
        .terms()
        .filter(|(q, _)| relevant_history_member(q, history))
        .map(|(q, &c)| (0..q.iter().sum::<u32>()).fold(c, |acc, _| acc * k))
        .fold(C::zero(), |a, b| a + b);
    total / (C::one() - gamma)
}

/// `P_expl[h] = prod_t (1/k) mu^y (1-mu)^(1-y)` under uniform exploration.
pub fn exploration_history_polynomial<C: Scalar>(agents: usize, history: &History) -> CtrPolynomial<C> {
    let inv_k = C::one() / C::from_count(agents as u64);
    history
        .records()
        .iter()
        .fold(CtrPolynomial::one(agents), |p, r| p.mul_click_factor(r.agent, r.click).scale(inv_k))
}

/// Every history of length `T` over `k` agents, in lexicographic order of
/// `(agent, click)` per round.
pub fn all_histories(agents: usize, horizon: usize) -> Result<Vec<History>> {
    admit(agents, horizon)?;
    let per_round = 2 * agents as u64;
    let total = per_round.pow(horizon as u32);
    Ok((0..total)
        .map(|mut n| {
            let mut recs = vec![Record { agent: 0, click: false }; horizon];
            for t in (0..horizon).rev() {
                let d = (n % per_round) as usize;
                n /= per_round;
                recs[t] = Record { agent: d / 2, click: d % 2 == 1 };
            }
            History(recs)
        })
        .collect())
}

/// `k^deg(Q) * P_expl[H(Q)]` as a polynomial; equals `Q` itself.
pub fn relevant_set_polynomial<C: Scalar>(agents: usize, horizon: usize, q: &[u32]) -> Result<CtrPolynomial<C>> {
    let mut sum = CtrPolynomial::zero(agents);
    for h in all_histories(agents, horizon)? {
        if relevant_history_member(q, &h) {
            sum.add_assign_scaled(&exploration_history_polynomial(agents, &h), C::one());
        }
    }
    let k = C::from_count(agents as u64);
    Ok(sum.scale((0..q.iter().sum::<u32>()).fold(C::one(), |acc, _| acc * k)))
}

/// All exponent vectors over `k` agents with total degree at most `T`.
pub fn monomials_up_to(agents: usize, max_degree: u32) -> Vec<Exponents> {
    fn rec(agents: usize, left: u32, cur: &mut Exponents, out: &mut Vec<Exponents>) {
        if cur.len() == agents {
            out.push(cur.clone());
            return;
        }
        for a in 0..=left {
            cur.push(a);
            rec(agents, left - a, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(agents, max_degree, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::NaiveRule;
    use crate::rule::{ConstantRule, ScheduleRule, ThresholdRule};
    use crate::scalar::Rational;

    fn r(n: i64) -> Rational {
        Rational::from_integer(n)
    }

    #[test]
    fn single_round_probability() {
        let mut rule = ConstantRule::new(2, 1, 0).unwrap();
        let p = history_probability_polynomial(&mut rule, &[r(1), r(1)], &History::from_pairs(&[(0, true)])).unwrap();
        assert_eq!(p, CtrPolynomial::variable(2, 0));
        let p = history_probability_polynomial(&mut rule, &[r(1), r(1)], &History::from_pairs(&[(1, true)])).unwrap();
        assert!(p.is_zero());
    }

    #[test]
    fn two_round_expansion() {
        let mut rule = ScheduleRule::new(2, vec![0, 1]).unwrap();
        let h = History::from_pairs(&[(0, true), (1, false)]);
        let p = history_probability_polynomial(&mut rule, &[r(1), r(1)], &h).unwrap();
        let mu0 = CtrPolynomial::variable(2, 0);
        assert_eq!(p, mu0.sub(&mu0.mul(&CtrPolynomial::variable(2, 1))));
    }

    #[test]
    fn probabilities_sum_to_one() {
        for horizon in 1..=4 {
            let mut rule = NaiveRule::<Rational>::new(2, horizon.max(2)).unwrap();
            let total = consistent_histories(&mut rule, &[r(2), r(3)])
                .unwrap()
                .into_iter()
                .fold(CtrPolynomial::zero(2), |acc, (_, p)| acc.add(&p));
            assert_eq!(total, CtrPolynomial::one(2));
        }
    }

    #[test]
    fn clicks_polynomials() {
        let mut rule = ConstantRule::new(2, 4, 0).unwrap();
        let c = expected_clicks_polynomial(&mut rule, &[r(1), r(1)], 0).unwrap();
        assert_eq!(c, CtrPolynomial::variable(2, 0).scale(r(4)));
        assert!(expected_clicks_polynomial(&mut rule, &[r(1), r(1)], 1).unwrap().is_zero());
        let mut t = ThresholdRule::new(1);
        assert_eq!(expected_clicks_polynomial(&mut t, &[r(3), r(2)], 0).unwrap(), CtrPolynomial::variable(2, 0));
    }

    #[test]
    fn threshold_expected_payment() {
        let mut t = ThresholdRule::new(1);
        let half = Rational::new(1, 2);
        let p = myerson_expected_payment_polynomial(&mut t, &[r(3), r(2)], 0, half).unwrap();
        assert_eq!(p, CtrPolynomial::variable(2, 0));
        assert!(myerson_expected_payment_polynomial(&mut t, &[r(1), r(2)], 0, half).unwrap().is_zero());
        let mut c = ConstantRule::new(2, 3, 0).unwrap();
        assert!(myerson_expected_payment_polynomial(&mut c, &[r(3), r(2)], 0, half).unwrap().is_zero());
        let pf = myerson_expected_payment_polynomial(&mut t, &[3.0, 2.0], 0, 0.5).unwrap();
        assert!((pf.coefficient(&[1, 0]) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn relevant_sets() {
        let h = History::from_pairs(&[(0, true), (1, true)]);
        assert!(relevant_history_member(&[0, 0], &h));
        assert!(relevant_history_member(&[1, 1], &h));
        assert!(!relevant_history_member(&[1, 1], &History::from_pairs(&[(1, true), (0, true)])));
        assert!(!relevant_history_member(&[1, 0], &History::from_pairs(&[(0, false), (1, true)])));
        assert!(!relevant_history_member(&[3, 0], &h));
    }

    #[test]
    fn monomial_payment_worked_example() {
        let pmi = CtrPolynomial::variable(2, 0);
        let half = Rational::new(1, 2);
        let h = History::from_pairs(&[(0, true)]);
        assert_eq!(monomial_payment(&h, &pmi, half, Branch::Exploration), r(4));
        assert_eq!(monomial_payment(&h, &pmi, half, Branch::Optimized), r(0));
        assert_eq!(monomial_payment(&History::from_pairs(&[(0, false)]), &pmi, half, Branch::Exploration), r(0));
        assert_eq!(monomial_payment(&History::from_pairs(&[(1, true)]), &pmi, half, Branch::Exploration), r(0));
        assert_eq!(monomial_payment(&h, &CtrPolynomial::zero(2), half, Branch::Exploration), r(0));
    }

    #[test]
    fn relevant_set_identity() {
        for q in monomials_up_to(2, 3) {
            let p: CtrPolynomial<Rational> = relevant_set_polynomial(2, 3, &q).unwrap();
            assert_eq!(p, CtrPolynomial::monomial(2, q.clone(), r(1)), "{q:?}");
        }
        assert_eq!(monomials_up_to(2, 3).len(), 10);
    }

    #[test]
    fn budgets() {
        let mut rule = ConstantRule::new(2, 7, 0).unwrap();
        assert!(matches!(expected_clicks_polynomial(&mut rule, &[r(1), r(1)], 0), Err(Error::Budget { .. })));
        assert!(all_histories(3, 5).is_err());
    }
}
