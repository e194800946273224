use mabmech::expectation::{consistent_histories, CtrPolynomial};
use mabmech::experiments::fmt_g12;
use mabmech::instances::{lower_bound_epsilon, make_lower_bound_instance, LowerBoundKind};
use mabmech::mechanisms::{
    myerson_payment, myerson_payment_exact, naive_payments, psim_gamma, psim_payment_per_click, EliminationRule, NaiveRule, PaymentRule, PaymentWrapper, PsimParams, PsimRule, RuleKind, Ucb1Rule,
    Ucb1State,
};
use mabmech::mechanisms::psim::{psim_gamma_integral, psim_gamma_integral_quadrature};
use mabmech::regret::regret_stochastic;
use mabmech::verify::{
    check_normalized, check_pointwise_monotone, check_truthful_exhaustive, check_weakly_separated, is_secured, BidGrid,
    Counterexample, EnumerationBudget, Observed, ViolationKind,
};
use mabmech::{
    click_allocation, run_allocation, run_allocation_seeded, AllocationRule, ConstantRule, Rational, Realization,
    StochasticInstance, ThresholdRule,
};
use proptest::prelude::*;

fn realization(agents: usize, horizon: usize) -> impl Strategy<Value = Realization> {
    prop::collection::vec(any::<bool>(), agents * horizon)
        .prop_map(move |bits| Realization::new(agents, horizon, bits).unwrap())
}

fn shape() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=3, 1usize..=12)
}

fn small_rational() -> impl Strategy<Value = Rational> {
    (1i64..=12, 1i64..=4).prop_map(|(n, d)| Rational::new(n, d))
}

fn rule(kind: RuleKind, k: usize, t: usize) -> Option<mabmech::mechanisms::AnyRule> {
    kind.build(k, t, 4.0).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn online_causality(
        (k, t, rho, future, cut, bids, seed) in shape().prop_flat_map(|(k, t)| (
            Just(k),
            Just(t),
            realization(k, t),
            realization(k, t),
            0..t,
            prop::collection::vec(0.1f64..4.0, k),
            any::<u64>(),
        )),
        kind in prop::sample::select(vec![RuleKind::Naive, RuleKind::Ucb1, RuleKind::Elimination, RuleKind::Psim]),
    ) {
        let Some(mut r) = rule(kind, k, t) else { return Ok(()) };
        let mixed = Realization::from_fn(k, t, |i, s| if s < cut { rho.get(i, s) } else { future.get(i, s) });
        let a = run_allocation_seeded(&mut r, &bids, &rho, seed).unwrap();
        let b = run_allocation_seeded(&mut r, &bids, &mixed, seed).unwrap();
        prop_assert_eq!(&a.records()[..cut], &b.records()[..cut]);
        prop_assert_eq!(a.records()[cut].agent, b.records()[cut].agent);
    }

    #[test]
    fn deterministic_rules_repeat(
        (k, t, rho, bids) in shape().prop_flat_map(|(k, t)| (
            Just(k), Just(t), realization(k, t), prop::collection::vec(0.1f64..4.0, k),
        )),
        kind in prop::sample::select(vec![RuleKind::Naive, RuleKind::Ucb1, RuleKind::Elimination]),
    ) {
        let Some(mut r) = rule(kind, k, t) else { return Ok(()) };
        let a = run_allocation(&mut r, &bids, &rho).unwrap();
        let b = run_allocation(&mut r.clone(), &bids, &rho).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn psim_gamma_monotone_in_own_bid(
        clicks in prop::collection::vec(0u64..30, 3),
        others in prop::collection::vec(0.05f64..1.0, 3),
        agent in 0usize..3,
    ) {
        let p = PsimParams::new(3, 300, 1.0).unwrap();
        let mut bids = others;
        let mut last = f64::NEG_INFINITY;
        for j in 1..=20 {
            bids[agent] = j as f64 / 20.0;
            let g = psim_gamma(&p, &bids, &clicks, agent);
            prop_assert!(g - last >= -1e-12, "{g} < {last}");
            prop_assert!((0.0..=1.0).contains(&g));
            last = g;
        }
    }

    #[test]
    fn psim_price_bounds_and_quadrature(
        clicks in prop::collection::vec(0u64..20, 2),
        bids in prop::collection::vec(0.01f64..1.0, 2),
        agent in 0usize..2,
    ) {
        let p = PsimParams::new(2, 100, 1.0).unwrap();
        let price = psim_payment_per_click(&p, &bids, &clicks, agent).unwrap();
        prop_assert!(price >= 0.0 && price <= bids[agent] * (1.0 + 1e-12), "{price}");
        let exact = psim_gamma_integral(&p, &bids, &clicks, agent);
        let quad = psim_gamma_integral_quadrature(&p, &bids, &clicks, agent);
        prop_assert!((exact - quad).abs() <= 1e-9 * exact.abs().max(1e-300), "{exact} vs {quad}");
    }

    #[test]
    fn ucb1_selection_is_scale_free(
        n in prop::collection::vec(0u64..20, 3),
        c in prop::collection::vec(0u64..20, 3),
        bids in prop::collection::vec(0.05f64..4.0, 3),
        scale in -6i32..=6,
    ) {
        let impressions = n.clone();
        let clicks: Vec<u64> = c.iter().zip(&n).map(|(&c, &n)| c.min(n)).collect();
        let elapsed = impressions.iter().sum::<u64>().max(1) as usize;
        let s = Ucb1State { impressions, clicks, elapsed };
        let f = 2f64.powi(scale);
        let scaled: Vec<f64> = bids.iter().map(|b| b * f).collect();
        prop_assert_eq!(s.select(&bids), s.select(&scaled));
    }

    #[test]
    fn ucb1_allocation_is_scale_free(
        (t, rho) in (1usize..=24).prop_flat_map(|t| (Just(t), realization(2, t))),
        bids in prop::collection::vec(0.05f64..4.0, 2),
        scale in -6i32..=6,
    ) {
        let mut r = Ucb1Rule::new(2, t);
        let f = 2f64.powi(scale);
        let a = run_allocation(&mut r, &bids, &rho).unwrap();
        let b = run_allocation(&mut r, &[bids[0] * f, bids[1] * f], &rho).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn elimination_keeps_an_active_agent(
        (k, t, rho, bids) in (1usize..=4, 1usize..=60).prop_flat_map(|(k, t)| (
            Just(k), Just(t), realization(k, t), prop::collection::vec(0.05f64..1.0, k),
        )),
    ) {
        let mut r = EliminationRule::<f64>::new(k, t);
        r.begin(&bids, 0);
        let mut dropped = vec![false; k];
        for s in 0..t {
            let a = r.choose(s);
            prop_assert!(!dropped[a], "agent {a} played after deactivation");
            r.observe(s, a, rho.get(a, s));
            let st = r.state();
            prop_assert!(st.active_agents().next().is_some());
            for (i, &act) in st.active.iter().enumerate() {
                prop_assert!(!(dropped[i] && act), "agent {i} reactivated");
                dropped[i] |= !act;
            }
        }
    }

    #[test]
    fn myerson_payment_is_normalized(
        (k, t, rho, bids) in (1usize..=3, 1usize..=6).prop_flat_map(|(k, t)| (
            Just(k), Just(t), realization(k, t), prop::collection::vec(0.25f64..4.0, k),
        )),
        kind in prop::sample::select(vec![RuleKind::Naive, RuleKind::Elimination]),
        agent in 0usize..3,
    ) {
        prop_assume!(agent < k);
        let Some(mut r) = rule(kind, k, t) else { return Ok(()) };
        let h = run_allocation(&mut r, &bids, &rho).unwrap();
        let clicks = click_allocation(&h, k).clicks[agent] as f64;
        let p = myerson_payment(&mut r, &bids, &rho, agent, None).unwrap();
        let slack = 1e-8 * bids[agent] * t as f64;
        prop_assert!(p >= -slack && p <= bids[agent] * clicks + slack, "{p} vs {clicks} clicks");
        let mut low = bids.clone();
        low[agent] = 0.0;
        let p0 = myerson_payment(&mut r, &low, &rho, agent, None).unwrap();
        prop_assert_eq!(p0, 0.0);
    }

    #[test]
    fn naive_payments_equal_myerson_exactly(
        (t, rho) in (2usize..=6).prop_flat_map(|t| (Just(t), realization(2, t))),
        bids in prop::collection::vec(small_rational(), 2),
    ) {
        let mut r = NaiveRule::<Rational>::new(2, t).unwrap();
        let h = run_allocation(&mut r, &bids, &rho).unwrap();
        let pay = naive_payments(&h, &bids, r.params()).unwrap();
        for (i, want) in pay.iter().enumerate() {
            prop_assert_eq!(myerson_payment_exact(&mut r, &bids, &rho, i).unwrap(), *want);
        }
    }

    #[test]
    fn secured_is_monotone_in_the_grid(
        (t, rho) in (2usize..=4).prop_flat_map(|t| (Just(t), realization(2, t))),
        bids in prop::collection::vec(1u32..=6, 2),
        mask in prop::collection::vec(any::<bool>(), 6),
        round in 0usize..4,
        agent in 0usize..2,
    ) {
        prop_assume!(round < t);
        let fine: Vec<f64> = (1..=6).map(f64::from).collect();
        let coarse: Vec<f64> = fine.iter().zip(&mask).filter(|(_, &m)| m).map(|(&x, _)| x).collect();
        let bids: Vec<f64> = bids.into_iter().map(f64::from).collect();
        let mut r = NaiveRule::<f64>::with_exploration(2, t, 1).unwrap();
        if is_secured(&mut r, &bids, &rho, round, agent, &fine).unwrap() {
            prop_assert!(is_secured(&mut r, &bids, &rho, round, agent, &coarse).unwrap());
        }
        let mut th = ThresholdRule::new(t);
        if is_secured(&mut th, &bids, &rho, round, agent, &fine).unwrap() {
            prop_assert!(is_secured(&mut th, &bids, &rho, round, agent, &coarse).unwrap());
        }
    }

    #[test]
    fn history_probabilities_sum_to_one(
        t in 2usize..=4,
        bids in prop::collection::vec(small_rational(), 2),
    ) {
        let mut r = NaiveRule::<Rational>::new(2, t).unwrap();
        let hs = consistent_histories(&mut r, &bids).unwrap();
        let total = hs.iter().fold(CtrPolynomial::zero(2), |acc, (_, p)| acc.add(p));
        prop_assert_eq!(total, CtrPolynomial::one(2));
    }

    #[test]
    fn realization_text_round_trip((k, t) in shape(), bits in prop::collection::vec(any::<bool>(), 36)) {
        let rho = Realization::new(k, t, bits[..k * t].to_vec()).unwrap();
        prop_assert_eq!(Realization::parse_text(&rho.to_text()).unwrap(), rho.clone());
        if let Some(ix) = rho.to_index() {
            prop_assert_eq!(Realization::from_index(k, t, ix), rho);
        }
    }

    #[test]
    fn counterexample_text_round_trip(
        (k, t, rho) in shape().prop_flat_map(|(k, t)| (Just(k), Just(t), realization(k, t))),
        bids in prop::collection::vec(small_rational(), 3),
        alt in prop::collection::vec(small_rational(), 3),
        kind in prop::sample::select(vec![
            ViolationKind::Monotonicity, ViolationKind::ExplorationSeparation, ViolationKind::WeakSeparation,
            ViolationKind::Truthfulness, ViolationKind::Normalization,
        ]),
        payment in small_rational(),
        round in 0usize..12,
    ) {
        let ce = Counterexample {
            kind,
            agents: vec![k - 1],
            rounds: vec![round % t, t - 1],
            bids: bids[..k].to_vec(),
            alt_bids: Some(alt[..k].to_vec()),
            value: Some(bids[0]),
            realization: rho,
            outcomes: vec![Observed::Agent(0), Observed::Utility(-payment), Observed::Payment { payment, clicks: 3 }],
        };
        prop_assert_eq!(Counterexample::<Rational>::parse_text(&ce.to_text()).unwrap(), ce);
    }

    #[test]
    fn fmt_g12_round_trip(x in prop::num::f64::NORMAL | prop::num::f64::ZERO) {
        let back: f64 = fmt_g12(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-12 * x.abs(), "{x} -> {}", fmt_g12(x));
    }

    #[test]
    fn polynomial_ring_laws(
        a in poly(), b in poly(), c in poly(),
        mu in prop::collection::vec((0i64..=4).prop_map(|n| Rational::new(n, 4)), 2),
    ) {
        prop_assert_eq!(a.mul(&b), b.mul(&a));
        prop_assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
        prop_assert!(a.sub(&a).is_zero());
        prop_assert_eq!(a.mul(&b).eval(&mu), a.eval(&mu) * b.eval(&mu));
        prop_assert!(a.mul(&b).degree() <= a.degree() + b.degree());
        let back = CtrPolynomial::from_records(2, &a.to_records()).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn lower_bound_instances_perturb_one_coordinate(k in 2usize..=5, t in 10usize..100_000, i in 0usize..5) {
        prop_assume!(i < k);
        let eps = lower_bound_epsilon(k, t);
        let boosted = make_lower_bound_instance(LowerBoundKind::Boosted, i, k, t, 1.0).unwrap();
        for (j, &mu) in boosted.ctrs.iter().enumerate() {
            if j == i {
                prop_assert!((mu - 0.5 - eps).abs() < 1e-15);
            } else {
                prop_assert_eq!(mu, 0.5);
            }
        }
    }

    #[test]
    fn best_constant_rule_has_zero_regret(
        ctrs in prop::collection::vec(0.0f64..=1.0, 1..4),
        values in prop::collection::vec(0.1f64..=1.0, 3),
        t in 1usize..200,
        seed in any::<u64>(),
    ) {
        let k = ctrs.len();
        let inst = StochasticInstance::truthful(t, ctrs, values[..k].to_vec(), 1.0).unwrap();
        let r = ConstantRule::new(k, t, inst.best_agent()).unwrap();
        let est = regret_stochastic(&r, &inst, 3, seed).unwrap();
        prop_assert_eq!(est.mean, 0.0);
    }
}

fn poly() -> impl Strategy<Value = CtrPolynomial<Rational>> {
    prop::collection::vec(((0u32..3, 0u32..3), -6i64..=6, 1i64..=3), 0..4).prop_map(|terms| {
        terms.into_iter().fold(CtrPolynomial::zero(2), |acc, ((e0, e1), n, d)| {
            acc.add(&CtrPolynomial::monomial(2, vec![e0, e1], Rational::new(n, d)))
        })
    })
}

#[test]
fn psim_rule_is_randomized() {
    let r = PsimRule::new(2, 20, 1.0).unwrap();
    assert!(!AllocationRule::<f64>::is_deterministic(&r));
    let r = Ucb1Rule::new(2, 20);
    assert!(AllocationRule::<f64>::is_deterministic(&r));
}

fn characterization_holds<R>(rule: R, budget: &EnumerationBudget<Rational>) -> bool
where
    R: AllocationRule<Rational> + Clone + Sync,
{
    let mech = PaymentWrapper::new(rule.clone(), PaymentRule::Myerson);
    let truthful = check_truthful_exhaustive(&mech, budget).unwrap().is_pass()
        && check_normalized(&mech, budget).unwrap().is_pass();
    let separated = check_pointwise_monotone(&rule, budget).unwrap().is_pass()
        && check_weakly_separated(&rule, budget).unwrap().is_pass();
    separated || !truthful
}

#[test]
fn truthful_mechanisms_are_monotone_and_weakly_separated() {
    let grid = BidGrid::uniform(2, &[Rational::from_integer(1), Rational::from_integer(2), Rational::from_integer(3)]).unwrap();
    let budget = EnumerationBudget::new(grid);
    for t in 2..=3 {
        assert!(characterization_holds(NaiveRule::<Rational>::new(2, t).unwrap(), &budget));
        assert!(characterization_holds(ThresholdRule::new(t), &budget));
        assert!(characterization_holds(ThresholdRule::inverted(t), &budget));
        assert!(characterization_holds(ConstantRule::new(2, t, 1).unwrap(), &budget));
        assert!(characterization_holds(mabmech::ScheduleRule::new(2, (0..t).map(|s| s % 2).collect()).unwrap(), &budget));
    }
}
