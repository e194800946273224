use std::fs;
use std::path::Path;

use super::{list, usize_list, CheckArgs, Experiment, MonomialArgs, PaymentsArgs, SimulateArgs, Sink, SweepArgs};
use super::{EXIT_PASS, EXIT_VIOLATION};
use crate::error::{Error, Result};
use crate::expectation::{consistent_histories, monomials_up_to, relevant_set_polynomial, verify_expected_payment, CtrPolynomial, MixtureParams, MixtureMechanism};
use crate::experiments::{self, fmt_g12, Family, Fixture, SweepSpec, FIT_HEADER, RATIO_HEADER, SWEEP_HEADER};
use crate::mechanisms::myerson::DefaultBreakpoints;
use crate::mechanisms::{
    myerson_payment_with, run_mechanism, Breakpoints, EliminationRule, EliminationThreshold, Mechanism, NaiveMechanism, NaiveRule,
    RuleKind, Ucb1Rule,
};
use crate::rng::BernoulliClicks;
use crate::rule::AllocationRule;
use crate::scalar::{Rational, Scalar};
use crate::types::{ClickSource, Realization};
use crate::verify::{run_named_checks, CheckOutcome, NamedBudget};

fn fmt_scalar<B: Scalar>(x: B) -> String {
    if B::EXACT {
        x.to_string()
    } else {
        fmt_g12(x.to_f64())
    }
}

fn expect_len(what: &'static str, k: usize, got: usize) -> Result<()> {
    if got == k {
        Ok(())
    } else {
        Err(Error::dim(what, k, got))
    }
}

/// The fixed realization: from a file, or drawn from the CTRs as trial 0.
fn realization(k: usize, horizon: usize, ctrs: Option<&str>, file: Option<&Path>, seed: u64) -> Result<Realization> {
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let rho = Realization::parse_text(&text)?;
        expect_len("realization agents", k, rho.agents())?;
        expect_len("realization rounds", horizon, rho.horizon())?;
        return Ok(rho);
    }
    let ctrs: Vec<f64> = match ctrs {
        Some(s) => list("ctrs", s)?,
        None => vec![0.5; k],
    };
    expect_len("ctrs", k, ctrs.len())?;
    if ctrs.iter().any(|&m| !(0.0..=1.0).contains(&m)) {
        return Err(Error::Config("ctrs must lie in [0, 1]".into()));
    }
    let clicks = BernoulliClicks::new(&ctrs, horizon, seed, 0);
    Ok(Realization::from_fn(k, horizon, |i, t| clicks.click(i, t)))
}

pub fn simulate(a: &SimulateArgs, sink: &mut Sink) -> Result<i32> {
    let inst = &a.instance;
    let (k, horizon, seed) = (inst.k, inst.horizon, a.common.seed);
    let bids: Vec<f64> = list("bids", &inst.bids)?;
    expect_len("bids", k, bids.len())?;
    let values: Vec<f64> = match &a.values {
        Some(v) => list("values", v)?,
        None => bids.clone(),
    };
    expect_len("values", k, values.len())?;
    let v_max = a.v_max.unwrap_or_else(|| bids.iter().chain(&values).fold(0.0, |m, &x| f64::max(m, x)));
    let rho = realization(k, horizon, a.ctrs.as_deref(), a.realization_file.as_deref(), seed)?;
    let mut mech = inst.rule.mechanism(k, horizon, v_max)?;
    let out = run_mechanism(&mut mech, &bids, &values, &rho, seed)?;
    let history: Vec<Vec<String>> = out
        .history
        .records()
        .iter()
        .enumerate()
        .map(|(t, r)| vec![t.to_string(), r.agent.to_string(), (r.click as u8).to_string()])
        .collect();
    sink.table("history", &["round", "agent", "click"], &history)?;
    let agents: Vec<Vec<String>> = (0..k)
        .map(|i| {
            vec![
                i.to_string(),
                fmt_g12(bids[i]),
                fmt_g12(values[i]),
                out.clicks.impressions[i].to_string(),
                out.clicks.clicks[i].to_string(),
                fmt_g12(out.payments[i]),
                fmt_g12(out.utilities[i]),
            ]
        })
        .collect();
    sink.table("outcome", &["agent", "bid", "value", "impressions", "clicks", "payment", "utility"], &agents)?;
    Ok(EXIT_PASS)
}

pub fn check(a: &CheckArgs, sink: &mut Sink) -> Result<i32> {
    let grid: Vec<f64> = list("grid", &a.grid)?;
    let budget = NamedBudget { grid, max_kt: a.max_kt, max_profiles: a.max_profiles };
    let outcomes = run_named_checks(a.rule, a.k, a.horizon, &a.checks.0, &budget)?;
    let mut rows = Vec::new();
    for o in &outcomes {
        let file = match &o.counterexample {
            Some(text) => {
                let name = format!("counterexample_{}.txt", o.check.name());
                sink.file(&name, text)?;
                name
            }
            None => String::new(),
        };
        let verdict = if o.passed() { "pass" } else { "fail" };
        let kind = o.violation.map(|v| v.name().to_string()).unwrap_or_default();
        rows.push(vec![o.check.name().to_string(), verdict.to_string(), kind, file]);
    }
    sink.table("checks", &["check", "verdict", "violation", "counterexample"], &rows)?;
    Ok(if outcomes.iter().all(CheckOutcome::passed) { EXIT_PASS } else { EXIT_VIOLATION })
}

fn parse_rules(s: &str) -> Result<Vec<RuleKind>> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(str::parse).collect()
}

pub fn sweep(a: &SweepArgs, sink: &mut Sink) -> Result<i32> {
    let horizons = usize_list("Ts", &a.horizons)?;
    let seed = a.common.seed;
    let spec = || -> Result<SweepSpec> {
        let spec = SweepSpec {
            rules: parse_rules(&a.rules)?,
            family: Family::LowerBound,
            horizons: horizons.clone(),
            agents: a.k,
            v_max: a.v_max,
            trials: a.trials,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    };
    match a.experiment {
        Experiment::Regret => {
            let result = experiments::run_sweep(&spec()?)?;
            sink.table("regret_points", &SWEEP_HEADER, &result.rows.iter().map(|r| r.csv_fields()).collect::<Vec<_>>())?;
            let fits = result.fits()?;
            sink.table("regret_fits", &FIT_HEADER, &fits.iter().map(|f| f.csv_fields()).collect::<Vec<_>>())?;
        }
        Experiment::DeltaGap => {
            let (result, ratios) = experiments::delta_gap_sweep(&spec()?, a.delta)?;
            sink.table("delta_gap_points", &SWEEP_HEADER, &result.rows.iter().map(|r| r.csv_fields()).collect::<Vec<_>>())?;
            sink.table("delta_gap_ratios", &RATIO_HEADER, &ratios.iter().map(|r| r.csv_fields()).collect::<Vec<_>>())?;
        }
        Experiment::Underbid => underbid(a, &horizons, sink)?,
        Experiment::PsimBench => {
            let fixtures = a
                .fixtures
                .split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(|p| {
                    Fixture::ALL.iter().copied().find(|f| f.name() == p).ok_or_else(|| {
                        let names: Vec<&str> = Fixture::ALL.iter().map(|f| f.name()).collect();
                        Error::Config(format!("unknown fixture {p:?}; valid fixtures: {}", names.join(", ")))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let rep = experiments::psim_adversarial_bench(&horizons, a.k, &fixtures, a.trials, seed, a.v_max)?;
            let rows: Vec<Vec<String>> = rep
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.fixture.to_string(),
                        a.k.to_string(),
                        r.horizon.to_string(),
                        a.trials.to_string(),
                        seed.to_string(),
                        fmt_g12(r.regret.mean),
                        fmt_g12(r.regret.stderr),
                        fmt_g12(r.envelope),
                    ]
                })
                .collect();
            sink.table("psim_bench", &["fixture", "k", "T", "seeds", "seed", "regret", "stderr", "envelope"], &rows)?;
            let fits: Vec<Vec<String>> = rep.fits.iter().map(|f| f.csv_fields()).collect();
            sink.table("psim_bench_fits", &["fixture", "exponent", "exponent_stderr", "intercept"], &fits)?;
            sink.table("psim_bench_summary", &["calibrated_constant"], &[vec![fmt_g12(rep.calibrated_constant)]])?;
        }
    }
    Ok(EXIT_PASS)
}

fn underbid(a: &SweepArgs, horizons: &[usize], sink: &mut Sink) -> Result<()> {
    if horizons.is_empty() {
        return Err(Error::Config("--Ts must not be empty".into()));
    }
    let ctrs: Vec<f64> = list("ctrs", &a.ctrs)?;
    let values: Vec<f64> = list("values", &a.values)?;
    let shades: Vec<f64> = list("shades", &a.shades)?;
    let mut curve = Vec::new();
    let mut best = Vec::new();
    for &horizon in horizons {
        let rep = experiments::ucb1_underbid_experiment(&ctrs, &values, horizon, &shades, a.trials, a.common.seed)?;
        for r in &rep.rows {
            curve.push(vec![
                horizon.to_string(),
                fmt_g12(r.shade),
                fmt_g12(r.bid),
                fmt_g12(r.utility.mean),
                fmt_g12(r.utility.stderr),
                fmt_g12(r.gain.mean),
                fmt_g12(r.gain.stderr),
            ]);
        }
        best.push(vec![
            horizon.to_string(),
            fmt_g12(rep.best_shade),
            fmt_g12(rep.best_gain.mean),
            fmt_g12(rep.best_gain.stderr),
            (rep.best_gain.mean > 3.0 * rep.best_gain.stderr).to_string(),
        ]);
    }
    sink.table("underbid", &["T", "shade", "bid", "utility", "utility_stderr", "gain", "gain_stderr"], &curve)?;
    sink.table("underbid_best", &["T", "best_shade", "gain", "gain_stderr", "significant"], &best)?;
    Ok(())
}

pub fn payments(a: &PaymentsArgs, sink: &mut Sink) -> Result<i32> {
    let inst = &a.instance;
    let (k, horizon, seed) = (inst.k, inst.horizon, a.common.seed);
    let rho = realization(k, horizon, a.ctrs.as_deref(), a.realization_file.as_deref(), seed)?;
    if a.exact {
        if inst.rule != RuleKind::Naive {
            return Err(Error::Config(format!("--exact supports the naive rule only, not {}", inst.rule)));
        }
        let bids: Vec<Rational> = list("bids", &inst.bids)?;
        let rule = NaiveRule::<Rational>::new(k, horizon)?;
        return payments_table(rule.clone(), NaiveMechanism(rule), &bids, &rho, seed, |b, i| Rational::default_breakpoints(b, i, horizon), sink);
    }
    let bids: Vec<f64> = list("bids", &inst.bids)?;
    let v_max = bids.iter().fold(0.0, |m: f64, &x| m.max(x));
    let locate = |b: &[f64], i: usize| match a.tol {
        Some(tol) => Breakpoints::Bisection { tol: tol * b[i], initial_cells: 16 },
        None => f64::default_breakpoints(b, i, horizon),
    };
    let rule = inst.rule.build(k, horizon, v_max)?;
    payments_table(rule, inst.rule.mechanism(k, horizon, v_max)?, &bids, &rho, seed, locate, sink)
}

fn payments_table<B, R, M>(
    mut rule: R,
    mut mech: M,
    bids: &[B],
    rho: &Realization,
    seed: u64,
    locate: impl Fn(&[B], usize) -> Breakpoints<B>,
    sink: &mut Sink,
) -> Result<i32>
where
    B: Scalar,
    R: AllocationRule<B>,
    M: Mechanism<B>,
{
    expect_len("bids", rule.agents(), bids.len())?;
    let own = mech.run(bids, rho, seed)?;
    let clicks = crate::types::click_allocation(&own.history, bids.len());
    let mut rows = Vec::new();
    for i in 0..bids.len() {
        let p = myerson_payment_with(&mut rule, bids, rho, i, &locate(bids, i))?;
        rows.push(vec![i.to_string(), fmt_scalar(bids[i]), clicks.clicks[i].to_string(), fmt_scalar(p), fmt_scalar(own.payments[i])]);
    }
    sink.table("payments", &["agent", "bid", "clicks", "myerson_payment", "mechanism_payment"], &rows)?;
    Ok(EXIT_PASS)
}

pub fn monomial_verify(a: &MonomialArgs, sink: &mut Sink) -> Result<i32> {
    let inst = &a.instance;
    let (k, horizon) = (inst.k, inst.horizon);
    let mu: Vec<f64> = list("ctrs", &a.ctrs)?;
    expect_len("ctrs", k, mu.len())?;
    match inst.rule {
        RuleKind::Naive => monomial_suite::<Rational, _>(a, NaiveRule::new(k, horizon)?, &mu, sink),
        RuleKind::Ucb1 => monomial_suite::<f64, _>(a, Ucb1Rule::new(k, horizon), &mu, sink),
        RuleKind::Elimination => {
            let bids: Vec<f64> = list("bids", &inst.bids)?;
            let v_max = bids.iter().fold(0.0, |m: f64, &x| m.max(x));
            monomial_suite::<f64, _>(a, EliminationRule::with_threshold(k, horizon, v_max, EliminationThreshold::default()), &mu, sink)
        }
        RuleKind::Psim => Err(Error::NonDeterministic),
    }
}

fn same<B: Scalar>(a: &CtrPolynomial<B>, b: &CtrPolynomial<B>) -> bool {
    let tol = if B::EXACT { 0.0 } else { 1e-9 };
    a.sub(b).terms().all(|(_, c)| c.to_f64().abs() <= tol)
}

fn monomial_suite<B, R>(a: &MonomialArgs, astar: R, mu: &[f64], sink: &mut Sink) -> Result<i32>
where
    B: Scalar + DefaultBreakpoints,
    R: AllocationRule<B> + Clone + Sync,
{
    let (k, horizon) = (a.instance.k, a.instance.horizon);
    let bids: Vec<B> = list("bids", &a.instance.bids)?;
    expect_len("bids", k, bids.len())?;
    let params = match &a.gamma {
        Some(g) => MixtureParams::new(B::parse_scalar(g).map_err(|e| Error::Config(format!("--gamma: {e}")))?)?,
        None => MixtureParams::regret_preserving(horizon)?,
    };

    let histories = consistent_histories(&mut astar.clone(), &bids)?;
    let total = histories.iter().fold(CtrPolynomial::zero(k), |acc, (_, p)| acc.add(p));
    let sums_to_one = same(&total, &CtrPolynomial::one(k));

    let mut relevant_ok = true;
    for q in monomials_up_to(k, horizon as u32) {
        let lhs = relevant_set_polynomial::<Rational>(k, horizon, &q)?;
        relevant_ok &= lhs == CtrPolynomial::monomial(k, q.clone(), Rational::from_integer(1));
    }

    let mut mech = MixtureMechanism::new(astar.clone(), params)?;
    let polys = mech.payment_polynomials(&bids)?.to_vec();
    let bound = horizon as u32;
    let degrees_ok = histories.iter().all(|(_, p)| p.degree() <= bound) && polys.iter().all(|p| p.degree() <= bound);

    let report = verify_expected_payment(&astar, &bids, params, mu, a.trials, a.common.seed)?;
    let rows: Vec<Vec<String>> = report
        .agents
        .iter()
        .map(|c| {
            vec![
                c.agent.to_string(),
                fmt_g12(c.polynomial),
                fmt_g12(c.estimate.mean),
                fmt_g12(c.estimate.stderr),
                fmt_g12(c.z),
                polys[c.agent].to_string(),
            ]
        })
        .collect();
    sink.table("monomial_payments", &["agent", "expected", "estimate", "stderr", "z", "polynomial"], &rows)?;
    let within = report.max_abs_z() < 3.0;
    let identities = [
        ("history_probabilities_sum_to_one", sums_to_one),
        ("scaled_relevant_sets_equal_monomials", relevant_ok),
        ("degrees_at_most_T", degrees_ok),
        ("monte_carlo_within_3_se", within),
    ];
    let id_rows: Vec<Vec<String>> = identities.iter().map(|(n, ok)| vec![n.to_string(), ok.to_string()]).collect();
    sink.table("identities", &["identity", "holds"], &id_rows)?;
    Ok(if identities.iter().all(|(_, ok)| *ok) { EXIT_PASS } else { EXIT_VIOLATION })
}
