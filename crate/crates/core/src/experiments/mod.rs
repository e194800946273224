//! Reproducible experiment recipes: regret scaling sweeps, delta-gap growth,
//! UCB1 underbidding and PSim on fixed adversarial realizations.

mod output;

pub use output::{csv_table, fmt_g, fmt_g12};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instances::{lower_bound_family, make_delta_gap_instance};
use crate::mechanisms::{Mechanism, PsimRule, RuleKind, Ucb1Mechanism};
use crate::regret::{regret_adversarial, regret_stochastic, rule_seed};
use crate::rng::BernoulliClicks;
use crate::stats::Estimate;
use crate::types::{click_allocation, Realization, StochasticInstance};

pub const MIN_TRIALS: usize = 30;
pub const MIN_FIT_POINTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// The `2k` instances `I_i`, `J_i`; each point takes the worst member.
    LowerBound,
    DeltaGap { delta: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSpec {
    pub rules: Vec<RuleKind>,
    pub family: Family,
    pub horizons: Vec<usize>,
    pub agents: usize,
    pub v_max: f64,
    pub trials: usize,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rules.is_empty() {
            return Err(Error::Config("sweep needs at least one rule".into()));
        }
        if self.horizons.is_empty() {
            return Err(Error::Config("sweep needs a non-empty T list".into()));
        }
        if self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sweep T list must be strictly increasing".into()));
        }
        if self.trials < MIN_TRIALS {
            return Err(Error::Config(format!("sweep needs at least {MIN_TRIALS} trials per point, got {}", self.trials)));
        }
        if self.agents == 0 {
            return Err(Error::Config("sweep needs k >= 1".into()));
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return Err(Error::Config(format!("v_max must be positive, got {}", self.v_max)));
        }
        if let Family::DeltaGap { delta } = self.family {
            if !(delta > 0.0 && delta <= 0.25) {
                return Err(Error::Config(format!("delta = {delta} outside (0, 1/4]")));
            }
        }
        Ok(())
    }

    fn instances(&self, horizon: usize) -> Result<Vec<(String, StochasticInstance)>> {
        match self.family {
            Family::LowerBound => lower_bound_family(self.agents, horizon, self.v_max),
            Family::DeltaGap { delta } => Ok(vec![(
                format!("delta_{}", fmt_g12(delta)),
                make_delta_gap_instance(delta, self.agents, horizon, self.v_max)?,
            )]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub rule: String,
    pub instance: String,
    pub k: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub regret: f64,
    pub stderr: f64,
}

pub const SWEEP_HEADER: [&str; 8] = ["rule", "instance", "k", "T", "trials", "seed", "regret", "stderr"];
pub const FIT_HEADER: [&str; 4] = ["rule", "exponent", "exponent_stderr", "intercept"];

impl SweepRow {
    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.rule.clone(),
            self.instance.clone(),
            self.k.to_string(),
            self.horizon.to_string(),
            self.trials.to_string(),
            self.seed.to_string(),
            fmt_g12(self.regret),
            fmt_g12(self.stderr),
        ]
    }
}

/// One `(T, regret, SE)` point of a fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitPoint {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub regret: f64,
    pub stderr: f64,
}

/// Least-squares fit of `ln regret = intercept + exponent * ln T`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingFit {
    pub rule: String,
    pub points: Vec<FitPoint>,
    pub exponent: f64,
    pub exponent_stderr: f64,
    pub intercept: f64,
}

impl ScalingFit {
    pub fn fit(rule: &str, points: Vec<FitPoint>) -> Result<Self> {
        if points.len() < MIN_FIT_POINTS {
            return Err(Error::Config(format!("exponent fit needs at least {MIN_FIT_POINTS} points, got {}", points.len())));
        }
        if let Some(p) = points.iter().find(|p| !(p.regret > 0.0)) {
            return Err(Error::Config(format!(
                "degenerate fit for {rule}: regret {} at T={} is not positive",
                p.regret, p.horizon
            )));
        }
        let xs: Vec<f64> = points.iter().map(|p| (p.horizon as f64).ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.regret.ln()).collect();
        let (exponent, intercept, exponent_stderr) = ols(&xs, &ys);
        Ok(Self { rule: rule.to_string(), points, exponent, exponent_stderr, intercept })
    }

    pub fn csv_fields(&self) -> Vec<String> {
        vec![self.rule.clone(), fmt_g12(self.exponent), fmt_g12(self.exponent_stderr), fmt_g12(self.intercept)]
    }

    /// Half-width-1.96 confidence interval of the exponent.
    pub fn confidence_interval(&self) -> (f64, f64) {
        (self.exponent - 1.96 * self.exponent_stderr, self.exponent + 1.96 * self.exponent_stderr)
    }
}

/// Slope, intercept and slope standard error.
fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let se = if xs.len() > 2 { (ssr / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    (slope, intercept, se)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    /// Sorted by rule, then T, then instance.
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn rows_csv(&self) -> String {
        csv_table(&SWEEP_HEADER, self.rows.iter().map(SweepRow::csv_fields))
    }

    /// The worst family member per `(rule, T)`.
    pub fn worst_points(&self, rule: RuleKind) -> Vec<FitPoint> {
        let mut out: Vec<FitPoint> = Vec::new();
        for row in self.rows.iter().filter(|r| r.rule == rule.name()) {
            match out.last_mut() {
                Some(p) if p.horizon == row.horizon => {
                    if row.regret > p.regret {
                        *p = FitPoint { horizon: row.horizon, regret: row.regret, stderr: row.stderr };
                    }
                }
                _ => out.push(FitPoint { horizon: row.horizon, regret: row.regret, stderr: row.stderr }),
            }
        }
        out
    }

    pub fn fits(&self) -> Result<Vec<ScalingFit>> {
        self.spec.rules.iter().map(|&r| ScalingFit::fit(r.name(), self.worst_points(r))).collect()
    }
}

/// Regret of every rule on every family member at every T.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for &rule in &spec.rules {
        for &horizon in &spec.horizons {
            for (name, inst) in spec.instances(horizon)? {
                jobs.push((rule, horizon, name, inst));
            }
        }
    }
    let mut rows = jobs
        .into_par_iter()
        .map(|(rule, horizon, name, inst)| -> Result<SweepRow> {
            let built = rule.build(spec.agents, horizon, spec.v_max)?;
            let est = regret_stochastic(&built, &inst, spec.trials, spec.seed)?;
            Ok(SweepRow {
                rule: rule.name().to_string(),
                instance: name,
                k: spec.agents,
                horizon,
                trials: spec.trials,
                seed: spec.seed,
                regret: est.mean,
                stderr: est.stderr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rank = |r: &SweepRow| spec.rules.iter().position(|k| k.name() == r.rule).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| (rank(a), a.horizon, &a.instance).cmp(&(rank(b), b.horizon, &b.instance)));
    Ok(SweepResult { spec: spec.clone(), rows })
}

/// Worst-case regret over the lower-bound family, with an exponent fit per
/// rule.
pub fn regret_scaling_sweep(spec: &SweepSpec) -> Result<(SweepResult, Vec<ScalingFit>)> {
    let result = run_sweep(spec)?;
    let fits = result.fits()?;
    Ok((result, fits))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthRatio {
    pub rule: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub next_horizon: usize,
    pub ratio: f64,
    pub ratio_stderr: f64,
    /// Either endpoint has relative standard error above 20%.
    pub low_power: bool,
}

pub const RATIO_HEADER: [&str; 6] = ["rule", "T", "next_T", "ratio", "ratio_stderr", "low_power"];

impl GrowthRatio {
    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.rule.clone(),
            self.horizon.to_string(),
            self.next_horizon.to_string(),
            fmt_g12(self.ratio),
            fmt_g12(self.ratio_stderr),
            self.low_power.to_string(),
        ]
    }
}

pub fn growth_ratios(rule: &str, points: &[FitPoint]) -> Vec<GrowthRatio> {
    points
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let ratio = b.regret / a.regret;
            let ra = a.stderr / a.regret.abs();
            let rb = b.stderr / b.regret.abs();
            GrowthRatio {
                rule: rule.to_string(),
                horizon: a.horizon,
                next_horizon: b.horizon,
                ratio,
                ratio_stderr: ratio.abs() * (ra * ra + rb * rb).sqrt(),
                low_power: !(ra <= 0.2 && rb <= 0.2),
            }
        })
        .collect()
}

/// Regret growth between consecutive horizons on the delta-gap instance.
pub fn delta_gap_sweep(spec: &SweepSpec, delta: f64) -> Result<(SweepResult, Vec<GrowthRatio>)> {
    let spec = SweepSpec { family: Family::DeltaGap { delta }, ..spec.clone() };
    let result = run_sweep(&spec)?;
    let ratios = spec.rules.iter().flat_map(|&r| growth_ratios(r.name(), &result.worst_points(r))).collect();
    Ok((result, ratios))
}

#[derive(Clone, Debug, Serialize)]
pub struct UnderbidRow {
    pub shade: f64,
    pub bid: f64,
    pub utility: Estimate,
    /// Paired utility change against bidding the true value.
    pub gain: Estimate,
}

#[derive(Clone, Debug, Serialize)]
pub struct UnderbidReport {
    pub horizon: usize,
    pub trials: usize,
    pub rows: Vec<UnderbidRow>,
    pub best_shade: f64,
    pub best_gain: Estimate,
}

/// Expected utility of agent 0 under UCB1 pricing when it bids
/// `shade * v_0` and everyone else bids truthfully.
pub fn ucb1_underbid_experiment(
    ctrs: &[f64],
    values: &[f64],
    horizon: usize,
    shades: &[f64],
    trials: usize,
    seed: u64,
) -> Result<UnderbidReport> {
    let k = ctrs.len();
    if k == 0 || values.len() != k {
        return Err(Error::dim("values", k, values.len()));
    }
    if k >= 2 && !(1..k).all(|j| values[0] * ctrs[0] > values[j] * ctrs[j]) {
        return Err(Error::Config("agent 0 must have the strictly largest v * mu".into()));
    }
    if shades.is_empty() || shades.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Config("shading factors must be positive".into()));
    }
    if trials < 2 {
        return Err(Error::Config("underbid experiment needs at least 2 trials".into()));
    }
    let mut grid: Vec<f64> = shades.to_vec();
    grid.push(1.0);
    let utilities: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map_init(
            || Ucb1Mechanism::new(k, horizon),
            |m, trial| -> Result<Vec<f64>> {
                let clicks = BernoulliClicks::new(ctrs, horizon, seed, trial);
                grid.iter()
                    .map(|&s| {
                        let mut bids = values.to_vec();
                        bids[0] = s * values[0];
                        let r = m.run(&bids, &clicks, rule_seed(seed, trial))?;
                        let c = click_allocation(&r.history, k).clicks[0];
                        Ok(values[0] * c as f64 - r.payments[0])
                    })
                    .collect()
            },
        )
        .collect::<Result<_>>()?;
    let truthful = grid.len() - 1;
    let rows: Vec<UnderbidRow> = (0..shades.len())
        .map(|g| UnderbidRow {
            shade: shades[g],
            bid: shades[g] * values[0],
            utility: Estimate::from_samples(&utilities.iter().map(|u| u[g]).collect::<Vec<_>>()),
            gain: Estimate::from_samples(&utilities.iter().map(|u| u[g] - u[truthful]).collect::<Vec<_>>()),
        })
        .collect();
    let best = rows
        .iter()
        .fold(None::<&UnderbidRow>, |acc, r| match acc {
            Some(b) if b.gain.mean >= r.gain.mean => Some(b),
            _ => Some(r),
        })
        .expect("non-empty shading grid");
    Ok(UnderbidReport { horizon, trials, best_shade: best.shade, best_gain: best.gain, rows })
}

/// Fixed click patterns for the adversarial PSim benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixture {
    /// Agent 0 is clicked every round, nobody else ever.
    ConstantBest,
    /// Round `t` clicks agent `t mod k` only.
    Alternating,
    /// Agent 1 is clicked during the first third, agent 0 afterwards.
    GreedyTrap,
    AllZero,
}

impl Fixture {
    pub const ALL: [Fixture; 4] = [Fixture::ConstantBest, Fixture::Alternating, Fixture::GreedyTrap, Fixture::AllZero];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::ConstantBest => "constant_best",
            Fixture::Alternating => "alternating",
            Fixture::GreedyTrap => "greedy_trap",
            Fixture::AllZero => "all_zero",
        }
    }

    pub fn realization(self, agents: usize, horizon: usize) -> Realization {
        match self {
            Fixture::ConstantBest => Realization::from_fn(agents, horizon, |i, _| i == 0),
            Fixture::Alternating => Realization::from_fn(agents, horizon, |i, t| t % agents == i),
            Fixture::GreedyTrap => Realization::from_fn(agents, horizon, |i, t| {
                let early = 3 * t < horizon;
                (early && i == 1.min(agents - 1)) || (!early && i == 0)
            }),
            Fixture::AllZero => Realization::zeros(agents, horizon),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub fixture: &'static str,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub regret: Estimate,
    /// `(k ln k)^(1/3) T^(2/3) v_max`.
    pub envelope: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Largest `regret / envelope` over all rows.
    pub calibrated_constant: f64,
    /// Exponent fits for fixtures whose regret is positive at every T.
    pub fits: Vec<ScalingFit>,
}

/// PSim's adversarial regret on fixed realizations, truthful bids `v_max`.
pub fn psim_adversarial_bench(
    horizons: &[usize],
    agents: usize,
    fixtures: &[Fixture],
    seeds: usize,
    seed: u64,
    v_max: f64,
) -> Result<BenchReport> {
    if horizons.is_empty() || horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("bench T list must be non-empty and strictly increasing".into()));
    }
    if agents < 2 {
        return Err(Error::Config("bench needs k >= 2".into()));
    }
    let k = agents as f64;
    let bids = vec![v_max; agents];
    let mut rows = Vec::new();
    for &f in fixtures {
        for &horizon in horizons {
            let rule = PsimRule::new(agents, horizon, v_max)?;
            let rho = f.realization(agents, horizon);
            let regret = regret_adversarial(&rule, &bids, &bids, &rho, seeds, seed)?;
            let envelope = (k * k.ln()).cbrt() * (horizon as f64).powf(2.0 / 3.0) * v_max;
            rows.push(BenchRow { fixture: f.name(), horizon, regret, envelope });
        }
    }
    let calibrated_constant = rows.iter().map(|r| r.regret.mean / r.envelope).fold(0.0, f64::max);
    let fits = fixtures
        .iter()
        .filter_map(|f| {
            let points: Vec<FitPoint> = rows
                .iter()
                .filter(|r| r.fixture == f.name())
                .map(|r| FitPoint { horizon: r.horizon, regret: r.regret.mean, stderr: r.regret.stderr })
                .collect();
            ScalingFit::fit(f.name(), points).ok()
        })
        .collect();
    Ok(BenchReport { rows, calibrated_constant, fits })
}
