//! Myerson payments by counterfactual re-simulation over the agent's own bid.
//!
//! The click count `x -> C_i(x, b_-i)` of a deterministic rule on a fixed
//! realization is a step function; its integral is assembled from exact
//! rectangles once the steps have been located.

use crate::error::{Error, Result};
use crate::rule::{check_dimensions, drive, AllocationRule};
use crate::scalar::{Rational, Scalar};
use crate::types::ClickSource;

/// A value a step function can take: numbers, or polynomials in the
/// expected-payment machinery.
pub trait StepValue<B: Scalar>: Clone + PartialEq {
    fn zero_like(&self) -> Self;
    fn add_scaled(&mut self, other: &Self, weight: B);
}

impl<B: Scalar> StepValue<B> for B {
    fn zero_like(&self) -> Self {
        B::zero()
    }
    fn add_scaled(&mut self, other: &Self, weight: B) {
        *self += *other * weight;
    }
}

/// How the jumps of the step function are located.
#[derive(Clone, Debug)]
pub enum Breakpoints<B> {
    /// Recursive bisection from a uniform grid of `initial_cells` until an
    /// interval containing a jump is narrower than `tol`; the narrow
    /// interval contributes the average of its end values.
    Bisection { tol: B, initial_cells: usize },
    /// Every jump lies in this candidate set; the function is evaluated once
    /// inside every gap between consecutive candidates.
    Candidates(Vec<B>),
}

/// Integral of the step function `eval` on `[0, upper]`, together with its
/// value at `upper`. Fails once more than `limit` jumps have been found.
pub fn integrate_step<B, V, F>(upper: B, mut eval: F, locator: &Breakpoints<B>, limit: usize) -> Result<(V, V)>
where
    B: Scalar,
    V: StepValue<B>,
    F: FnMut(B) -> Result<V>,
{
    let at_upper = eval(upper)?;
    let mut acc = at_upper.zero_like();
    let mut jumps = 0usize;
    match locator {
        Breakpoints::Candidates(candidates) => {
            let mut points: Vec<B> = candidates.iter().copied().filter(|&c| c > B::zero() && c < upper).collect();
            points.sort_by(|a, b| a.partial_cmp(b).expect("comparable candidates"));
            points.dedup();
            let mut prev_point = B::zero();
            let mut prev_value: Option<V> = None;
            for &p in points.iter().chain(std::iter::once(&upper)) {
                let v = eval((prev_point + p).half())?;
                if prev_value.as_ref().is_some_and(|pv| *pv != v) {
                    jumps += 1;
                    if jumps > limit {
                        return Err(Error::TooManyBreakpoints { found: jumps, limit });
                    }
                }
                acc.add_scaled(&v, p - prev_point);
                prev_point = p;
                prev_value = Some(v);
            }
        }
        Breakpoints::Bisection { tol, initial_cells } => {
            let cells = (*initial_cells).max(1);
            let mut lo = B::zero();
            let mut v_lo = eval(lo)?;
            for c in 1..=cells {
                let hi = if c == cells { upper } else { upper * B::from_count(c as u64) / B::from_count(cells as u64) };
                let v_hi = if c == cells { at_upper.clone() } else { eval(hi)? };
                bisect(lo, &v_lo, hi, &v_hi, *tol, &mut eval, &mut acc, &mut jumps, limit)?;
                lo = hi;
                v_lo = v_hi;
            }
        }
    }
    Ok((at_upper, acc))
}

#[allow(clippy::too_many_arguments)]
fn bisect<B, V, F>(lo: B, v_lo: &V, hi: B, v_hi: &V, tol: B, eval: &mut F, acc: &mut V, jumps: &mut usize, limit: usize) -> Result<()>
where
    B: Scalar,
    V: StepValue<B>,
    F: FnMut(B) -> Result<V>,
{
    if v_lo == v_hi {
        acc.add_scaled(v_lo, hi - lo);
        return Ok(());
    }
    let width = hi - lo;
    if width <= tol {
        *jumps += 1;
        if *jumps > limit {
            return Err(Error::TooManyBreakpoints { found: *jumps, limit });
        }
        acc.add_scaled(v_lo, width.half());
        acc.add_scaled(v_hi, width.half());
        return Ok(());
    }
    let mid = lo + width.half();
    let v_mid = eval(mid)?;
    bisect(lo, v_lo, mid, &v_mid, tol, eval, acc, jumps, limit)?;
    bisect(mid, &v_mid, hi, v_hi, tol, eval, acc, jumps, limit)
}

/// Clicks of `agent` when it bids `x` and everyone else keeps `bids`.
pub fn clicks_at<B, R, C>(rule: &mut R, bids: &[B], clicks: &C, agent: usize, x: B) -> u64
where
    B: Scalar,
    R: AllocationRule<B> + ?Sized,
    C: ClickSource + ?Sized,
{
    let mut local = bids.to_vec();
    local[agent] = x;
    let mut count = 0;
    drive(rule, &local, clicks, 0, |_, a, click| count += (a == agent && click) as u64);
    count
}

/// Candidate jump points `b_j * p / q` with `j != agent` and `1 <= p, q <= T`.
pub fn ratio_candidates(bids: &[Rational], agent: usize, horizon: usize) -> Vec<Rational> {
    let t = horizon.max(1) as i64;
    let mut out = Vec::new();
    for (j, &b) in bids.iter().enumerate() {
        if j == agent {
            continue;
        }
        for p in 1..=t {
            for q in 1..=t {
                out.push(b * Rational::new(p, q));
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// `b_i C_i(b) - int_0^{b_i} C_i(x, b_-i) dx` for a deterministic rule on a
/// known click source.
pub fn myerson_payment_with<B, R, C>(
    rule: &mut R,
    bids: &[B],
    clicks: &C,
    agent: usize,
    locator: &Breakpoints<B>,
) -> Result<B>
where
    B: Scalar,
    R: AllocationRule<B> + ?Sized,
    C: ClickSource + ?Sized,
{
    if !rule.is_deterministic() {
        return Err(Error::NonDeterministic);
    }
    check_dimensions(rule, bids, clicks)?;
    if agent >= bids.len() {
        return Err(Error::Config(format!("agent {agent} out of range for k={}", bids.len())));
    }
    let limit = rule.horizon() * (rule.agents() + 1);
    let b = bids[agent];
    let (c_b, integral) = integrate_step(
        b,
        |x| Ok(B::from_count(clicks_at(rule, bids, clicks, agent, x))),
        locator,
        limit,
    )?;
    Ok(b * c_b - integral)
}

/// Floating-point Myerson payment with bisection tolerance `tol` (default
/// `1e-9 * b_i`).
pub fn myerson_payment<R, C>(rule: &mut R, bids: &[f64], clicks: &C, agent: usize, tol: Option<f64>) -> Result<f64>
where
    R: AllocationRule<f64> + ?Sized,
    C: ClickSource + ?Sized,
{
    let b = *bids.get(agent).ok_or_else(|| Error::Config(format!("agent {agent} out of range")))?;
    let tol = tol.unwrap_or(1e-9 * b);
    myerson_payment_with(rule, bids, clicks, agent, &Breakpoints::Bisection { tol, initial_cells: 16 })
}

/// Exact Myerson payment for rules whose jumps lie on [`ratio_candidates`].
pub fn myerson_payment_exact<R, C>(rule: &mut R, bids: &[Rational], clicks: &C, agent: usize) -> Result<Rational>
where
    R: AllocationRule<Rational> + ?Sized,
    C: ClickSource + ?Sized,
{
    let candidates = ratio_candidates(bids, agent, rule.horizon());
    myerson_payment_with(rule, bids, clicks, agent, &Breakpoints::Candidates(candidates))
}

/// Scalars with a default way of locating Myerson breakpoints: bisection to
/// `1e-9 * b_i` for floats, ratio candidates for rationals.
pub trait DefaultBreakpoints: Scalar {
    fn default_breakpoints(bids: &[Self], agent: usize, horizon: usize) -> Breakpoints<Self>;
}

impl DefaultBreakpoints for f64 {
    fn default_breakpoints(bids: &[f64], agent: usize, _horizon: usize) -> Breakpoints<f64> {
        Breakpoints::Bisection { tol: 1e-9 * bids[agent], initial_cells: 16 }
    }
}

impl DefaultBreakpoints for Rational {
    fn default_breakpoints(bids: &[Rational], agent: usize, horizon: usize) -> Breakpoints<Rational> {
        Breakpoints::Candidates(ratio_candidates(bids, agent, horizon))
    }
}
