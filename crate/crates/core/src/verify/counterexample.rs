use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mechanisms::Mechanism;
use crate::rule::{allocations, check_dimensions, AllocationRule};
use crate::scalar::{parse_list, Scalar};
use crate::types::{click_allocation, Realization};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    Monotonicity,
    ExplorationSeparation,
    WeakSeparation,
    Truthfulness,
    Normalization,
}

impl ViolationKind {
    pub fn name(self) -> &'static str {
        match self {
            ViolationKind::Monotonicity => "monotonicity",
            ViolationKind::ExplorationSeparation => "exploration-separation",
            ViolationKind::WeakSeparation => "weak-separation",
            ViolationKind::Truthfulness => "truthfulness",
            ViolationKind::Normalization => "normalization",
        }
    }
}

impl FromStr for ViolationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        use ViolationKind::*;
        [Monotonicity, ExplorationSeparation, WeakSeparation, Truthfulness, Normalization]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown violation kind '{s}'")))
    }
}

/// One side of a conflict.
#[derive(Clone, Debug, PartialEq)]
pub enum Observed<B: Scalar> {
    /// Agent shown at the reported round.
    Agent(usize),
    Utility(B),
    Payment { payment: B, clicks: u64 },
}

impl<B: Scalar> fmt::Display for Observed<B> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observed::Agent(a) => write!(f, "agent {a}"),
            Observed::Utility(u) => write!(f, "utility {u}"),
            Observed::Payment { payment, clicks } => write!(f, "payment {payment} clicks {clicks}"),
        }
    }
}

impl<B: Scalar> Observed<B> {
    fn parse(s: &str) -> Result<Self> {
        let words: Vec<&str> = s.split_whitespace().collect();
        let bad = || Error::Parse(format!("bad outcome '{s}'"));
        match words.as_slice() {
            ["agent", a] => Ok(Observed::Agent(a.parse().map_err(|_| bad())?)),
            ["utility", u] => Ok(Observed::Utility(B::parse_scalar(u)?)),
            ["payment", p, "clicks", c] => {
                Ok(Observed::Payment { payment: B::parse_scalar(p)?, clicks: c.parse().map_err(|_| bad())? })
            }
            _ => Err(bad()),
        }
    }
}

/// A concrete violation, self-contained enough to be replayed.
///
/// Field meaning per kind, with `rounds`, `agents` and `outcomes` in order:
/// - monotonicity: `[t]`, `[i]`; `bids` show `i` at `t`, `alt_bids` raise
///   `b_i` and do not; outcomes are the agents shown at `t`.
/// - exploration-separation: `[t, t']`, `[j]`; flipping `rho_j(t)` changes
///   round `t'` under `bids`, while `alt_bids` change who is shown at `t`.
/// - weak-separation: `[t, t']`, `[i]`; `i` is influenced at `t'` under
///   `bids`, and `alt_bids` raise `b_i` and change who is shown at `t`.
/// - truthfulness: `[]`, `[i]`; `value` is `v_i = bids[i]`, `alt_bids[i]` is
///   the profitable deviation; outcomes are the two utilities.
/// - normalization: `[]`, `[i]`; one payment outcome outside `[0, b_i C_i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Counterexample<B: Scalar = f64> {
    pub kind: ViolationKind,
    pub agents: Vec<usize>,
    pub rounds: Vec<usize>,
    pub bids: Vec<B>,
    pub alt_bids: Option<Vec<B>>,
    pub value: Option<B>,
    pub realization: Realization,
    pub outcomes: Vec<Observed<B>>,
}

pub enum Verdict<B: Scalar = f64> {
    Pass,
    Fail(Box<Counterexample<B>>),
}

impl<B: Scalar> Verdict<B> {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn counterexample(&self) -> Option<&Counterexample<B>> {
        match self {
            Verdict::Pass => None,
            Verdict::Fail(c) => Some(c),
        }
    }

    pub(crate) fn from_option(c: Option<Counterexample<B>>) -> Self {
        c.map_or(Verdict::Pass, |c| Verdict::Fail(Box::new(c)))
    }
}

impl<B: Scalar> fmt::Debug for Verdict<B> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => f.write_str("Pass"),
            Verdict::Fail(c) => write!(f, "Fail({})", c.kind.name()),
        }
    }
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl<B: Scalar> Counterexample<B> {
    /// Line-oriented `key: value` text; `realization:` is followed by one
    /// 0/1 row per agent.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "kind: {}", self.kind.name());
        let _ = writeln!(s, "agents: {}", join(&self.agents));
        let _ = writeln!(s, "rounds: {}", join(&self.rounds));
        let _ = writeln!(s, "bids: {}", join(&self.bids));
        if let Some(alt) = &self.alt_bids {
            let _ = writeln!(s, "alt_bids: {}", join(alt));
        }
        if let Some(v) = self.value {
            let _ = writeln!(s, "value: {v}");
        }
        for o in &self.outcomes {
            let _ = writeln!(s, "outcome: {o}");
        }
        s.push_str("realization:\n");
        s.push_str(&self.realization.to_text());
        s
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut agents = Vec::new();
        let mut rounds = Vec::new();
        let mut bids = None;
        let mut alt_bids = None;
        let mut value = None;
        let mut outcomes = Vec::new();
        let mut lines = text.lines();
        let indices = |v: &str| -> Result<Vec<usize>> {
            v.split(',')
                .map(str::trim)
                .filter(|x| !x.is_empty())
                .map(|x| x.parse().map_err(|_| Error::Parse(format!("bad index '{x}'"))))
                .collect()
        };
        let mut rows = Vec::new();
        while let Some(line) = lines.next() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "realization:" {
                rows.extend(lines.by_ref().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')));
                break;
            }
            let (key, val) = line.split_once(':').ok_or_else(|| Error::Parse(format!("bad line '{line}'")))?;
            let val = val.trim();
            match key.trim() {
                "kind" => kind = Some(val.parse::<ViolationKind>()?),
                "agents" => agents = indices(val)?,
                "rounds" => rounds = indices(val)?,
                "bids" => bids = Some(parse_list::<B>(val)?),
                "alt_bids" => alt_bids = Some(parse_list::<B>(val)?),
                "value" => value = Some(B::parse_scalar(val)?),
                "outcome" => outcomes.push(Observed::parse(val)?),
                other => return Err(Error::Parse(format!("unknown key '{other}'"))),
            }
        }
        Ok(Self {
            kind: kind.ok_or_else(|| Error::Parse("missing kind".into()))?,
            agents,
            rounds,
            bids: bids.ok_or_else(|| Error::Parse("missing bids".into()))?,
            alt_bids,
            value,
            realization: Realization::from_rows(&rows)?,
            outcomes,
        })
    }

    fn alt(&self) -> Result<&[B]> {
        self.alt_bids.as_deref().ok_or_else(|| Error::Parse("counterexample lacks alt_bids".into()))
    }

    fn round(&self, n: usize) -> Result<usize> {
        self.rounds.get(n).copied().ok_or_else(|| Error::Parse("counterexample lacks a round".into()))
    }

    fn agent(&self) -> Result<usize> {
        self.agents.first().copied().ok_or_else(|| Error::Parse("counterexample lacks an agent".into()))
    }
}

impl<B: Scalar> fmt::Display for Counterexample<B> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn only_raises<B: Scalar>(bids: &[B], alt: &[B], agent: usize) -> bool {
    bids.len() == alt.len()
        && alt[agent] > bids[agent]
        && bids.iter().zip(alt).enumerate().all(|(j, (a, b))| j == agent || a == b)
}

/// Re-runs an allocation counterexample. `Ok(true)` iff the stored
/// violation is reproduced exactly.
pub fn replay_rule<B, R>(rule: &mut R, ce: &Counterexample<B>) -> Result<bool>
where
    B: Scalar,
    R: AllocationRule<B> + ?Sized,
{
    check_dimensions(rule, &ce.bids, &ce.realization)?;
    let rho = &ce.realization;
    let base = allocations(rule, &ce.bids, rho);
    match ce.kind {
        ViolationKind::Monotonicity => {
            let (t, i, alt) = (ce.round(0)?, ce.agent()?, ce.alt()?);
            let other = allocations(rule, alt, rho);
            let seen = vec![Observed::Agent(base[t]), Observed::Agent(other[t])];
            Ok(only_raises(&ce.bids, alt, i) && base[t] == i && other[t] != i && seen == ce.outcomes)
        }
        ViolationKind::ExplorationSeparation => {
            let (t, t2, alt) = (ce.round(0)?, ce.round(1)?, ce.alt()?);
            let j = base[t];
            let flipped = allocations(rule, &ce.bids, &rho.flipped(j, t));
            let other = allocations(rule, alt, rho);
            let seen = vec![Observed::Agent(base[t]), Observed::Agent(other[t])];
            Ok(t2 > t && flipped[t2] != base[t2] && other[t] != base[t] && ce.agents == [j] && seen == ce.outcomes)
        }
        ViolationKind::WeakSeparation => {
            let (t, t2, i, alt) = (ce.round(0)?, ce.round(1)?, ce.agent()?, ce.alt()?);
            let flipped = allocations(rule, &ce.bids, &rho.flipped(base[t], t));
            let other = allocations(rule, alt, rho);
            let seen = vec![Observed::Agent(base[t]), Observed::Agent(other[t])];
            Ok(t2 > t
                && flipped[t2] != base[t2]
                && (base[t2] == i || flipped[t2] == i)
                && only_raises(&ce.bids, alt, i)
                && other[t] != base[t]
                && seen == ce.outcomes)
        }
        ViolationKind::Truthfulness | ViolationKind::Normalization => {
            Err(Error::Config(format!("{} counterexamples replay against a mechanism", ce.kind.name())))
        }
    }
}

/// Re-runs a truthfulness or normalization counterexample on a
/// deterministic mechanism.
pub fn replay_mechanism<B, M>(mech: &mut M, ce: &Counterexample<B>) -> Result<bool>
where
    B: Scalar,
    M: Mechanism<B> + ?Sized,
{
    let i = ce.agent()?;
    match ce.kind {
        ViolationKind::Truthfulness => {
            let v = ce.value.ok_or_else(|| Error::Parse("truthfulness counterexample lacks value".into()))?;
            let alt = ce.alt()?;
            let utility = |mech: &mut M, bids: &[B]| -> Result<B> {
                let r = mech.run(bids, &ce.realization, 0)?;
                let c = click_allocation(&r.history, bids.len()).clicks[i];
                Ok(v * B::from_count(c) - r.payments[i])
            };
            let u_truth = utility(mech, &ce.bids)?;
            let u_dev = utility(mech, alt)?;
            let seen = vec![Observed::Utility(u_truth), Observed::Utility(u_dev)];
            Ok(ce.bids[i] == v && u_dev > u_truth && seen == ce.outcomes)
        }
        ViolationKind::Normalization => {
            let r = mech.run(&ce.bids, &ce.realization, 0)?;
            let clicks = click_allocation(&r.history, ce.bids.len()).clicks[i];
            let p = r.payments[i];
            let seen = vec![Observed::Payment { payment: p, clicks }];
            Ok((p < B::zero() || p > ce.bids[i] * B::from_count(clicks)) && seen == ce.outcomes)
        }
        _ => Err(Error::Config(format!("{} counterexamples replay against a rule", ce.kind.name()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    #[test]
    fn text_round_trip() {
        let ce = Counterexample {
            kind: ViolationKind::Truthfulness,
            agents: vec![0],
            rounds: vec![],
            bids: vec![Rational::new(3, 2), Rational::from_integer(2)],
            alt_bids: Some(vec![Rational::from_integer(1), Rational::from_integer(2)]),
            value: Some(Rational::new(3, 2)),
            realization: Realization::from_rows(&["0110", "1011"]).unwrap(),
            outcomes: vec![Observed::Utility(Rational::new(-1, 3)), Observed::Utility(Rational::from_integer(0))],
        };
        let text = ce.to_text();
        assert_eq!(Counterexample::<Rational>::parse_text(&text).unwrap(), ce);

        let ce = Counterexample {
            kind: ViolationKind::WeakSeparation,
            agents: vec![1],
            rounds: vec![0, 2],
            bids: vec![0.1 + 0.2, 1.0],
            alt_bids: Some(vec![0.3, 4.0]),
            value: None,
            realization: Realization::from_rows(&["011", "101"]).unwrap(),
            outcomes: vec![Observed::Agent(0), Observed::Agent(1), Observed::Payment { payment: 0.5, clicks: 2 }],
        };
        assert_eq!(Counterexample::<f64>::parse_text(&ce.to_text()).unwrap(), ce);
    }

    #[test]
    fn parse_errors() {
        assert!(Counterexample::<f64>::parse_text("kind: nonsense\n").is_err());
        assert!(Counterexample::<f64>::parse_text("kind: truthfulness\nrealization:\n01\n").is_err());
    }
}
