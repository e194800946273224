//! Sparse multivariate polynomials in the CTR variables `mu_0 .. mu_{k-1}`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::StepValue;
use crate::scalar::{Rational, Scalar};

/// Exponent vector of a monomial.
pub type Exponents = Vec<u32>;

#[derive(Clone, PartialEq)]
pub struct CtrPolynomial<C: Scalar = Rational> {
    agents: usize,
    terms: BTreeMap<Exponents, C>,
}

impl<C: Scalar> CtrPolynomial<C> {
    pub fn zero(agents: usize) -> Self {
        Self { agents, terms: BTreeMap::new() }
    }

    pub fn constant(agents: usize, c: C) -> Self {
        let mut p = Self::zero(agents);
        p.add_term(vec![0; agents], c);
        p
    }

    pub fn one(agents: usize) -> Self {
        Self::constant(agents, C::one())
    }

    /// `mu_agent`.
    pub fn variable(agents: usize, agent: usize) -> Self {
        Self::monomial(agents, agent_exponents(agents, agent), C::one())
    }

    pub fn monomial(agents: usize, exponents: Exponents, c: C) -> Self {
        assert_eq!(exponents.len(), agents, "exponent vector length");
        let mut p = Self::zero(agents);
        p.add_term(exponents, c);
        p
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &C)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, exponents: &[u32]) -> C {
        self.terms.get(exponents).copied().unwrap_or_else(C::zero)
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    fn add_term(&mut self, exponents: Exponents, c: C) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(exponents);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_assign_scaled(other, C::one());
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_assign_scaled(other, -C::one());
        out
    }

    pub fn add_assign_scaled(&mut self, other: &Self, w: C) {
        assert_eq!(self.agents, other.agents, "polynomials over different agent counts");
        for (e, &c) in &other.terms {
            self.add_term(e.clone(), c * w);
        }
    }

    pub fn scale(&self, w: C) -> Self {
        let mut out = Self::zero(self.agents);
        out.add_assign_scaled(self, w);
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.agents, other.agents, "polynomials over different agent counts");
        let mut out = Self::zero(self.agents);
        for (e1, &c1) in &self.terms {
            for (e2, &c2) in &other.terms {
                let e: Exponents = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.add_term(e, c1 * c2);
            }
        }
        out
    }

    /// Multiplies by `mu_agent` (click) or `1 - mu_agent` (no click).
    pub fn mul_click_factor(&self, agent: usize, click: bool) -> Self {
        let up = |e: &Exponents| {
            let mut e = e.clone();
            e[agent] += 1;
            e
        };
        let mut out = Self::zero(self.agents);
        for (e, &c) in &self.terms {
            if click {
                out.add_term(up(e), c);
            } else {
                out.add_term(e.clone(), c);
                out.add_term(up(e), -c);
            }
        }
        out
    }

    pub fn eval(&self, mu: &[C]) -> C {
        self.terms
            .iter()
            .map(|(e, &c)| e.iter().zip(mu).fold(c, |acc, (&a, &m)| (0..a).fold(acc, |acc, _| acc * m)))
            .fold(C::zero(), |a, b| a + b)
    }

    pub fn eval_f64(&self, mu: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| e.iter().zip(mu).fold(c.to_f64(), |acc, (&a, &m)| acc * m.powi(a as i32)))
            .sum()
    }
}

pub fn agent_exponents(agents: usize, agent: usize) -> Exponents {
    let mut e = vec![0; agents];
    e[agent] = 1;
    e
}

impl<C: Scalar> StepValue<C> for CtrPolynomial<C> {
    fn zero_like(&self) -> Self {
        Self::zero(self.agents)
    }
    fn add_scaled(&mut self, other: &Self, weight: C) {
        self.add_assign_scaled(other, weight);
    }
}

impl<C: Scalar> fmt::Display for CtrPolynomial<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (n, (e, c)) in self.terms.iter().enumerate() {
            if n > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{c}")?;
            for (i, &a) in e.iter().enumerate() {
                match a {
                    0 => {}
                    1 => write!(f, "*mu{i}")?,
                    _ => write!(f, "*mu{i}^{a}")?,
                }
            }
        }
        Ok(())
    }
}

impl<C: Scalar> fmt::Debug for CtrPolynomial<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CtrPolynomial({self})")
    }
}

/// Serialized monomial: coefficient `numer / denom`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyRecord {
    pub exponents: Exponents,
    pub numer: i64,
    pub denom: i64,
}

impl CtrPolynomial<Rational> {
    pub fn to_records(&self) -> Vec<PolyRecord> {
        self.terms
            .iter()
            .map(|(e, c)| PolyRecord { exponents: e.clone(), numer: *c.numer(), denom: *c.denom() })
            .collect()
    }

    pub fn from_records(agents: usize, records: &[PolyRecord]) -> Result<Self> {
        let mut p = Self::zero(agents);
        for r in records {
            if r.exponents.len() != agents {
                return Err(Error::dim("exponent vector", agents, r.exponents.len()));
            }
            if r.denom == 0 {
                return Err(Error::Parse("zero denominator in polynomial record".into()));
            }
            p.add_term(r.exponents.clone(), Rational::new(r.numer, r.denom));
        }
        Ok(p)
    }
}

/// Float coefficients serialize as `(exponents, value, 1)` with the value
/// kept as a float.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloatPolyRecord {
    pub exponents: Exponents,
    pub numer: f64,
    pub denom: i64,
}

impl CtrPolynomial<f64> {
    pub fn to_records(&self) -> Vec<FloatPolyRecord> {
        self.terms.iter().map(|(e, &c)| FloatPolyRecord { exponents: e.clone(), numer: c, denom: 1 }).collect()
    }
}
