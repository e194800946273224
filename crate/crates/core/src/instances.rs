//! Constructors for the lower-bound instance families and delta-gap
//! instances used by the experiments.

use crate::error::{Error, Result};
use crate::types::{BidProfile, StochasticInstance};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LowerBoundKind {
    /// CTR `1/2 + eps` for the distinguished agent, `1/2` elsewhere, all bids `v_max`.
    Boosted,
    /// All CTRs `1/2`; the distinguished agent bids `v_max`, everyone else `v_max / 2`.
    Favoured,
}

impl LowerBoundKind {
    pub fn label(self, agent: usize) -> String {
        match self {
            LowerBoundKind::Boosted => format!("I_{agent}"),
            LowerBoundKind::Favoured => format!("J_{agent}"),
        }
    }
}

/// `eps = k^(1/3) T^(-1/3)`.
pub fn lower_bound_epsilon(agents: usize, horizon: usize) -> f64 {
    (agents as f64).cbrt() / (horizon as f64).cbrt()
}

pub fn make_lower_bound_instance(
    kind: LowerBoundKind,
    agent: usize,
    agents: usize,
    horizon: usize,
    v_max: f64,
) -> Result<StochasticInstance> {
    if agent >= agents {
        return Err(Error::InvalidInstance(format!("agent {agent} out of range for k={agents}")));
    }
    if horizon == 0 {
        return Err(Error::InvalidInstance("horizon must be positive".into()));
    }
    let eps = lower_bound_epsilon(agents, horizon);
    if 0.5 + eps > 1.0 {
        return Err(Error::InvalidInstance(format!(
            "eps = {eps} exceeds 1/2 for k={agents}, T={horizon}"
        )));
    }
    let (ctrs, values) = match kind {
        LowerBoundKind::Boosted => {
            let mut ctrs = vec![0.5; agents];
            ctrs[agent] = 0.5 + eps;
            (ctrs, vec![v_max; agents])
        }
        LowerBoundKind::Favoured => {
            let mut values = vec![v_max / 2.0; agents];
            values[agent] = v_max;
            (vec![0.5; agents], values)
        }
    };
    let bids = BidProfile::new(values.clone())?;
    StochasticInstance::new(horizon, ctrs, values, bids, v_max)
}

/// The `2k` instances `{I_i, J_i}` with their labels.
pub fn lower_bound_family(agents: usize, horizon: usize, v_max: f64) -> Result<Vec<(String, StochasticInstance)>> {
    let mut out = Vec::with_capacity(2 * agents);
    for kind in [LowerBoundKind::Boosted, LowerBoundKind::Favoured] {
        for i in 0..agents {
            out.push((kind.label(i), make_lower_bound_instance(kind, i, agents, horizon, v_max)?));
        }
    }
    Ok(out)
}

/// Instance with `mu_0 v_0 - mu_1 v_1 = delta * v_max`: all values `v_max`,
/// `mu_0 = 1/2 + delta`, every other CTR `1/2`.
pub fn make_delta_gap_instance(delta: f64, agents: usize, horizon: usize, v_max: f64) -> Result<StochasticInstance> {
    if !(delta > 0.0 && delta <= 0.25) {
        return Err(Error::InvalidInstance(format!("delta = {delta} outside (0, 1/4]")));
    }
    if agents < 2 {
        return Err(Error::InvalidInstance("delta-gap instance needs two agents".into()));
    }
    let mut ctrs = vec![0.5; agents];
    ctrs[0] = 0.5 + delta;
    StochasticInstance::truthful(horizon, ctrs, vec![v_max; agents], v_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boosted_instance_for_two_agents() {
        let inst = make_lower_bound_instance(LowerBoundKind::Boosted, 0, 2, 1000, 1.0).unwrap();
        let eps = 2f64.cbrt() / 10.0;
        assert!((eps - 0.125_992_1).abs() < 1e-6);
        assert!((inst.ctrs[0] - (0.5 + eps)).abs() < 1e-12);
        assert!((inst.ctrs[0] - 0.626).abs() < 1e-3);
        assert_eq!(inst.ctrs[1], 0.5);
        assert_eq!(inst.values, vec![1.0, 1.0]);
        assert_eq!(inst.bids.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn favoured_instance() {
        let inst = make_lower_bound_instance(LowerBoundKind::Favoured, 1, 2, 1000, 1.0).unwrap();
        assert_eq!(inst.ctrs, vec![0.5, 0.5]);
        assert_eq!(inst.values, vec![0.5, 1.0]);
        assert_eq!(inst.bids.as_slice(), &[0.5, 1.0]);
    }

    #[test]
    fn epsilon_too_large() {
        assert!(make_lower_bound_instance(LowerBoundKind::Boosted, 0, 8, 8, 1.0).is_err());
        assert!(make_lower_bound_instance(LowerBoundKind::Boosted, 2, 2, 1000, 1.0).is_err());
    }

    #[test]
    fn delta_gap_identity() {
        let inst = make_delta_gap_instance(0.25, 2, 100, 1.0).unwrap();
        assert_eq!(inst.ctrs, vec![0.75, 0.5]);
        let gap = inst.welfare_rate(0) - inst.welfare_rate(1);
        assert!((gap - 0.25).abs() < 1e-15);

        let inst = make_delta_gap_instance(0.1, 3, 100, 1.0).unwrap();
        assert!((inst.ctrs[0] - 0.6).abs() < 1e-15);
        assert_eq!(&inst.ctrs[1..], &[0.5, 0.5]);

        assert!(make_delta_gap_instance(0.0, 2, 10, 1.0).is_err());
        assert!(make_delta_gap_instance(0.3, 2, 10, 1.0).is_err());
    }

    #[test]
    fn family_has_two_k_members() {
        let fam = lower_bound_family(3, 1000, 2.0).unwrap();
        assert_eq!(fam.len(), 6);
        assert_eq!(fam[0].0, "I_0");
        assert_eq!(fam[5].0, "J_2");
    }
}
