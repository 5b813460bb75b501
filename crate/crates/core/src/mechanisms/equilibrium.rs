use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{MechanismKind, MechanismSpec};
use crate::domain::{AgentId, ContributionEvent, SocialNetwork};
use crate::error::{Error, Result};
use crate::market::{CostFunction, CostFunctionSpec};

/// Largest equilibrium contribution for an agent with value `theta`.
///
/// `q_at_arrival` is the outstanding security count when the agent arrives;
/// it only matters for market mechanisms and is ignored elsewhere.
pub fn equilibrium_cap(spec: &MechanismSpec, theta: f64, q_at_arrival: Option<f64>) -> Result<f64> {
    if !(theta.is_finite() && theta >= 0.0) {
        return Err(Error::param("theta", "must be finite and nonnegative"));
    }
    let h0 = spec.provision_point();
    let sigma = spec.sigma();
    let kind = spec.kind();
    if !kind.is_sequential() && q_at_arrival.is_some() {
        log::warn!("outstanding securities are ignored for {kind}");
    }
    let market_cap = |cf: &CostFunctionSpec, value: f64| {
        let q = q_at_arrival.unwrap_or(0.0);
        (cf.c0(value + q) - cf.c0(q)).max(0.0)
    };
    Ok(match kind {
        MechanismKind::Ppb => theta,
        MechanismKind::Ppr | MechanismKind::ReppR => {
            let b = spec.budget_or_err("equilibrium_cap")?;
            ((theta - sigma) * h0 / (b + h0)).max(0.0)
        }
        MechanismKind::Pps | MechanismKind::ReppS => {
            market_cap(spec.market_or_err("equilibrium_cap")?, theta - sigma)
        }
    })
}

/// A strategy profile: contribution, timing and referrals per agent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumProfile {
    pub contributions: BTreeMap<AgentId, f64>,
    pub times: BTreeMap<AgentId, f64>,
    pub referrals: BTreeMap<AgentId, BTreeSet<AgentId>>,
}

impl EquilibriumProfile {
    pub fn total(&self) -> f64 {
        self.contributions.values().sum()
    }

    pub fn contribution(&self, id: AgentId) -> f64 {
        self.contributions.get(&id).copied().unwrap_or(0.0)
    }

    /// One event per agent in the profile.
    pub fn to_events(&self) -> Vec<ContributionEvent> {
        self.contributions
            .iter()
            .map(|(&id, &x)| {
                let time = self.times.get(&id).copied().unwrap_or(0.0);
                let referred = self.referrals.get(&id).cloned().unwrap_or_default();
                ContributionEvent::new(id, x, time).referring(referred)
            })
            .collect()
    }
}

/// `n`, the number of agents with positive value, and `d`, the diameter of
/// the graph they span, floored at one so that single-agent supports still
/// yield a meaningful referral bound.
pub fn support_size_and_diameter(network: &SocialNetwork) -> Result<(usize, usize)> {
    Ok((network.valued_count(), network.diameter()?.max(1)))
}

/// Upper bound on σ below which the referral mechanisms keep an equilibrium
/// that funds the project. May be nonpositive.
pub fn sigma_bound(spec: &MechanismSpec, network: &SocialNetwork) -> Result<f64> {
    let (n, d) = support_size_and_diameter(network)?;
    let nd = (n * d) as f64;
    if nd == 0.0 {
        return Err(Error::param("network", "no agent values the project"));
    }
    let value = network.net_value();
    let h0 = spec.provision_point();
    match spec.kind() {
        MechanismKind::ReppR => Ok((value - h0 - spec.budget_or_err("sigma_bound")?) / nd),
        MechanismKind::ReppS => Ok((value - spec.full_funding_securities()?) / nd),
        _ => Err(spec.unsupported("sigma_bound")),
    }
}

fn proportional(caps: &BTreeMap<AgentId, f64>, h0: f64) -> Option<BTreeMap<AgentId, f64>> {
    let total: f64 = caps.values().sum();
    if !(total >= h0) {
        return None;
    }
    Some(caps.iter().map(|(&id, &c)| (id, c * h0 / total)).collect())
}

/// Canonical equilibrium for the network, or `None` when the existence
/// condition fails or the valued agents are not connected.
///
/// Simultaneous mechanisms split h⁰ in proportion to the caps. Market
/// mechanisms fill greedily in arrival order, each agent contributing its cap
/// at the current security count or whatever remains.
pub fn equilibrium_profile(spec: &MechanismSpec, network: &SocialNetwork) -> Result<Option<EquilibriumProfile>> {
    let Ok((n, _)) = support_size_and_diameter(network) else {
        return Ok(None);
    };
    if n == 0 {
        return Ok(None);
    }
    let kind = spec.kind();
    let h0 = spec.provision_point();
    let value = network.net_value();

    let exists = match kind {
        MechanismKind::Ppb => value >= h0,
        MechanismKind::Ppr => spec.budget_or_err("equilibrium_profile")? <= value - h0,
        MechanismKind::Pps => value > spec.full_funding_securities()?,
        MechanismKind::ReppR | MechanismKind::ReppS => spec.sigma() < sigma_bound(spec, network)?,
    };
    if !exists {
        return Ok(None);
    }

    let contributions = if kind.is_sequential() {
        let cf = spec.market_or_err("equilibrium_profile")?;
        let mut order: Vec<_> = network.agents().collect();
        order.sort_by(|a, b| a.arrival.total_cmp(&b.arrival).then(a.id.cmp(&b.id)));
        let mut remaining = h0;
        let mut q = 0.0;
        let mut out = BTreeMap::new();
        for a in order {
            let cap = equilibrium_cap(spec, a.theta, Some(q))?;
            let x = cap.min(remaining.max(0.0));
            remaining -= x;
            q += crate::market::securities_for(cf, q, x)?;
            out.insert(a.id, x);
        }
        if remaining > crate::FUNDING_TOLERANCE * h0.max(1.0) {
            return Ok(None);
        }
        out
    } else {
        let caps = network
            .agents()
            .map(|a| Ok((a.id, equilibrium_cap(spec, a.theta, None)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        match proportional(&caps, h0) {
            Some(x) => x,
            None => return Ok(None),
        }
    };

    let times = network.agents().map(|a| (a.id, a.arrival)).collect();
    let referrals = network
        .agents()
        .map(|a| {
            let refs = if kind.has_referrals() {
                a.neighbors.clone()
            } else {
                BTreeSet::new()
            };
            (a.id, refs)
        })
        .collect();
    Ok(Some(EquilibriumProfile {
        contributions,
        times,
        referrals,
    }))
}

/// Whose value is compared against the desirability threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentSet {
    /// Agents that are aware of the project without referrals.
    #[serde(rename = "M∩N")]
    AwareValued,
    /// Every agent that values the project.
    #[serde(rename = "N")]
    Valued,
}

impl fmt::Display for AgentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentSet::AwareValued => "M∩N",
            AgentSet::Valued => "N",
        })
    }
}

/// Whether a set of agents values the project strictly above `tau`.
pub fn socially_desirable(thetas: impl IntoIterator<Item = f64>, tau: f64) -> bool {
    thetas.into_iter().sum::<f64>() > tau
}

/// The set and cost above which the mechanism funds the project in
/// equilibrium.
pub fn desirability_threshold(spec: &MechanismSpec, n: usize, d: usize) -> Result<(AgentSet, f64)> {
    let h0 = spec.provision_point();
    let nd_sigma = (n * d) as f64 * spec.sigma();
    match spec.kind() {
        MechanismKind::Ppb => Err(spec.unsupported("desirability_threshold")),
        MechanismKind::Ppr => Ok((AgentSet::AwareValued, h0 + spec.budget_or_err("desirability_threshold")?)),
        MechanismKind::ReppR => Ok((
            AgentSet::Valued,
            h0 + spec.budget_or_err("desirability_threshold")? + nd_sigma,
        )),
        MechanismKind::Pps => Ok((AgentSet::AwareValued, spec.full_funding_securities()?)),
        MechanismKind::ReppS => Ok((AgentSet::Valued, spec.full_funding_securities()? + nd_sigma)),
    }
}

/// The simplified LMSR threshold `h⁰ + b·ln 2`, plus `ndσ` with referrals.
pub fn desirability_threshold_lmsr(spec: &MechanismSpec, n: usize, d: usize) -> Result<(AgentSet, f64)> {
    let b = match spec.market() {
        Some(CostFunctionSpec::Lmsr { b }) => b.b(),
        None => return Err(spec.unsupported("desirability_threshold_lmsr")),
    };
    let base = spec.provision_point() + b * std::f64::consts::LN_2;
    match spec.kind() {
        MechanismKind::Pps => Ok((AgentSet::AwareValued, base)),
        MechanismKind::ReppS => Ok((AgentSet::Valued, base + (n * d) as f64 * spec.sigma())),
        _ => Err(spec.unsupported("desirability_threshold_lmsr")),
    }
}
