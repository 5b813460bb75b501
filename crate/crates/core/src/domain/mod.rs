//! Core data model: agents, projects, the acquaintance network, contribution
//! events and the referral forest they induce.

mod forest;
mod network;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use forest::{build_referral_forest, ReferralForest};
pub use network::{NetworkDoc, SocialNetwork};

/// Agent identifier. Id 0 is reserved for the sponsor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

/// The sponsor: root of every referral forest, never an agent of the game.
pub const SPONSOR: AgentId = AgentId(0);

impl AgentId {
    pub fn is_sponsor(self) -> bool {
        self == SPONSOR
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for AgentId {
    fn from(v: u32) -> Self {
        AgentId(v)
    }
}

/// An agent's private value θᵢ, arrival time aᵢ and neighbor set Nᵢ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentProfile {
    pub id: AgentId,
    pub theta: f64,
    #[serde(default)]
    pub arrival: f64,
    #[serde(default)]
    pub neighbors: BTreeSet<AgentId>,
}

impl AgentProfile {
    pub fn new(id: impl Into<AgentId>, theta: f64, arrival: f64) -> Self {
        AgentProfile {
            id: id.into(),
            theta,
            arrival,
            neighbors: BTreeSet::new(),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidAgent {
            agent: self.id,
            reason: reason.to_string(),
        };
        if self.id.is_sponsor() {
            return Err(bad("id 0 is reserved for the sponsor"));
        }
        if !(self.theta.is_finite() && self.theta >= 0.0) {
            return Err(bad("theta must be finite and nonnegative"));
        }
        if !(self.arrival.is_finite() && self.arrival >= 0.0) {
            return Err(bad("arrival must be finite and nonnegative"));
        }
        if self.neighbors.contains(&self.id) {
            return Err(bad("self-edges are not allowed"));
        }
        Ok(())
    }
}

/// Provision point h⁰ and deadline T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectSpec {
    pub provision_point: f64,
    pub deadline: f64,
}

impl ProjectSpec {
    pub fn new(provision_point: f64, deadline: f64) -> Result<Self> {
        if !(provision_point.is_finite() && provision_point > 0.0) {
            return Err(Error::param("h0", "provision point must be positive"));
        }
        if !(deadline.is_finite() && deadline > 0.0) {
            return Err(Error::param("T", "deadline must be positive"));
        }
        Ok(ProjectSpec {
            provision_point,
            deadline,
        })
    }
}

/// One agent's single action: contribute `amount` at `time` and refer
/// `referred`. Referrals take effect at `referral_time` when given, otherwise
/// at the contribution time. An event with amount 0 still registers referrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContributionEvent {
    pub agent: AgentId,
    pub amount: f64,
    pub time: f64,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub referred: BTreeSet<AgentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub referral_time: Option<f64>,
}

impl ContributionEvent {
    pub fn new(agent: impl Into<AgentId>, amount: f64, time: f64) -> Self {
        ContributionEvent {
            agent: agent.into(),
            amount,
            time,
            referred: BTreeSet::new(),
            referral_time: None,
        }
    }

    pub fn referring<I, A>(mut self, referred: I) -> Self
    where
        I: IntoIterator<Item = A>,
        A: Into<AgentId>,
    {
        self.referred = referred.into_iter().map(Into::into).collect();
        self
    }

    pub fn effective_referral_time(&self) -> f64 {
        self.referral_time.unwrap_or(self.time)
    }
}

/// ϑ: the summed value of a set of agents.
pub fn net_value<'a>(agents: impl IntoIterator<Item = &'a AgentProfile>) -> f64 {
    agents.into_iter().map(|a| a.theta).sum()
}

/// Checks events against the population and the project: known agents, one
/// event per agent, nonnegative amounts, `arrival ≤ time ≤ T`, referrals only
/// to neighbors.
pub fn validate_events(
    network: &SocialNetwork,
    project: &ProjectSpec,
    events: &[ContributionEvent],
) -> Result<()> {
    let mut seen = BTreeMap::new();
    for e in events {
        let agent = network.agent(e.agent).ok_or(Error::UnknownAgent(e.agent))?;
        if seen.insert(e.agent, ()).is_some() {
            return Err(Error::InvalidEvent {
                agent: e.agent,
                reason: "agents contribute at most once".into(),
            });
        }
        if !(e.amount.is_finite() && e.amount >= 0.0) {
            return Err(Error::NegativeContribution(e.amount));
        }
        if !e.time.is_finite() || e.time < agent.arrival {
            return Err(Error::InvalidEvent {
                agent: e.agent,
                reason: format!("time {} precedes arrival {}", e.time, agent.arrival),
            });
        }
        if e.time > project.deadline {
            return Err(Error::AfterDeadline {
                agent: e.agent,
                time: e.time,
                deadline: project.deadline,
            });
        }
        if let Some(stray) = e.referred.iter().find(|j| !agent.neighbors.contains(j)) {
            return Err(Error::InvalidEvent {
                agent: e.agent,
                reason: format!("referred agent {stray} is not a neighbor"),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn net_value_sums_subsets() {
        let agents: Vec<_> = [1.0, 1.0, 1.0]
            .iter()
            .enumerate()
            .map(|(i, &t)| AgentProfile::new(i as u32 + 1, t, 0.0))
            .collect();
        assert_eq!(net_value(&agents), 3.0);
        assert_eq!(net_value(&agents[..2]), 2.0);
        assert_eq!(net_value(&[]), 0.0);
        let pair = [AgentProfile::new(1, 3.0, 0.0), AgentProfile::new(2, 3.0, 0.0)];
        assert_eq!(net_value(&pair), 6.0);
    }

    #[test]
    fn project_rejects_nonpositive_parameters() {
        assert!(ProjectSpec::new(0.0, 1.0).is_err());
        assert!(ProjectSpec::new(4.0, 0.0).is_err());
        assert!(ProjectSpec::new(4.0, 1.0).is_ok());
    }

    #[test]
    fn event_validation() {
        let net = SocialNetwork::path(&[1.0, 1.0, 1.0]).unwrap();
        let project = ProjectSpec::new(2.0, 5.0).unwrap();
        let ok = [ContributionEvent::new(2, 0.5, 1.0).referring([1, 3])];
        validate_events(&net, &project, &ok).unwrap();

        let not_neighbor = [ContributionEvent::new(1, 0.5, 1.0).referring([3])];
        assert!(validate_events(&net, &project, &not_neighbor).is_err());

        let late = [ContributionEvent::new(1, 0.5, 6.0)];
        assert!(matches!(
            validate_events(&net, &project, &late),
            Err(Error::AfterDeadline { .. })
        ));

        let twice = [
            ContributionEvent::new(1, 0.5, 1.0),
            ContributionEvent::new(1, 0.5, 2.0),
        ];
        assert!(validate_events(&net, &project, &twice).is_err());

        let negative = [ContributionEvent::new(1, -0.5, 1.0)];
        assert!(matches!(
            validate_events(&net, &project, &negative),
            Err(Error::NegativeContribution(_))
        ));
    }
}
