use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MechanismKind, MechanismSpec};
use crate::domain::{validate_events, AgentId, ContributionEvent, ReferralForest, SocialNetwork};
use crate::error::{Error, Result};
use crate::market::securities_for;
use crate::rbf::ReferralBonus;
use crate::FUNDING_TOLERANCE;

/// What one agent put in and what it would receive if the project fails.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentAllocation {
    pub offered: f64,
    /// The offer after truncation at the remaining amount.
    pub accepted: f64,
    pub securities_refund: f64,
    pub securities_referral: f64,
    /// Payout beyond the refund in the unfunded outcome.
    pub refund_bonus: f64,
    pub referral_bonus: f64,
}

impl AgentAllocation {
    /// Utility if the project is not funded.
    pub fn unfunded_payoff(&self) -> f64 {
        self.refund_bonus + self.referral_bonus
    }
}

/// Outcome-independent bookkeeping of a set of events: amounts accepted and
/// bonuses owed should the provision point be missed.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub funded: bool,
    /// χ.
    pub raised: f64,
    pub outstanding_securities: f64,
    pub agents: BTreeMap<AgentId, AgentAllocation>,
}

impl Allocation {
    pub fn agent(&self, id: AgentId) -> AgentAllocation {
        self.agents.get(&id).copied().unwrap_or_default()
    }

    pub fn utility(&self, id: AgentId, theta: f64, funded: bool) -> f64 {
        let a = self.agent(id);
        if funded {
            theta - a.accepted
        } else {
            a.unfunded_payoff()
        }
    }
}

/// Processes events in time order (ties keep slice order) and computes the
/// allocation. Sequential mechanisms stop accepting money once h⁰ is reached.
pub fn allocate(
    spec: &MechanismSpec,
    events: &[ContributionEvent],
    forest: &ReferralForest,
) -> Result<Allocation> {
    let h0 = spec.provision_point();
    for e in events {
        if !(e.amount.is_finite() && e.amount >= 0.0) {
            return Err(Error::NegativeContribution(e.amount));
        }
        if !e.time.is_finite() || e.time > spec.deadline() {
            return Err(Error::AfterDeadline {
                agent: e.agent,
                time: e.time,
                deadline: spec.deadline(),
            });
        }
    }

    let mut order: Vec<&ContributionEvent> = events.iter().collect();
    order.sort_by(|a, b| a.time.total_cmp(&b.time));

    let kind = spec.kind();
    let mut agents = BTreeMap::new();
    let mut remaining = h0;
    let mut q = 0.0;
    for e in order {
        let accepted = if kind.is_sequential() {
            e.amount.min(remaining.max(0.0))
        } else {
            e.amount
        };
        remaining -= accepted;
        let securities_refund = match spec.market() {
            Some(cf) => {
                let r = securities_for(cf, q, accepted)?;
                q += r;
                r
            }
            None => 0.0,
        };
        let previous = agents.insert(
            e.agent,
            AgentAllocation {
                offered: e.amount,
                accepted,
                securities_refund,
                ..Default::default()
            },
        );
        if previous.is_some() {
            return Err(Error::InvalidEvent {
                agent: e.agent,
                reason: "agents contribute at most once".into(),
            });
        }
    }

    let raised: f64 = agents.values().map(|a| a.accepted).sum();
    let funded = raised >= h0 - FUNDING_TOLERANCE * h0.max(1.0);

    let ids: Vec<AgentId> = agents.keys().copied().collect();
    for id in &ids {
        let referred_mass: f64 = forest
            .children(*id)
            .filter_map(|c| agents.get(&c))
            .map(|c| match kind {
                MechanismKind::ReppS => c.securities_refund,
                _ => c.accepted,
            })
            .sum();
        let a = agents.get_mut(id).expect("id taken from the map");
        a.refund_bonus = match kind {
            MechanismKind::Ppb => 0.0,
            MechanismKind::Ppr | MechanismKind::ReppR => {
                let budget = spec.budget_or_err("refund bonus")?;
                if raised > 0.0 {
                    a.accepted / raised * budget
                } else {
                    0.0
                }
            }
            MechanismKind::Pps | MechanismKind::ReppS => a.securities_refund - a.accepted,
        };
        if let Some(rbf) = spec.rbf() {
            let bonus = rbf.bonus(referred_mass);
            a.referral_bonus = bonus;
            if kind == MechanismKind::ReppS {
                a.securities_referral = bonus;
            }
        }
    }

    let outstanding_securities = agents
        .values()
        .map(|a| a.securities_refund + a.securities_referral)
        .sum();
    Ok(Allocation {
        funded,
        raised,
        outstanding_securities,
        agents,
    })
}

/// One agent's line in the settlement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentSettlement {
    pub offered: f64,
    pub contributed: f64,
    pub collected: f64,
    pub refunded: f64,
    pub refund_bonus: f64,
    pub referral_bonus: f64,
    pub securities_refund: f64,
    pub securities_referral: f64,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementReport {
    pub kind: MechanismKind,
    pub funded: bool,
    /// χ at the deadline.
    pub raised: f64,
    /// Bonuses the sponsor pays out; zero when funded.
    pub sponsor_outlay: f64,
    pub outstanding_securities: f64,
    pub agents: BTreeMap<AgentId, AgentSettlement>,
}

impl SettlementReport {
    pub fn agent(&self, id: AgentId) -> Option<&AgentSettlement> {
        self.agents.get(&id)
    }

    pub fn total_refund_bonus(&self) -> f64 {
        self.agents.values().map(|a| a.refund_bonus).sum()
    }

    pub fn total_referral_bonus(&self) -> f64 {
        self.agents.values().map(|a| a.referral_bonus).sum()
    }
}

/// Settles a finished run at the deadline for every agent in the network.
pub fn settle(
    spec: &MechanismSpec,
    network: &SocialNetwork,
    events: &[ContributionEvent],
    forest: &ReferralForest,
) -> Result<SettlementReport> {
    validate_events(network, &spec.project(), events)?;
    let alloc = allocate(spec, events, forest)?;
    let funded = alloc.funded;
    let agents: BTreeMap<AgentId, AgentSettlement> = network
        .agents()
        .map(|profile| {
            let a = alloc.agent(profile.id);
            let (refund_bonus, referral_bonus) = if funded {
                (0.0, 0.0)
            } else {
                (a.refund_bonus, a.referral_bonus)
            };
            let line = AgentSettlement {
                offered: a.offered,
                contributed: a.accepted,
                collected: if funded { a.accepted } else { 0.0 },
                refunded: if funded { 0.0 } else { a.accepted },
                refund_bonus,
                referral_bonus,
                securities_refund: a.securities_refund,
                securities_referral: a.securities_referral,
                utility: alloc.utility(profile.id, profile.theta, funded),
            };
            (profile.id, line)
        })
        .collect();
    let sponsor_outlay = agents
        .values()
        .map(|a| a.refund_bonus + a.referral_bonus)
        .sum();
    Ok(SettlementReport {
        kind: spec.kind(),
        funded,
        raised: alloc.raised,
        sponsor_outlay,
        outstanding_securities: alloc.outstanding_securities,
        agents,
    })
}

/// Utility of `agent` with value `theta` in the requested outcome.
pub fn utility(
    spec: &MechanismSpec,
    theta: f64,
    events: &[ContributionEvent],
    forest: &ReferralForest,
    agent: AgentId,
    funded: bool,
) -> Result<f64> {
    Ok(allocate(spec, events, forest)?.utility(agent, theta, funded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_referral_forest, AgentProfile, ProjectSpec};
    use crate::market::CostFunctionSpec;
    use crate::rbf::RbfSpec;
    use approx::assert_abs_diff_eq;

    fn project() -> ProjectSpec {
        ProjectSpec::new(4.0, 10.0).unwrap()
    }

    fn pair() -> SocialNetwork {
        SocialNetwork::complete(&[3.0, 3.0]).unwrap()
    }

    fn run(spec: &MechanismSpec, net: &SocialNetwork, events: &[ContributionEvent]) -> SettlementReport {
        let forest = build_referral_forest(events).unwrap();
        settle(spec, net, events, &forest).unwrap()
    }

    #[test]
    fn exactly_funded() {
        let spec = MechanismSpec::ppr(project(), 1.0).unwrap();
        let events = [ContributionEvent::new(1, 2.0, 0.0), ContributionEvent::new(2, 2.0, 0.0)];
        let report = run(&spec, &pair(), &events);
        assert!(report.funded);
        assert_eq!(report.sponsor_outlay, 0.0);
        for a in report.agents.values() {
            assert_eq!(a.collected, 2.0);
            assert_eq!(a.refund_bonus, 0.0);
            assert_eq!(a.utility, 1.0);
        }
    }

    #[test]
    fn ppb_funded_utility() {
        let spec = MechanismSpec::ppb(project());
        let events = [ContributionEvent::new(1, 2.0, 0.0), ContributionEvent::new(2, 2.0, 0.0)];
        let forest = build_referral_forest(&events).unwrap();
        assert_eq!(utility(&spec, 3.0, &events, &forest, AgentId(1), true).unwrap(), 1.0);
        assert_eq!(utility(&spec, 3.0, &events, &forest, AgentId(1), false).unwrap(), 0.0);
    }

    #[test]
    fn repp_r_unfunded_bonuses() {
        let spec = MechanismSpec::repp_r(project(), 1.0, RbfSpec::tanh(1.0).unwrap()).unwrap();
        let events = [
            ContributionEvent::new(1, 1.0, 0.0).referring([2]),
            ContributionEvent::new(2, 1.0, 1.0),
        ];
        let report = run(&spec, &pair(), &events);
        assert!(!report.funded);
        let a1 = report.agent(AgentId(1)).unwrap();
        let a2 = report.agent(AgentId(2)).unwrap();
        assert_eq!(a1.refunded, 1.0);
        assert_eq!(a1.refund_bonus, 0.5);
        assert_abs_diff_eq!(a1.utility, 1.261_594_155_955_765, epsilon = 1e-12);
        assert_eq!(a2.utility, 0.5);
        assert_eq!(report.total_refund_bonus(), 1.0);
    }

    #[test]
    fn zero_raised_pays_no_refund_bonus() {
        let spec = MechanismSpec::ppr(project(), 1.0).unwrap();
        let events = [ContributionEvent::new(1, 0.0, 0.0)];
        let report = run(&spec, &pair(), &events);
        assert_eq!(report.sponsor_outlay, 0.0);
        assert_eq!(report.agent(AgentId(1)).unwrap().utility, 0.0);
    }

    #[test]
    fn repp_s_single_agent() {
        let lmsr = CostFunctionSpec::lmsr(1.0).unwrap();
        let spec = MechanismSpec::repp_s(project(), lmsr, RbfSpec::tanh(0.4).unwrap()).unwrap();
        let report = run(&spec, &pair(), &[ContributionEvent::new(1, 1.0, 0.0)]);
        let a1 = report.agent(AgentId(1)).unwrap();
        assert_abs_diff_eq!(a1.utility, 0.489_880_125_644_75, epsilon = 1e-12);
        assert_eq!(a1.referral_bonus, 0.0);
    }

    #[test]
    fn pps_early_contribution_earns_more() {
        let spec = MechanismSpec::pps(project(), CostFunctionSpec::lmsr(1.0).unwrap()).unwrap();
        let events = [ContributionEvent::new(2, 1.0, 1.0), ContributionEvent::new(1, 1.0, 0.0)];
        let report = run(&spec, &pair(), &events);
        let r1 = report.agent(AgentId(1)).unwrap().securities_refund;
        let r2 = report.agent(AgentId(2)).unwrap().securities_refund;
        assert_abs_diff_eq!(r1, 1.489_880_125_644_75, epsilon = 1e-12);
        assert_abs_diff_eq!(r2, 1.133_201_134_754_914, epsilon = 1e-12);
        assert_abs_diff_eq!(report.outstanding_securities, r1 + r2, epsilon = 1e-15);
        assert_abs_diff_eq!(report.sponsor_outlay, r1 + r2 - 2.0, epsilon = 1e-12);
    }

    #[test]
    fn sequential_mechanisms_truncate_at_provision_point() {
        let spec = MechanismSpec::pps(project(), CostFunctionSpec::lmsr(1.0).unwrap()).unwrap();
        let events = [ContributionEvent::new(1, 3.0, 0.0), ContributionEvent::new(2, 3.0, 1.0)];
        let report = run(&spec, &pair(), &events);
        assert!(report.funded);
        assert_eq!(report.raised, 4.0);
        let a2 = report.agent(AgentId(2)).unwrap();
        assert_eq!((a2.offered, a2.contributed, a2.utility), (3.0, 1.0, 2.0));

        let ppr = MechanismSpec::ppr(project(), 1.0).unwrap();
        assert_eq!(run(&ppr, &pair(), &events).raised, 6.0);
    }

    #[test]
    fn late_and_unknown_events_rejected() {
        let spec = MechanismSpec::ppb(project());
        let forest = ReferralForest::default();
        let late = [ContributionEvent::new(1, 1.0, 11.0)];
        assert!(matches!(
            settle(&spec, &pair(), &late, &forest),
            Err(Error::AfterDeadline { .. })
        ));
        let stranger = [ContributionEvent::new(9, 1.0, 1.0)];
        assert_eq!(
            settle(&spec, &pair(), &stranger, &forest),
            Err(Error::UnknownAgent(AgentId(9)))
        );
    }

    #[test]
    fn non_actors_appear_with_zero_lines() {
        let net = SocialNetwork::new(vec![
            AgentProfile::new(1, 3.0, 0.0),
            AgentProfile::new(2, 1.0, 0.0),
            AgentProfile::new(3, 0.0, 0.0),
        ])
        .unwrap();
        let spec = MechanismSpec::ppb(project());
        let report = run(&spec, &net, &[ContributionEvent::new(1, 4.0, 0.0)]);
        assert_eq!(report.agents.len(), 3);
        assert_eq!(report.agent(AgentId(2)).unwrap().utility, 1.0);
        assert_eq!(report.agent(AgentId(3)).unwrap().utility, 0.0);
    }
}
