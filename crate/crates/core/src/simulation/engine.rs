use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::{RunConfig, Strategy};
use crate::domain::{build_referral_forest, AgentId, ContributionEvent, SocialNetwork};
use crate::error::{Error, Result};
use crate::market::securities_for;
use crate::mechanisms::{equilibrium_cap, equilibrium_profile, settle, EquilibriumProfile, MechanismKind, MechanismSpec, SettlementReport};

/// One executed action with the state around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub agent: AgentId,
    pub time: f64,
    pub offered: f64,
    pub accepted: f64,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub referred: BTreeSet<AgentId>,
    /// hᵗ just before and after the action.
    pub remaining_before: f64,
    pub remaining_after: f64,
    /// qᵗ just before and after the action.
    pub q_before: f64,
    pub q_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub name: String,
    /// The configured base seed; the replicate ran with `seed + replicate`.
    pub seed: u64,
    pub replicate: u64,
    pub mechanism: MechanismSpec,
    pub network: SocialNetwork,
    pub initial_aware: BTreeSet<AgentId>,
    /// When each agent became aware.
    pub awareness: BTreeMap<AgentId, f64>,
    pub events: Vec<TraceEvent>,
    pub contributions: Vec<ContributionEvent>,
    pub settlement: SettlementReport,
    /// Whether the canonical equilibrium exists on the full network.
    pub equilibrium_exists: bool,
}

impl RunTrace {
    /// Re-settles the recorded contributions.
    pub fn replay(&self) -> Result<SettlementReport> {
        let forest = build_referral_forest(&self.contributions)?;
        settle(&self.mechanism, &self.network, &self.contributions, &forest)
    }

    /// Share of value-holding agents that became aware.
    pub fn coverage(&self) -> f64 {
        let valued: Vec<AgentId> = self.network.valued().map(|a| a.id).collect();
        if valued.is_empty() {
            return 1.0;
        }
        let aware = valued.iter().filter(|id| self.awareness.contains_key(id)).count();
        aware as f64 / valued.len() as f64
    }
}

pub fn run(config: &RunConfig) -> Result<RunTrace> {
    run_replicate(config, 0)
}

pub fn run_replicate(config: &RunConfig, replicate: u64) -> Result<RunTrace> {
    if !(config.time_grid.is_finite() && config.time_grid > 0.0) {
        return Err(Error::param("time_grid", "must be positive"));
    }
    let network = config.network.resolve(config.replicate_seed(replicate))?;
    let initial_aware = match &config.initial_aware {
        Some(ids) => {
            if let Some(&stray) = ids.iter().find(|id| !network.contains(**id)) {
                return Err(Error::UnknownAgent(stray));
            }
            ids.clone()
        }
        None => network.ids().collect(),
    };
    for id in config.strategies.keys() {
        if !network.contains(*id) {
            return Err(Error::UnknownAgent(*id));
        }
    }
    let spec = config.mechanism;
    let game = Game {
        config,
        spec: &spec,
        network: &network,
        initial_aware: &initial_aware,
    };

    let profile = if spec.kind().is_sequential() {
        None
    } else {
        let dry = game.play(Amounts::Zero)?;
        let participants: BTreeSet<AgentId> = dry.events.iter().map(|e| e.agent).collect();
        equilibrium_profile(&spec, &network.induced(&participants))?
    };
    let played = game.play(Amounts::Strategic(profile.as_ref()))?;

    let contributions: Vec<ContributionEvent> = played
        .events
        .iter()
        .map(|e| ContributionEvent::new(e.agent, e.offered, e.time).referring(e.referred.iter().copied()))
        .collect();
    let forest = build_referral_forest(&contributions)?;
    let settlement = settle(&spec, &network, &contributions, &forest)?;
    let equilibrium_exists = equilibrium_profile(&spec, &network)?.is_some();

    Ok(RunTrace {
        name: config.name.clone(),
        seed: config.seed,
        replicate,
        mechanism: spec,
        network,
        initial_aware,
        awareness: played.awareness,
        events: played.events,
        contributions,
        settlement,
        equilibrium_exists,
    })
}

#[derive(Clone, Copy)]
enum Amounts<'p> {
    /// Everyone offers nothing; used to find who takes part.
    Zero,
    Strategic(Option<&'p EquilibriumProfile>),
}

struct Played {
    events: Vec<TraceEvent>,
    awareness: BTreeMap<AgentId, f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Phase {
    Arrive,
    Act,
}

#[derive(Clone, Copy, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

struct Game<'a> {
    config: &'a RunConfig,
    spec: &'a MechanismSpec,
    network: &'a SocialNetwork,
    initial_aware: &'a BTreeSet<AgentId>,
}

impl Game<'_> {
    /// Rounds `t` up to the grid, or `None` past the deadline.
    fn schedule(&self, t: f64) -> Option<f64> {
        let deadline = self.spec.deadline();
        if t > deadline {
            return None;
        }
        let grid = self.config.time_grid;
        let snapped = ((t / grid) - 1e-9).ceil().max(0.0) * grid;
        Some(snapped.max(t).min(deadline))
    }

    fn refers(&self, strategy: Strategy) -> bool {
        match strategy {
            Strategy::Equilibrium | Strategy::Delayed | Strategy::Overcontributor => {
                self.spec.kind().has_referrals()
            }
            Strategy::NoReferralEquilibrium => false,
            Strategy::FreeRider => true,
            Strategy::Custom { refer, .. } => refer,
        }
    }

    fn equilibrium_amount(
        &self,
        agent: AgentId,
        theta: f64,
        q: f64,
        remaining: f64,
        profile: Option<&EquilibriumProfile>,
    ) -> Result<f64> {
        let kind = self.spec.kind();
        if kind.is_sequential() {
            return Ok(equilibrium_cap(self.spec, theta, Some(q))?.min(remaining.max(0.0)));
        }
        match profile {
            Some(p) => Ok(p.contribution(agent)),
            None if kind == MechanismKind::Ppb => Ok(0.0),
            None => equilibrium_cap(self.spec, theta, None),
        }
    }

    fn play(&self, amounts: Amounts<'_>) -> Result<Played> {
        let mut heap: BinaryHeap<Reverse<(Time, AgentId, Phase)>> = BinaryHeap::new();
        let mut awareness = BTreeMap::new();
        for &id in self.initial_aware {
            awareness.insert(id, 0.0);
            let arrival = self.network.agent(id).map_or(0.0, |a| a.arrival);
            if let Some(t) = self.schedule(arrival) {
                heap.push(Reverse((Time(t), id, Phase::Arrive)));
            }
        }

        let h0 = self.spec.provision_point();
        let mut remaining = h0;
        let mut q = 0.0;
        let mut events = Vec::new();
        while let Some(Reverse((Time(now), id, phase))) = heap.pop() {
            let strategy = self.config.strategy(id);
            if phase == Phase::Arrive {
                let act_at = match strategy {
                    Strategy::Delayed => Some(self.spec.deadline()),
                    Strategy::Custom { time: Some(t), .. } => self.schedule(t.max(now)),
                    _ => Some(now),
                };
                match act_at {
                    Some(t) if t > now => {
                        heap.push(Reverse((Time(t), id, Phase::Act)));
                        continue;
                    }
                    Some(_) => {}
                    None => continue,
                }
            }

            let profile = self.network.agent(id).ok_or(Error::UnknownAgent(id))?;
            let offered = match amounts {
                Amounts::Zero => 0.0,
                Amounts::Strategic(eq) => match strategy {
                    Strategy::FreeRider => 0.0,
                    Strategy::Overcontributor => profile.theta,
                    Strategy::Custom { amount, .. } => amount,
                    Strategy::Equilibrium | Strategy::NoReferralEquilibrium | Strategy::Delayed => {
                        self.equilibrium_amount(id, profile.theta, q, remaining, eq)?
                    }
                },
            };
            if !(offered.is_finite() && offered >= 0.0) {
                return Err(Error::NegativeContribution(offered));
            }
            let referred = if self.refers(strategy) {
                profile.neighbors.clone()
            } else {
                BTreeSet::new()
            };

            let accepted = if self.spec.kind().is_sequential() {
                offered.min(remaining.max(0.0))
            } else {
                offered
            };
            let q_before = q;
            if let Some(cf) = self.spec.market() {
                q += securities_for(cf, q, accepted)?;
            }
            let remaining_before = remaining.max(0.0);
            remaining -= accepted;
            events.push(TraceEvent {
                agent: id,
                time: now,
                offered,
                accepted,
                referred: referred.clone(),
                remaining_before,
                remaining_after: remaining.max(0.0),
                q_before,
                q_after: q,
            });

            for j in referred {
                if awareness.contains_key(&j) {
                    continue;
                }
                awareness.insert(j, now);
                let arrival = self.network.agent(j).map_or(now, |a| a.arrival);
                if let Some(t) = self.schedule(arrival.max(now)) {
                    heap.push(Reverse((Time(t), j, Phase::Arrive)));
                }
            }
        }
        Ok(Played { events, awareness })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AgentProfile, ProjectSpec};
    use crate::market::CostFunctionSpec;
    use crate::rbf::RbfSpec;
    use approx::assert_abs_diff_eq;

    fn repp_r(sigma: f64) -> MechanismSpec {
        MechanismSpec::repp_r(ProjectSpec::new(4.0, 10.0).unwrap(), 1.0, RbfSpec::tanh(sigma).unwrap()).unwrap()
    }

    fn path3() -> SocialNetwork {
        SocialNetwork::path(&[2.0, 2.0, 2.0])
            .unwrap()
            .with_arrivals(&[0.0, 1.0, 2.0])
            .unwrap()
    }

    #[test]
    fn equilibrium_run_funds_and_spreads() {
        let config = RunConfig::new("eq", repp_r(0.1), path3()).with_initial_aware([1]);
        let trace = run(&config).unwrap();
        assert!(trace.equilibrium_exists);
        assert!(trace.settlement.funded);
        assert_abs_diff_eq!(trace.settlement.raised, 4.0, epsilon = 1e-12);
        assert_eq!(trace.coverage(), 1.0);
        assert_eq!(trace.awareness[&AgentId(3)], 1.0);
        assert_eq!(trace.replay().unwrap(), trace.settlement);
    }

    #[test]
    fn ppr_without_referrals_stays_local() {
        let spec = MechanismSpec::ppr(ProjectSpec::new(4.0, 10.0).unwrap(), 1.0).unwrap();
        let config = RunConfig::new("ppr", spec, path3()).with_initial_aware([1]);
        let trace = run(&config).unwrap();
        assert_eq!(trace.awareness.len(), 1);
        assert!(!trace.settlement.funded);
        // no equilibrium among the single aware agent, so it plays its cap
        assert_abs_diff_eq!(trace.events[0].offered, 1.6, epsilon = 1e-12);
    }

    #[test]
    fn free_riders_collect_nothing() {
        let config = RunConfig::new("fr", repp_r(0.4), path3())
            .with_initial_aware([1])
            .with_default_strategy(Strategy::FreeRider);
        let trace = run(&config).unwrap();
        assert!(!trace.settlement.funded);
        assert_eq!(trace.coverage(), 1.0);
        assert!(trace.settlement.agents.values().all(|a| a.utility == 0.0));
    }

    #[test]
    fn delayed_agent_acts_at_deadline() {
        let spec = MechanismSpec::repp_s(
            ProjectSpec::new(4.0, 10.0).unwrap(),
            CostFunctionSpec::lmsr(0.5).unwrap(),
            RbfSpec::tanh(0.3).unwrap(),
        )
        .unwrap();
        let net = SocialNetwork::complete(&[3.0, 3.0]).unwrap().with_arrivals(&[0.0, 1.0]).unwrap();
        let config = RunConfig::new("d", spec, net).with_strategy(1, Strategy::Delayed);
        let trace = run(&config).unwrap();
        assert_eq!(trace.events.last().unwrap().agent, AgentId(1));
        assert_eq!(trace.events.last().unwrap().time, 10.0);
        for pair in trace.events.windows(2) {
            assert!(pair[1].remaining_before <= pair[0].remaining_before);
            assert!(pair[1].q_before >= pair[0].q_before);
        }
    }

    #[test]
    fn late_arrivals_never_act() {
        let net = SocialNetwork::new(vec![AgentProfile::new(1, 5.0, 11.0)]).unwrap();
        let trace = run(&RunConfig::new("late", MechanismSpec::ppb(ProjectSpec::new(4.0, 10.0).unwrap()), net)).unwrap();
        assert!(trace.events.is_empty());
        assert!(!trace.settlement.funded);
    }

    #[test]
    fn times_snap_up_to_grid() {
        let net = SocialNetwork::new(vec![AgentProfile::new(1, 5.0, 0.3000000001)]).unwrap();
        let mut config = RunConfig::new("snap", MechanismSpec::ppb(ProjectSpec::new(4.0, 10.0).unwrap()), net);
        config.time_grid = 0.1;
        let trace = run(&config).unwrap();
        assert!(trace.events[0].time >= 0.3000000001);
        assert!(trace.events[0].time <= 0.4 + 1e-12);
    }

    #[test]
    fn unknown_initial_agent_is_rejected() {
        let config = RunConfig::new("x", repp_r(0.2), path3()).with_initial_aware([9]);
        assert_eq!(run(&config), Err(Error::UnknownAgent(AgentId(9))));
    }
}
