//! Event-driven simulation of the contribution game with referral diffusion.
//!
//! Agents become aware of the project either at the start (the initial aware
//! set) or when a neighbor refers them. An aware agent shows up at the later
//! of its arrival time and its awareness time, rounded up to the time grid,
//! and then acts once according to its strategy.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{AgentId, AgentProfile, SocialNetwork};
use crate::error::{Error, Result};
use crate::mechanisms::MechanismSpec;

mod engine;
mod sweep;

pub use engine::{run, run_replicate, RunTrace, TraceEvent};
pub use sweep::{run_replicates, summarize, sweep, SummaryRow};

/// How an agent plays.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    /// The canonical equilibrium action for the mechanism.
    #[default]
    Equilibrium,
    /// Contributes nothing and refers every neighbor.
    FreeRider,
    /// Equilibrium amount and timing, but never refers.
    NoReferralEquilibrium,
    /// Equilibrium action postponed to the deadline.
    Delayed,
    /// Contributes its full value θ.
    Overcontributor,
    /// A fixed action. `time` is absolute and applied no earlier than the
    /// agent shows up; `refer` refers every neighbor.
    Custom {
        amount: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        time: Option<f64>,
        #[serde(default)]
        refer: bool,
    },
}

/// Parameters for a random connected network: a random spanning tree over
/// agents `1..=agents` plus each remaining pair with `edge_probability`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomNetwork {
    pub agents: u32,
    pub edge_probability: f64,
    /// Values are drawn uniformly from `[theta[0], theta[1]]`.
    pub theta: [f64; 2],
    #[serde(default)]
    pub arrival: [f64; 2],
}

impl RandomNetwork {
    pub fn generate(&self, seed: u64) -> Result<SocialNetwork> {
        if self.agents == 0 {
            return Err(Error::param("agents", "need at least one agent"));
        }
        if !(0.0..=1.0).contains(&self.edge_probability) {
            return Err(Error::param("edge_probability", "must lie in [0, 1]"));
        }
        for (name, [lo, hi]) in [("theta", self.theta), ("arrival", self.arrival)] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return Err(Error::param(name, "range must be finite, nonnegative and ordered"));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]| {
            if lo == hi {
                lo
            } else {
                rng.gen_range(lo..=hi)
            }
        };
        let n = self.agents;
        let agents: Vec<AgentProfile> = (1..=n)
            .map(|i| {
                let theta = draw(&mut rng, self.theta);
                let arrival = draw(&mut rng, self.arrival);
                AgentProfile::new(i, theta, arrival)
            })
            .collect();
        let mut edges = BTreeSet::new();
        for i in 2..=n {
            let j = rng.gen_range(1..i);
            edges.insert([AgentId(j), AgentId(i)]);
        }
        for i in 1..=n {
            for j in i + 1..=n {
                if rng.gen_bool(self.edge_probability) {
                    edges.insert([AgentId(i), AgentId(j)]);
                }
            }
        }
        SocialNetwork::with_edges(agents, edges.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSource {
    Explicit(SocialNetwork),
    Random(RandomNetwork),
}

impl NetworkSource {
    pub fn resolve(&self, seed: u64) -> Result<SocialNetwork> {
        match self {
            NetworkSource::Explicit(net) => Ok(net.clone()),
            NetworkSource::Random(params) => params.generate(seed),
        }
    }
}

fn default_time_grid() -> f64 {
    1e-3
}

/// One simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub mechanism: MechanismSpec,
    pub network: NetworkSource,
    /// Agents aware at t = 0. Everyone when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_aware: Option<BTreeSet<AgentId>>,
    #[serde(default)]
    pub default_strategy: Strategy,
    /// Per-agent overrides of `default_strategy`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub strategies: BTreeMap<AgentId, Strategy>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_time_grid")]
    pub time_grid: f64,
}

impl RunConfig {
    pub fn new(name: impl Into<String>, mechanism: MechanismSpec, network: SocialNetwork) -> Self {
        RunConfig {
            name: name.into(),
            mechanism,
            network: NetworkSource::Explicit(network),
            initial_aware: None,
            default_strategy: Strategy::Equilibrium,
            strategies: BTreeMap::new(),
            seed: 0,
            time_grid: default_time_grid(),
        }
    }

    pub fn with_initial_aware(mut self, ids: impl IntoIterator<Item = impl Into<AgentId>>) -> Self {
        self.initial_aware = Some(ids.into_iter().map(Into::into).collect());
        self
    }

    pub fn with_default_strategy(mut self, strategy: Strategy) -> Self {
        self.default_strategy = strategy;
        self
    }

    pub fn with_strategy(mut self, agent: impl Into<AgentId>, strategy: Strategy) -> Self {
        self.strategies.insert(agent.into(), strategy);
        self
    }

    pub fn strategy(&self, agent: AgentId) -> Strategy {
        self.strategies.get(&agent).copied().unwrap_or(self.default_strategy)
    }

    /// Seed used for the given replicate.
    pub fn replicate_seed(&self, replicate: u64) -> u64 {
        self.seed.wrapping_add(replicate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_networks_are_connected_and_reproducible() {
        let params = RandomNetwork {
            agents: 20,
            edge_probability: 0.05,
            theta: [0.5, 2.0],
            arrival: [0.0, 1.0],
        };
        for seed in 0..20 {
            let a = params.generate(seed).unwrap();
            assert_eq!(a, params.generate(seed).unwrap());
            assert_eq!(a.len(), 20);
            assert!(a.is_support_connected());
            assert!(a.agents().all(|p| (0.5..=2.0).contains(&p.theta) && p.arrival <= 1.0));
        }
        assert_ne!(params.generate(1).unwrap(), params.generate(2).unwrap());
    }

    #[test]
    fn bad_random_parameters() {
        let mut params = RandomNetwork {
            agents: 3,
            edge_probability: 1.5,
            theta: [1.0, 2.0],
            arrival: [0.0, 0.0],
        };
        assert!(params.generate(0).is_err());
        params.edge_probability = 0.5;
        params.theta = [2.0, 1.0];
        assert!(params.generate(0).is_err());
    }

    #[test]
    fn strategy_json() {
        let s: Strategy = serde_json::from_str(r#""free_rider""#).unwrap();
        assert_eq!(s, Strategy::FreeRider);
        let c: Strategy = serde_json::from_str(r#"{"custom":{"amount":1.5,"refer":true}}"#).unwrap();
        assert_eq!(
            c,
            Strategy::Custom {
                amount: 1.5,
                time: None,
                refer: true
            }
        );
        assert!(serde_json::from_str::<Strategy>(r#""lazy""#).is_err());
    }
}
