//! Brute-force equilibrium verification on discretized games.
//!
//! Payoffs always come from [`crate::mechanisms::allocate`]; the oracle only
//! supplies the search.

use serde::{Deserialize, Serialize};

use crate::domain::{AgentId, SocialNetwork};
use crate::error::{Error, Result};
use crate::mechanisms::MechanismSpec;

mod monotonicity;
mod psne;
mod sgpe;

pub use monotonicity::{check_monotonicity, MonotonicityReport, MonotonicityState};
pub use psne::{find_psne, is_psne, Deviation, GridProfile, PsneVerdict};
pub use sgpe::{check_sgpe, AmountChoice, SeqAction, SgpeCounterexample, SgpeVerdict};

/// Improvements at or below this are treated as ties.
pub const BEST_RESPONSE_TOLERANCE: f64 = 1e-9;

pub const MAX_AGENTS: usize = 6;

fn default_max_profiles() -> u128 {
    20_000_000
}

/// A small game with contributions restricted to multiples of `grid_step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridGame {
    pub mechanism: MechanismSpec,
    pub network: SocialNetwork,
    /// Contribution grid step; must divide h⁰.
    pub grid_step: f64,
    /// Extra timing choices `a + k·time_step` for sequential games. Without
    /// it agents choose among the arrival times and the deadline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_step: Option<f64>,
    /// Refuse searches that would evaluate more outcomes than this.
    #[serde(default = "default_max_profiles")]
    pub max_profiles: u128,
}

impl GridGame {
    pub fn new(mechanism: MechanismSpec, network: SocialNetwork, grid_step: f64) -> Result<Self> {
        let game = GridGame {
            mechanism,
            network,
            grid_step,
            time_step: None,
            max_profiles: default_max_profiles(),
        };
        game.validate()?;
        Ok(game)
    }

    pub fn with_time_step(mut self, step: f64) -> Result<Self> {
        self.time_step = Some(step);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.network.len();
        if n == 0 || n > MAX_AGENTS {
            return Err(Error::param("network", format!("grid games take 1 to {MAX_AGENTS} agents, got {n}")));
        }
        let h0 = self.mechanism.provision_point();
        if !(self.grid_step.is_finite() && self.grid_step > 0.0) {
            return Err(Error::param("grid_step", "must be positive"));
        }
        let steps = h0 / self.grid_step;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::param("grid_step", format!("{} does not divide h0 = {h0}", self.grid_step)));
        }
        if let Some(t) = self.time_step {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::param("time_step", "must be positive"));
            }
        }
        if let Some(a) = self.network.agents().find(|a| a.arrival > self.mechanism.deadline()) {
            return Err(Error::InvalidAgent {
                agent: a.id,
                reason: "arrives after the deadline".into(),
            });
        }
        Ok(())
    }

    /// Contribution grid `0, δ, 2δ, …, h⁰`.
    pub fn amounts(&self) -> Vec<f64> {
        let steps = (self.mechanism.provision_point() / self.grid_step).round() as usize;
        (0..=steps).map(|k| k as f64 * self.grid_step).collect()
    }

    fn refer_options(&self) -> &'static [bool] {
        if self.mechanism.kind().has_referrals() {
            &[false, true]
        } else {
            &[false]
        }
    }

    fn ids(&self) -> Vec<AgentId> {
        self.network.ids().collect()
    }

    fn check_size(&self, count: u128) -> Result<()> {
        log::info!("grid search over {count} outcomes");
        if count > self.max_profiles {
            return Err(Error::SearchTooLarge {
                count,
                cap: self.max_profiles,
            });
        }
        Ok(())
    }
}
