//! Subgame check for the sequential (market) mechanisms.
//!
//! Agents decide in arrival order. At a decision point the agent knows what
//! earlier agents chose and expects later agents to follow the profile. It
//! does not know whether the project will be funded, and it does not count on
//! referral bonuses it cannot control, so an action is scored by its
//! guaranteed payoff
//!
//! ```text
//! W = min(θ − x, refund payoff + σ)
//! ```
//!
//! with the realized unfunded utility breaking ties. A profile passes when,
//! after every history of grid actions, no alternative action scores higher.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GridGame, BEST_RESPONSE_TOLERANCE};
use crate::domain::{build_referral_forest, AgentId, AgentProfile, ContributionEvent};
use crate::error::{Error, Result};
use crate::mechanisms::{allocate, equilibrium_cap, EquilibriumProfile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmountChoice {
    Fixed(f64),
    /// Contribute the equilibrium cap at the current security count, or the
    /// remaining amount if smaller.
    Rule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeqAction {
    pub amount: AmountChoice,
    pub time: f64,
    pub refer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgpeCounterexample {
    pub agent: AgentId,
    /// Actions already chosen by agents deciding earlier.
    pub history: Vec<(AgentId, SeqAction)>,
    pub prescribed: SeqAction,
    pub deviation: SeqAction,
    /// `[guaranteed payoff, unfunded utility]`.
    pub prescribed_score: [f64; 2],
    pub deviation_score: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgpeVerdict {
    pub holds: bool,
    pub histories_checked: u64,
    pub counterexample: Option<SgpeCounterexample>,
}

struct Sequential<'a> {
    game: &'a GridGame,
    /// Agents in decision order.
    agents: Vec<&'a AgentProfile>,
    policy: Vec<SeqAction>,
    actions: Vec<Vec<SeqAction>>,
}

impl Sequential<'_> {
    /// Executes the actions (indexed by decision order) and scores agent `k`.
    fn score(&self, actions: &[SeqAction], k: usize) -> Result<[f64; 2]> {
        let spec = &self.game.mechanism;
        let mut order: Vec<usize> = (0..actions.len()).collect();
        order.sort_by(|&a, &b| actions[a].time.total_cmp(&actions[b].time).then(a.cmp(&b)));

        let cf = spec.market_or_err("check_sgpe")?;
        let mut remaining = spec.provision_point();
        let mut q = 0.0;
        let mut events = Vec::with_capacity(actions.len());
        for i in order {
            let agent = self.agents[i];
            let act = actions[i];
            let amount = match act.amount {
                AmountChoice::Fixed(x) => x,
                AmountChoice::Rule => equilibrium_cap(spec, agent.theta, Some(q))?.min(remaining.max(0.0)),
            };
            let accepted = amount.min(remaining.max(0.0));
            q += crate::market::securities_for(cf, q, accepted)?;
            remaining -= accepted;
            let e = ContributionEvent::new(agent.id, amount, act.time);
            events.push(if act.refer {
                e.referring(agent.neighbors.iter().copied())
            } else {
                e
            });
        }
        let forest = build_referral_forest(&events)?;
        let alloc = allocate(spec, &events, &forest)?;
        let me = self.agents[k];
        let a = alloc.agent(me.id);
        let guaranteed = (me.theta - a.accepted).min(a.refund_bonus + spec.sigma());
        Ok([guaranteed, a.unfunded_payoff()])
    }

    fn better(candidate: [f64; 2], incumbent: [f64; 2]) -> bool {
        if candidate[0] > incumbent[0] + BEST_RESPONSE_TOLERANCE {
            return true;
        }
        (candidate[0] - incumbent[0]).abs() <= BEST_RESPONSE_TOLERANCE
            && candidate[1] > incumbent[1] + BEST_RESPONSE_TOLERANCE
    }

    /// Checks agent `k` after the history encoded by `index`.
    fn check(&self, k: usize, mut index: u128) -> Result<Option<SgpeCounterexample>> {
        let mut actions = self.policy.clone();
        for j in (0..k).rev() {
            let options = &self.actions[j];
            let len = options.len() as u128;
            actions[j] = options[(index % len) as usize];
            index /= len;
        }
        let prescribed = actions[k];
        let incumbent = self.score(&actions, k)?;
        for &alt in &self.actions[k] {
            actions[k] = alt;
            let candidate = self.score(&actions, k)?;
            if Self::better(candidate, incumbent) {
                return Ok(Some(SgpeCounterexample {
                    agent: self.agents[k].id,
                    history: (0..k).map(|j| (self.agents[j].id, actions[j])).collect(),
                    prescribed,
                    deviation: alt,
                    prescribed_score: incumbent,
                    deviation_score: candidate,
                }));
            }
        }
        Ok(None)
    }
}

fn dedup_times(mut times: Vec<f64>) -> Vec<f64> {
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    times
}

/// Checks a profile of the sequential game after every grid history.
pub fn check_sgpe(game: &GridGame, profile: &EquilibriumProfile) -> Result<SgpeVerdict> {
    game.validate()?;
    let spec = &game.mechanism;
    if !spec.kind().is_sequential() {
        return Err(spec.unsupported("check_sgpe"));
    }
    let deadline = spec.deadline();
    let mut agents: Vec<&AgentProfile> = game.network.agents().collect();
    agents.sort_by(|a, b| a.arrival.total_cmp(&b.arrival).then(a.id.cmp(&b.id)));

    let prescribed_time = |a: &AgentProfile| profile.times.get(&a.id).copied().unwrap_or(a.arrival);
    for a in &agents {
        let t = prescribed_time(a);
        if t < a.arrival || t > deadline {
            return Err(Error::InvalidEvent {
                agent: a.id,
                reason: format!("prescribed time {t} is outside [arrival, T]"),
            });
        }
    }

    // Policies follow the profile literally except that amounts matching the
    // cap-or-remainder rule on path are treated as that rule off path.
    let mut policy: Vec<SeqAction> = agents
        .iter()
        .map(|a| SeqAction {
            amount: AmountChoice::Rule,
            time: prescribed_time(a),
            refer: profile.referrals.get(&a.id).is_some_and(|m| !m.is_empty()),
        })
        .collect();
    let on_path = rule_amounts(game, &agents, &policy)?;
    for (i, a) in agents.iter().enumerate() {
        let x = profile.contribution(a.id);
        if (on_path[i] - x).abs() > BEST_RESPONSE_TOLERANCE {
            policy[i].amount = AmountChoice::Fixed(x);
        }
    }

    let amounts: Vec<AmountChoice> = game
        .amounts()
        .into_iter()
        .map(AmountChoice::Fixed)
        .chain([AmountChoice::Rule])
        .collect();
    let actions: Vec<Vec<SeqAction>> = agents
        .iter()
        .map(|a| {
            let mut times: Vec<f64> = agents.iter().map(|b| b.arrival).filter(|&t| t >= a.arrival).collect();
            times.push(deadline);
            if let Some(step) = game.time_step {
                let mut t = a.arrival;
                while t <= deadline {
                    times.push(t);
                    t += step;
                }
            }
            let times = dedup_times(times);
            let mut out = Vec::new();
            for &time in &times {
                for &refer in game.refer_options() {
                    for &amount in &amounts {
                        out.push(SeqAction { amount, time, refer });
                    }
                }
            }
            out
        })
        .collect();

    let mut histories = Vec::with_capacity(agents.len());
    let mut count: u128 = 1;
    let mut work: u128 = 0;
    for options in &actions {
        histories.push(count);
        work = work.saturating_add(count.saturating_mul(options.len() as u128 + 1));
        count = count.saturating_mul(options.len() as u128);
    }
    game.check_size(work)?;

    let search = Sequential {
        game,
        agents,
        policy,
        actions,
    };
    let mut checked = 0u64;
    for (k, &total) in histories.iter().enumerate() {
        let found = (0..total as u64)
            .into_par_iter()
            .map(|h| search.check(k, h as u128))
            .find_map_first(|r| match r {
                Ok(None) => None,
                other => Some(other),
            });
        match found {
            Some(Ok(Some(cx))) => {
                return Ok(SgpeVerdict {
                    holds: false,
                    histories_checked: checked + 1,
                    counterexample: Some(cx),
                })
            }
            Some(Err(e)) => return Err(e),
            _ => checked += total as u64,
        }
    }
    Ok(SgpeVerdict {
        holds: true,
        histories_checked: checked,
        counterexample: None,
    })
}

/// Amounts the rule produces when everyone follows `policy`.
fn rule_amounts(game: &GridGame, agents: &[&AgentProfile], policy: &[SeqAction]) -> Result<Vec<f64>> {
    let spec = &game.mechanism;
    let cf = spec.market_or_err("check_sgpe")?;
    let mut order: Vec<usize> = (0..policy.len()).collect();
    order.sort_by(|&a, &b| policy[a].time.total_cmp(&policy[b].time).then(a.cmp(&b)));
    let mut out = vec![0.0; policy.len()];
    let mut remaining = spec.provision_point();
    let mut q = 0.0;
    for i in order {
        let x = equilibrium_cap(spec, agents[i].theta, Some(q))?.min(remaining.max(0.0));
        q += crate::market::securities_for(cf, q, x)?;
        remaining -= x;
        out[i] = x;
    }
    Ok(out)
}
