use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GridGame, BEST_RESPONSE_TOLERANCE};
use crate::domain::{build_referral_forest, AgentId, ContributionEvent};
use crate::error::Result;
use crate::mechanisms::{allocate, EquilibriumProfile};

/// A simultaneous-move profile: everyone acts at arrival.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridProfile {
    pub contributions: BTreeMap<AgentId, f64>,
    /// Whether each agent refers all its neighbors.
    pub refer: BTreeMap<AgentId, bool>,
    pub funded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub agent: AgentId,
    pub amount: f64,
    pub refer: bool,
    pub utility_before: f64,
    pub utility_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsneVerdict {
    pub holds: bool,
    pub counterexample: Option<Deviation>,
}

/// Settles one simultaneous profile and returns `(funded, utilities)`.
fn evaluate(game: &GridGame, ids: &[AgentId], amounts: &[f64], refer: &[bool]) -> Result<(bool, Vec<f64>)> {
    let events: Vec<ContributionEvent> = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            let agent = game.network.agent(id).expect("ids come from the network");
            let e = ContributionEvent::new(id, amounts[i], agent.arrival);
            if refer[i] {
                e.referring(agent.neighbors.iter().copied())
            } else {
                e
            }
        })
        .collect();
    let forest = build_referral_forest(&events)?;
    let alloc = allocate(&game.mechanism, &events, &forest)?;
    let utilities = ids
        .iter()
        .map(|&id| {
            let theta = game.network.theta(id).unwrap_or(0.0);
            alloc.utility(id, theta, alloc.funded)
        })
        .collect();
    Ok((alloc.funded, utilities))
}

/// Every grid profile at which no agent gains more than the tolerance by a
/// unilateral change of contribution or referral choice. Profiles are
/// returned in lexicographic order of the agents' actions.
pub fn find_psne(game: &GridGame) -> Result<Vec<GridProfile>> {
    game.validate()?;
    let ids = game.ids();
    let n = ids.len();
    let amounts = game.amounts();
    let refer_opts = game.refer_options();
    let per_agent = amounts.len() * refer_opts.len();
    let total = (per_agent as u128).pow(n as u32);
    game.check_size(total)?;
    let total = total as usize;

    let decode = |mut p: usize| {
        let mut actions = vec![0usize; n];
        for slot in actions.iter_mut().rev() {
            *slot = p % per_agent;
            p /= per_agent;
        }
        actions
    };
    let split = |actions: &[usize]| {
        let xs: Vec<f64> = actions.iter().map(|a| amounts[a / refer_opts.len()]).collect();
        let rs: Vec<bool> = actions.iter().map(|a| refer_opts[a % refer_opts.len()]).collect();
        (xs, rs)
    };

    let table: Vec<(bool, Vec<f64>)> = (0..total)
        .into_par_iter()
        .map(|p| {
            let (xs, rs) = split(&decode(p));
            evaluate(game, &ids, &xs, &rs)
        })
        .collect::<Result<_>>()?;

    let stride: Vec<usize> = (0..n).map(|i| per_agent.pow((n - 1 - i) as u32)).collect();
    let equilibria: Vec<usize> = (0..total)
        .into_par_iter()
        .filter(|&p| {
            let actions = decode(p);
            (0..n).all(|i| {
                let base = p - actions[i] * stride[i];
                let current = table[p].1[i];
                (0..per_agent).all(|alt| table[base + alt * stride[i]].1[i] <= current + BEST_RESPONSE_TOLERANCE)
            })
        })
        .collect();

    Ok(equilibria
        .into_iter()
        .map(|p| {
            let (xs, rs) = split(&decode(p));
            GridProfile {
                contributions: ids.iter().copied().zip(xs).collect(),
                refer: ids.iter().copied().zip(rs).collect(),
                funded: table[p].0,
            }
        })
        .collect())
}

/// Checks a single profile against all grid deviations. The profile's own
/// amounts need not lie on the grid.
pub fn is_psne(game: &GridGame, profile: &EquilibriumProfile) -> Result<PsneVerdict> {
    game.validate()?;
    let ids = game.ids();
    let xs: Vec<f64> = ids.iter().map(|&id| profile.contribution(id)).collect();
    let rs: Vec<bool> = ids
        .iter()
        .map(|id| profile.referrals.get(id).is_some_and(|m| !m.is_empty()))
        .collect();
    let (_, base) = evaluate(game, &ids, &xs, &rs)?;
    let amounts = game.amounts();
    game.check_size((ids.len() * amounts.len() * game.refer_options().len()) as u128)?;

    for (i, &id) in ids.iter().enumerate() {
        for &refer in game.refer_options() {
            for &x in &amounts {
                let mut dx = xs.clone();
                let mut dr = rs.clone();
                dx[i] = x;
                dr[i] = refer;
                let (_, utilities) = evaluate(game, &ids, &dx, &dr)?;
                if utilities[i] > base[i] + BEST_RESPONSE_TOLERANCE {
                    return Ok(PsneVerdict {
                        holds: false,
                        counterexample: Some(Deviation {
                            agent: id,
                            amount: x,
                            refer,
                            utility_before: base[i],
                            utility_after: utilities[i],
                        }),
                    });
                }
            }
        }
    }
    Ok(PsneVerdict {
        holds: true,
        counterexample: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ProjectSpec, SocialNetwork};
    use crate::mechanisms::MechanismSpec;

    fn project() -> ProjectSpec {
        ProjectSpec::new(4.0, 1.0).unwrap()
    }

    #[test]
    fn ppb_has_funded_and_empty_equilibria() {
        let game = GridGame::new(
            MechanismSpec::ppb(project()),
            SocialNetwork::complete(&[3.0, 3.0]).unwrap(),
            0.5,
        )
        .unwrap();
        let eq = find_psne(&game).unwrap();
        assert!(eq.iter().any(|p| !p.funded && p.contributions.values().all(|&x| x == 0.0)));
        let funded: Vec<_> = eq.iter().filter(|p| p.funded).collect();
        // x1 ∈ {1, 1.5, ..., 3}
        assert_eq!(funded.len(), 5);
        assert!(funded.iter().all(|p| p.contributions.values().all(|&x| x <= 3.0)));
    }

    #[test]
    fn relabeling_permutes_equilibria() {
        let spec = MechanismSpec::ppr(project(), 1.0).unwrap();
        let a = SocialNetwork::complete(&[3.0, 2.5]).unwrap();
        let b = SocialNetwork::complete(&[2.5, 3.0]).unwrap();
        let ea = find_psne(&GridGame::new(spec, a, 0.25).unwrap()).unwrap();
        let eb = find_psne(&GridGame::new(spec, b, 0.25).unwrap()).unwrap();
        let swap = |p: &GridProfile| (p.contributions[&AgentId(2)].to_bits(), p.contributions[&AgentId(1)].to_bits());
        let mut sa: Vec<_> = ea.iter().map(swap).collect();
        let mut sb: Vec<_> = eb
            .iter()
            .map(|p| (p.contributions[&AgentId(1)].to_bits(), p.contributions[&AgentId(2)].to_bits()))
            .collect();
        sa.sort();
        sb.sort();
        assert_eq!(sa, sb);
        assert!(!sa.is_empty());
    }

    #[test]
    fn single_profile_check() {
        let spec = MechanismSpec::ppr(project(), 1.0).unwrap();
        let game = GridGame::new(spec, SocialNetwork::complete(&[3.0, 3.0]).unwrap(), 0.1).unwrap();
        let mut p = EquilibriumProfile::default();
        p.contributions.insert(AgentId(1), 2.0);
        p.contributions.insert(AgentId(2), 2.0);
        assert!(is_psne(&game, &p).unwrap().holds);
        p.contributions.insert(AgentId(1), 2.6);
        p.contributions.insert(AgentId(2), 1.4);
        let verdict = is_psne(&game, &p).unwrap();
        assert!(!verdict.holds);
        assert_eq!(verdict.counterexample.unwrap().agent, AgentId(1));
    }

    #[test]
    fn oversized_search_is_refused() {
        let mut game = GridGame::new(
            MechanismSpec::ppb(project()),
            SocialNetwork::complete(&[1.0; 6]).unwrap(),
            0.1,
        )
        .unwrap();
        game.max_profiles = 1000;
        assert!(matches!(find_psne(&game), Err(crate::Error::SearchTooLarge { .. })));
    }
}
