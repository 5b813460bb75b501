use serde::{Deserialize, Serialize};

use super::{MechanismKind, MechanismSpec};
use crate::error::Result;
use crate::market::securities_for;
use crate::rbf::ReferralBonus;

/// Referral structures that stress the bonus budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorstCase {
    /// Every contributor sits below its own chain of `d` referrers, so each
    /// contribution is credited `d` times separately.
    ChainPerContributor,
    /// All contributors hang off one hub at the bottom of a chain of `d`
    /// referrers, so the referred mass is pooled.
    SingleHub,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseBound {
    /// Exact payout for the structure: total referral bonus for REPP-R,
    /// total securities for REPP-S.
    pub exact: f64,
    /// The σ-based envelope.
    pub bound: f64,
}

/// Worst-case sponsor exposure when `n` contributors each give `h⁰/n`.
pub fn worst_case_bonus(spec: &MechanismSpec, n: usize, d: usize, case: WorstCase) -> Result<WorstCaseBound> {
    let rbf = spec.rbf_or_err("worst_case_bonus")?;
    if n == 0 {
        return Ok(WorstCaseBound { exact: 0.0, bound: 0.0 });
    }
    let h0 = spec.provision_point();
    let delta = h0 / n as f64;
    let sigma = rbf.cap();
    let (nf, df) = (n as f64, d as f64);
    match spec.kind() {
        MechanismKind::ReppR => Ok(match case {
            WorstCase::ChainPerContributor => WorstCaseBound {
                exact: nf * df * rbf.bonus(delta),
                bound: nf * df * sigma,
            },
            WorstCase::SingleHub => WorstCaseBound {
                exact: df * rbf.bonus(nf * delta),
                bound: df * sigma,
            },
        }),
        MechanismKind::ReppS => {
            let cf = spec.market_or_err("worst_case_bonus")?;
            let mut q = 0.0;
            let mut increments = Vec::with_capacity(n);
            for _ in 0..n {
                let r = securities_for(cf, q, delta)?;
                q += r;
                increments.push(r);
            }
            let full = spec.full_funding_securities()?;
            Ok(match case {
                WorstCase::ChainPerContributor => WorstCaseBound {
                    exact: q + df * increments.iter().map(|&r| rbf.bonus(r)).sum::<f64>(),
                    bound: full + nf * df * sigma,
                },
                WorstCase::SingleHub => WorstCaseBound {
                    exact: q + df * rbf.bonus(q),
                    bound: full + df * sigma,
                },
            })
        }
        _ => Err(spec.unsupported("worst_case_bonus")),
    }
}
