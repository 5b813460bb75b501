use serde::{Deserialize, Serialize};

use crate::domain::{build_referral_forest, AgentId, ContributionEvent};
use crate::error::{Error, Result};
use crate::market::{check_epps_liquidity, marginal_securities_per_unit};
use crate::mechanisms::{allocate, MechanismKind, MechanismSpec};

/// Context for one sweep of an agent's own contribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityState {
    /// Contributed by others before the agent acts.
    pub prior: f64,
    /// Contributed, before the agent acts, by someone the agent referred.
    pub referred: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub kind: MechanismKind,
    pub states: usize,
    pub samples: usize,
    /// Smallest finite-difference slope of unfunded utility in the agent's
    /// own contribution.
    pub min_slope: f64,
    pub worst_state: Option<MonotonicityState>,
    /// Whether contributing more always pays in the unfunded outcome.
    pub incentivizing: bool,
    /// Market mechanisms only: smallest securities-per-unit rate seen.
    pub min_marginal_securities: Option<f64>,
    pub q_max: Option<f64>,
    pub liquidity_at_q_max: Option<bool>,
}

const REFERRER: AgentId = AgentId(1);
const PRIOR: AgentId = AgentId(2);
const SUBJECT: AgentId = AgentId(3);
const CHILD: AgentId = AgentId(4);

/// Sweeps the subject's contribution in steps of `grid_step` over
/// `[0, h⁰ − prior − referred]` for every state.
///
/// The subject is itself referred, has already referred a child, and acts
/// last, so only its own amount varies along a sweep.
pub fn check_monotonicity(
    spec: &MechanismSpec,
    states: &[MonotonicityState],
    grid_step: f64,
) -> Result<MonotonicityReport> {
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return Err(Error::param("grid_step", "must be positive"));
    }
    let h0 = spec.provision_point();
    let t = spec.deadline();
    let market = spec.market();

    let mut report = MonotonicityReport {
        kind: spec.kind(),
        states: states.len(),
        samples: 0,
        min_slope: f64::INFINITY,
        worst_state: None,
        incentivizing: false,
        min_marginal_securities: market.map(|_| f64::INFINITY),
        q_max: market.map(|_| 0.0),
        liquidity_at_q_max: None,
    };

    for &state in states {
        let room = h0 - state.prior - state.referred;
        if !(state.prior >= 0.0 && state.referred >= 0.0 && room > grid_step) {
            return Err(Error::param(
                "states",
                format!("prior {} and referred {} leave no room below h0", state.prior, state.referred),
            ));
        }
        let steps = ((room / grid_step) + 1e-9).floor() as usize;
        let mut previous: Option<f64> = None;
        for k in 0..=steps {
            let x = k as f64 * grid_step;
            let events = [
                ContributionEvent::new(REFERRER, 0.0, 0.0).referring([SUBJECT]),
                ContributionEvent::new(PRIOR, state.prior, 0.1 * t),
                ContributionEvent {
                    referral_time: Some(0.2 * t),
                    ..ContributionEvent::new(SUBJECT, x, 0.4 * t).referring([CHILD])
                },
                ContributionEvent::new(CHILD, state.referred, 0.3 * t),
            ];
            let forest = build_referral_forest(&events)?;
            let alloc = allocate(spec, &events, &forest)?;
            let u = alloc.utility(SUBJECT, 0.0, false);
            report.samples += 1;

            if let (Some(cf), Some(q_max), Some(min_rate)) =
                (market, report.q_max.as_mut(), report.min_marginal_securities.as_mut())
            {
                let q_after = alloc.agents.values().map(|a| a.securities_refund).sum::<f64>();
                let q_before = q_after - alloc.agent(SUBJECT).securities_refund;
                *q_max = q_max.max(alloc.outstanding_securities);
                *min_rate = min_rate
                    .min(marginal_securities_per_unit(cf, q_before))
                    .min(marginal_securities_per_unit(cf, q_after));
            }

            if let Some(p) = previous {
                let slope = (u - p) / grid_step;
                if slope < report.min_slope {
                    report.min_slope = slope;
                    report.worst_state = Some(state);
                }
            }
            previous = Some(u);
        }
    }

    report.incentivizing = report.min_slope > 0.0 && report.min_slope.is_finite();
    if let (Some(cf), Some(q_max)) = (market, report.q_max) {
        report.liquidity_at_q_max = Some(check_epps_liquidity(cf, q_max)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ProjectSpec;
    use crate::market::CostFunctionSpec;
    use crate::rbf::RbfSpec;

    fn states() -> Vec<MonotonicityState> {
        vec![
            MonotonicityState { prior: 0.1, referred: 0.0 },
            MonotonicityState { prior: 1.5, referred: 0.5 },
            MonotonicityState { prior: 0.2, referred: 2.5 },
        ]
    }

    fn project() -> ProjectSpec {
        ProjectSpec::new(4.0, 1.0).unwrap()
    }

    #[test]
    fn bonus_mechanisms_reward_contributing() {
        let lmsr = CostFunctionSpec::lmsr(1.0).unwrap();
        let rbf = RbfSpec::tanh(0.4).unwrap();
        for spec in [
            MechanismSpec::ppr(project(), 1.0).unwrap(),
            MechanismSpec::repp_r(project(), 1.0, rbf).unwrap(),
            MechanismSpec::pps(project(), lmsr).unwrap(),
            MechanismSpec::repp_s(project(), lmsr, rbf).unwrap(),
        ] {
            let report = check_monotonicity(&spec, &states(), 0.05).unwrap();
            assert!(report.incentivizing, "{report:?}");
            if spec.kind().is_sequential() {
                assert!(report.min_marginal_securities.unwrap() > 1.0);
                assert_eq!(report.liquidity_at_q_max, Some(true));
            }
        }
    }

    #[test]
    fn sole_contributor_gets_the_whole_budget_regardless() {
        let spec = MechanismSpec::ppr(project(), 1.0).unwrap();
        let alone = [MonotonicityState { prior: 0.0, referred: 0.0 }];
        let report = check_monotonicity(&spec, &alone, 0.1).unwrap();
        assert_eq!(report.min_slope, 0.0);
    }

    #[test]
    fn market_slope_matches_securities_rate() {
        let spec = MechanismSpec::pps(project(), CostFunctionSpec::lmsr(1.0).unwrap()).unwrap();
        let state = [MonotonicityState { prior: 1.0, referred: 0.0 }];
        let report = check_monotonicity(&spec, &state, 0.01).unwrap();
        // the rate falls towards one as q grows, so the last step is the flattest
        let q_end = crate::market::securities_for(spec.market().unwrap(), 0.0, 4.0).unwrap();
        let floor = marginal_securities_per_unit(spec.market().unwrap(), q_end) - 1.0;
        assert!(report.min_slope >= floor - 1e-9);
        assert!(report.min_slope <= floor + 0.01);
    }

    #[test]
    fn ppb_is_flat() {
        let report = check_monotonicity(&MechanismSpec::ppb(project()), &states(), 0.1).unwrap();
        assert_eq!(report.min_slope, 0.0);
        assert!(!report.incentivizing);
        assert_eq!(report.min_marginal_securities, None);
    }

    #[test]
    fn states_must_leave_room() {
        let spec = MechanismSpec::ppb(project());
        let full = [MonotonicityState { prior: 3.0, referred: 1.0 }];
        assert!(check_monotonicity(&spec, &full, 0.1).is_err());
    }
}
