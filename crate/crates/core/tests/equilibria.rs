use proptest::prelude::*;
use repp_core::domain::{AgentId, ProjectSpec, SocialNetwork};
use repp_core::market::CostFunctionSpec;
use repp_core::mechanisms::{equilibrium_cap, equilibrium_profile, sigma_bound, MechanismSpec};
use repp_core::oracle::{check_sgpe, find_psne, is_psne, GridGame};
use repp_core::rbf::RbfSpec;

fn project() -> ProjectSpec {
    ProjectSpec::new(4.0, 10.0).unwrap()
}

#[test]
fn ppr_equilibria_fund_exactly_within_caps() {
    let spec = MechanismSpec::ppr(project(), 1.0).unwrap();
    let net = SocialNetwork::complete(&[3.0, 3.0]).unwrap();
    let eq = find_psne(&GridGame::new(spec, net.clone(), 0.2).unwrap()).unwrap();
    assert!(!eq.is_empty());
    for p in &eq {
        assert!(p.funded);
        assert!((p.contributions.values().sum::<f64>() - 4.0).abs() < 1e-9);
        assert!(p.contributions.values().all(|&x| x <= 2.4 + 1e-9));
    }
    let canonical = equilibrium_profile(&spec, &net).unwrap().unwrap();
    assert!(eq.iter().any(|p| p.contributions == canonical.contributions));
}

#[test]
fn repp_s_two_agents_any_arrival_order() {
    for arrivals in [[0.0, 1.0], [1.0, 0.0], [0.0, 0.0]] {
        let net = SocialNetwork::complete(&[3.0, 2.5]).unwrap().with_arrivals(&arrivals).unwrap();
        let base = MechanismSpec::repp_s(project(), CostFunctionSpec::lmsr(0.5).unwrap(), RbfSpec::tanh(0.1).unwrap())
            .unwrap();
        let sigma = 0.5 * sigma_bound(&base, &net).unwrap();
        let spec =
            MechanismSpec::repp_s(project(), CostFunctionSpec::lmsr(0.5).unwrap(), RbfSpec::tanh(sigma).unwrap()).unwrap();
        let profile = equilibrium_profile(&spec, &net).unwrap().unwrap();
        let verdict = check_sgpe(&GridGame::new(spec, net, 0.25).unwrap(), &profile).unwrap();
        assert!(verdict.holds, "{arrivals:?}: {verdict:?}");
    }
}

#[test]
fn cap_depends_on_outstanding_securities_only_for_markets() {
    let spec = MechanismSpec::repp_r(project(), 1.0, RbfSpec::tanh(0.4).unwrap()).unwrap();
    assert_eq!(
        equilibrium_cap(&spec, 3.0, Some(5.0)).unwrap(),
        equilibrium_cap(&spec, 3.0, None).unwrap()
    );
    let pps = MechanismSpec::pps(project(), CostFunctionSpec::lmsr(1.0).unwrap()).unwrap();
    assert!(equilibrium_cap(&pps, 3.0, Some(2.0)).unwrap() > equilibrium_cap(&pps, 3.0, Some(0.0)).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simultaneous_profiles_pass_the_oracle(
        thetas in prop::collection::vec(1.0f64..4.0, 2..=4),
        which in 0usize..3,
        budget in 0.2f64..1.5,
        sigma_frac in 0.05f64..0.95,
    ) {
        let net = SocialNetwork::complete(&thetas).unwrap();
        let spec = match which {
            0 => MechanismSpec::ppb(project()),
            1 => MechanismSpec::ppr(project(), budget).unwrap(),
            _ => {
                let probe = MechanismSpec::repp_r(project(), budget, RbfSpec::tanh(0.1).unwrap()).unwrap();
                let bound = sigma_bound(&probe, &net).unwrap();
                prop_assume!(bound > 0.01);
                MechanismSpec::repp_r(project(), budget, RbfSpec::tanh(sigma_frac * bound).unwrap()).unwrap()
            }
        };
        let Some(profile) = equilibrium_profile(&spec, &net).unwrap() else {
            return Ok(());
        };
        prop_assert!((profile.total() - 4.0).abs() < 1e-9);
        let verdict = is_psne(&GridGame::new(spec, net, 0.1).unwrap(), &profile).unwrap();
        prop_assert!(verdict.holds, "{:?}", verdict);
    }

    #[test]
    fn sequential_profiles_pass_the_oracle(
        thetas in prop::collection::vec(1.5f64..4.0, 2..=3),
        arrivals in prop::collection::vec(0.0f64..5.0, 3),
        b in 0.3f64..1.5,
        referral in any::<bool>(),
        sigma_frac in 0.05f64..0.95,
    ) {
        let n = thetas.len();
        let net = SocialNetwork::complete(&thetas).unwrap().with_arrivals(&arrivals[..n]).unwrap();
        let lmsr = CostFunctionSpec::lmsr(b).unwrap();
        let spec = if referral {
            let probe = MechanismSpec::repp_s(project(), lmsr, RbfSpec::tanh(0.1).unwrap()).unwrap();
            let bound = sigma_bound(&probe, &net).unwrap();
            prop_assume!(bound > 0.01);
            MechanismSpec::repp_s(project(), lmsr, RbfSpec::tanh(sigma_frac * bound).unwrap()).unwrap()
        } else {
            MechanismSpec::pps(project(), lmsr).unwrap()
        };
        let Some(profile) = equilibrium_profile(&spec, &net).unwrap() else {
            return Ok(());
        };
        for a in net.agents() {
            prop_assert_eq!(profile.times[&a.id], a.arrival);
        }
        prop_assert!(profile.contribution(AgentId(1)) >= 0.0);
        let verdict = check_sgpe(&GridGame::new(spec, net, 0.5).unwrap(), &profile).unwrap();
        prop_assert!(verdict.holds, "{:?}", verdict);
    }
}
