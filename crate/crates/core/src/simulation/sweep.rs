use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_replicate, RunConfig, RunTrace};
use crate::error::{Error, Result};
use crate::mechanisms::MechanismKind;

/// Aggregates over the replicates of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub kind: MechanismKind,
    pub replicates: u64,
    pub funding_rate: f64,
    pub mean_chi: f64,
    pub mean_sponsor_outlay: f64,
    pub mean_coverage: f64,
    /// True when the canonical equilibrium exists in every replicate.
    pub equilibrium_exists: bool,
}

pub fn run_replicates(config: &RunConfig, replicates: u64) -> Result<Vec<RunTrace>> {
    if replicates == 0 {
        return Err(Error::param("replicates", "must be at least 1"));
    }
    (0..replicates)
        .into_par_iter()
        .map(|rep| run_replicate(config, rep))
        .collect()
}

pub fn summarize(config: &RunConfig, traces: &[RunTrace]) -> SummaryRow {
    let n = traces.len().max(1) as f64;
    let mean = |f: &dyn Fn(&RunTrace) -> f64| traces.iter().map(f).sum::<f64>() / n;
    SummaryRow {
        name: config.name.clone(),
        kind: config.mechanism.kind(),
        replicates: traces.len() as u64,
        funding_rate: mean(&|t| if t.settlement.funded { 1.0 } else { 0.0 }),
        mean_chi: mean(&|t| t.settlement.raised),
        mean_sponsor_outlay: mean(&|t| t.settlement.sponsor_outlay),
        mean_coverage: mean(&|t| t.coverage()),
        equilibrium_exists: traces.iter().all(|t| t.equilibrium_exists),
    }
}

/// Runs every configuration `replicates` times, in parallel, and returns one
/// row per configuration in input order.
pub fn sweep(configs: &[RunConfig], replicates: u64) -> Result<Vec<SummaryRow>> {
    configs
        .par_iter()
        .map(|c| Ok(summarize(c, &run_replicates(c, replicates)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ProjectSpec, SocialNetwork};
    use crate::mechanisms::MechanismSpec;
    use crate::rbf::RbfSpec;
    use crate::simulation::{NetworkSource, RandomNetwork};

    #[test]
    fn replicates_are_deterministic() {
        let spec = MechanismSpec::ppr(ProjectSpec::new(4.0, 10.0).unwrap(), 1.0).unwrap();
        let config = RunConfig::new("ppr", spec, SocialNetwork::complete(&[3.0, 3.0]).unwrap());
        let rows = sweep(std::slice::from_ref(&config), 5).unwrap();
        assert_eq!(rows, sweep(&[config], 5).unwrap());
        assert_eq!(rows[0].funding_rate, 1.0);
        assert_eq!(rows[0].replicates, 5);
        assert!(sweep(&[], 0).unwrap().is_empty());
    }

    #[test]
    fn referrals_fund_what_local_awareness_cannot() {
        // the initially aware agents value the project too little on their own
        let net = SocialNetwork::path(&[1.0, 1.0, 3.0, 3.0]).unwrap();
        let project = ProjectSpec::new(4.0, 10.0).unwrap();
        let ppr = RunConfig::new("ppr", MechanismSpec::ppr(project, 1.0).unwrap(), net.clone()).with_initial_aware([1]);
        let repp =
            RunConfig::new("repp", MechanismSpec::repp_r(project, 1.0, RbfSpec::tanh(0.05).unwrap()).unwrap(), net)
                .with_initial_aware([1]);
        let rows = sweep(&[ppr, repp], 1).unwrap();
        assert_eq!(rows[0].funding_rate, 0.0);
        assert_eq!(rows[1].funding_rate, 1.0);
        assert_eq!(rows[1].mean_coverage, 1.0);
    }

    #[test]
    fn random_replicates_differ() {
        let spec = MechanismSpec::ppb(ProjectSpec::new(4.0, 10.0).unwrap());
        let mut config = RunConfig::new("rand", spec, SocialNetwork::complete(&[1.0]).unwrap());
        config.network = NetworkSource::Random(RandomNetwork {
            agents: 6,
            edge_probability: 0.3,
            theta: [0.0, 2.0],
            arrival: [0.0, 5.0],
        });
        let traces = run_replicates(&config, 3).unwrap();
        assert_ne!(traces[0].network, traces[1].network);
        assert_eq!(traces, run_replicates(&config, 3).unwrap());
    }
}
