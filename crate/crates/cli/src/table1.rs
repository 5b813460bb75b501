use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use clap::Args;
use repp_core::domain::ProjectSpec;
use repp_core::market::CostFunctionSpec;
use repp_core::mechanisms::{desirability_threshold, desirability_threshold_lmsr, equilibrium_cap, MechanismSpec};
use repp_core::rbf::RbfSpec;

use crate::config::ConfigError;
use crate::{Context, Outcome};

#[derive(Args, Debug, Clone, Default)]
pub struct Table1Args {
    /// Value of the contributing agent.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Referral bonus cap.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Provision point.
    #[arg(long)]
    pub h0: Option<f64>,
    /// Refund budget.
    #[arg(long)]
    pub budget: Option<f64>,
    /// LMSR liquidity.
    #[arg(long)]
    pub b: Option<f64>,
    /// Agents with positive value.
    #[arg(long)]
    pub n: Option<usize>,
    /// Diameter of the valued subgraph.
    #[arg(long)]
    pub d: Option<usize>,
    /// Securities outstanding when the agent arrives.
    #[arg(long, default_value_t = 0.0)]
    pub q: f64,
    /// Total value of all agents; defaults to n·θ.
    #[arg(long)]
    pub net_value: Option<f64>,
    /// Total value of the initially aware agents; defaults to the net value.
    #[arg(long)]
    pub aware_net_value: Option<f64>,
}

struct Row {
    label: &'static str,
    contribution: String,
    desirability: String,
    condition: String,
}

impl Row {
    fn missing(label: &'static str) -> Self {
        let na = "insufficient params".to_owned();
        Row {
            label,
            contribution: na.clone(),
            desirability: na.clone(),
            condition: na,
        }
    }
}

fn verdict(holds: bool) -> &'static str {
    if holds {
        "holds"
    } else {
        "fails"
    }
}

type Built = Result<Option<Row>, repp_core::Error>;

pub fn render(args: &Table1Args) -> Result<String, ConfigError> {
    let a = args;
    let net = a.net_value.or_else(|| Some(a.n? as f64 * a.theta?));
    let aware = a.aware_net_value.or(net);
    let project = a.h0.map(|h0| ProjectSpec::new(h0, 1.0)).transpose().map_err(err)?;
    let rbf = a.sigma.map(RbfSpec::tanh).transpose().map_err(err)?;
    let market = a.b.map(CostFunctionSpec::lmsr).transpose().map_err(err)?;
    let nd = a.n.zip(a.d).map(|(n, d)| (n, d.max(1)));

    let ppr = || -> Built {
        let (Some(p), Some(budget), Some(theta), Some(v)) = (project, a.budget, a.theta, aware) else {
            return Ok(None);
        };
        let spec = MechanismSpec::ppr(p, budget)?;
        let (set, tau) = desirability_threshold(&spec, 0, 1)?;
        let hi = v - p.provision_point;
        Ok(Some(Row {
            label: "PPR",
            contribution: format!("{:.6}", equilibrium_cap(&spec, theta, None)?),
            desirability: format!("({set}, {tau:.6})"),
            condition: format!("B ∈ (0, {hi:.6}]: {}", verdict(budget > 0.0 && budget <= hi)),
        }))
    };
    let repp_r = || -> Built {
        let (Some(p), Some(budget), Some(theta), Some(rbf), Some((n, d)), Some(v)) =
            (project, a.budget, a.theta, rbf, nd, net)
        else {
            return Ok(None);
        };
        let spec = MechanismSpec::repp_r(p, budget, rbf)?;
        let (set, tau) = desirability_threshold(&spec, n, d)?;
        let hi = v - p.provision_point - (n * d) as f64 * spec.sigma();
        Ok(Some(Row {
            label: "REPP-R",
            contribution: format!("{:.6}", equilibrium_cap(&spec, theta, None)?),
            desirability: format!("({set}, {tau:.6})"),
            condition: format!("B ∈ (0, {hi:.6}): {}", verdict(budget > 0.0 && budget < hi)),
        }))
    };
    let pps = |lmsr: bool| -> Built {
        let (Some(p), Some(m), Some(theta), Some(v)) = (project, market, a.theta, aware) else {
            return Ok(None);
        };
        let spec = MechanismSpec::pps(p, m)?;
        let contribution = format!("{:.6}", equilibrium_cap(&spec, theta, Some(a.q))?);
        if lmsr {
            let (set, tau) = desirability_threshold_lmsr(&spec, 0, 1)?;
            let hi = (v - p.provision_point) / std::f64::consts::LN_2;
            Ok(Some(Row {
                label: "LMSR-PPS",
                contribution,
                desirability: format!("({set}, {tau:.6})"),
                condition: format!("b ∈ (0, {hi:.6}): {}", verdict(m.liquidity() < hi)),
            }))
        } else {
            let (set, tau) = desirability_threshold(&spec, 0, 1)?;
            Ok(Some(Row {
                label: "PPS",
                contribution,
                desirability: format!("({set}, {tau:.6})"),
                condition: format!("ϑ = {v:.6} > {tau:.6}: {}", verdict(v > tau)),
            }))
        }
    };
    let repp_s = |lmsr: bool| -> Built {
        let (Some(p), Some(m), Some(theta), Some(rbf), Some((n, d)), Some(v)) = (project, market, a.theta, rbf, nd, net)
        else {
            return Ok(None);
        };
        let spec = MechanismSpec::repp_s(p, m, rbf)?;
        let contribution = format!("{:.6}", equilibrium_cap(&spec, theta, Some(a.q))?);
        let nd_sigma = (n * d) as f64 * spec.sigma();
        if lmsr {
            let (set, tau) = desirability_threshold_lmsr(&spec, n, d)?;
            let hi = (v - p.provision_point - nd_sigma) / std::f64::consts::LN_2;
            Ok(Some(Row {
                label: "LMSR-REPP-S",
                contribution,
                desirability: format!("({set}, {tau:.6})"),
                condition: format!("b ∈ (0, {hi:.6}): {}", verdict(m.liquidity() < hi)),
            }))
        } else {
            let (set, tau) = desirability_threshold(&spec, n, d)?;
            let hi = (v - spec.full_funding_securities()?) / (n * d) as f64;
            Ok(Some(Row {
                label: "REPP-S",
                contribution,
                desirability: format!("({set}, {tau:.6})"),
                condition: format!("σ < {hi:.6}: {}", verdict(spec.sigma() < hi)),
            }))
        }
    };

    let rows = [
        ("PPR", ppr()),
        ("REPP-R", repp_r()),
        ("PPS", pps(false)),
        ("REPP-S", repp_s(false)),
        ("LMSR-PPS", pps(true)),
        ("LMSR-REPP-S", repp_s(true)),
    ];
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>20}  {:<24} condition",
        "mechanism", "contribution", "desirability"
    );
    for (label, row) in rows {
        let row = row.map_err(err)?.unwrap_or_else(|| Row::missing(label));
        let _ = writeln!(
            out,
            "{:<12} {:>20}  {:<24} {}",
            row.label, row.contribution, row.desirability, row.condition
        );
    }
    Ok(out)
}

fn err(e: repp_core::Error) -> ConfigError {
    ConfigError(e.to_string())
}

pub fn run(ctx: &Context, args: &Table1Args) -> Result<Outcome, ConfigError> {
    let text = render(args)?;
    if !ctx.quiet {
        print!("{text}");
    }
    if let Some(dir) = &ctx.out {
        fs::create_dir_all(dir).map_err(|e| ConfigError(format!("{}: {e}", dir.display())))?;
        let path: &Path = &dir.join("table1.txt");
        fs::write(path, &text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    }
    Ok(Outcome::Ok)
}
