use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repp_core::market::{allot_securities, check_epps_liquidity, marginal_securities_per_unit, CostFunction, Lmsr, MarketState};
use repp_core::mechanisms::{
    desirability_threshold, desirability_threshold_lmsr, equilibrium_profile, sigma_bound, support_size_and_diameter,
    worst_case_bonus, AgentSet, MechanismKind, WorstCase, WorstCaseBound,
};
use repp_core::oracle::{check_sgpe, find_psne, is_psne, GridProfile, PsneVerdict, SgpeVerdict};
use repp_core::rbf::{check_conditions, RbfFamily, RbfSpec};
use repp_core::simulation::{run_replicates, summarize, RunTrace, SummaryRow};
use serde::Serialize;

use crate::config::{load_experiment, read_json, ConfigError, ExperimentFile};
use crate::{Context, Outcome};

fn core_err(e: repp_core::Error) -> ConfigError {
    ConfigError(e.to_string())
}

fn io_err(path: &Path, e: std::io::Error) -> ConfigError {
    ConfigError(format!("{}: {e}", path.display()))
}

fn output_dir(ctx: &Context, file: &ExperimentFile) -> PathBuf {
    ctx.out
        .clone()
        .or_else(|| file.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), ConfigError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ConfigError(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn print_json(ctx: &Context, value: &impl Serialize) {
    if let Ok(text) = serde_json::to_string_pretty(value) {
        ctx.say(text);
    }
}

pub fn simulate(ctx: &Context, path: &Path, replicates: u64) -> Result<Outcome, ConfigError> {
    let file = load_experiment(path)?;
    let dir = output_dir(ctx, &file);
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;

    let mut rows = Vec::with_capacity(file.runs.len());
    for mut run in file.runs.clone() {
        if let Some(seed) = ctx.seed {
            run.seed = seed;
        }
        let traces = run_replicates(&run, replicates).map_err(|e| ConfigError(format!("run {:?}: {e}", run.name)))?;
        for trace in &traces {
            let target = dir.join(format!("trace_{}_{}.json", run.name, trace.replicate));
            write_json(&target, trace)?;
        }
        rows.push(summarize(&run, &traces));
    }

    let summary = dir.join("summary.csv");
    write_summary(&summary, &rows)?;
    for row in &rows {
        ctx.say(format!(
            "{}: {} funded {:.6} of {} replicates, mean χ {:.6}, mean outlay {:.6}, coverage {:.6}, equilibrium {}",
            row.name,
            row.kind,
            row.funding_rate,
            row.replicates,
            row.mean_chi,
            row.mean_sponsor_outlay,
            row.mean_coverage,
            if row.equilibrium_exists { "exists" } else { "absent" },
        ));
    }
    ctx.say(format!("wrote {}", summary.display()));
    Ok(Outcome::Ok)
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), ConfigError> {
    let csv_err = |e: csv::Error| ConfigError(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "name",
        "kind",
        "replicates",
        "funding_rate",
        "mean_chi",
        "mean_sponsor_outlay",
        "mean_coverage",
        "equilibrium_exists",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.name.clone(),
            r.kind.to_string(),
            r.replicates.to_string(),
            format!("{:.6}", r.funding_rate),
            format!("{:.6}", r.mean_chi),
            format!("{:.6}", r.mean_sponsor_outlay),
            format!("{:.6}", r.mean_coverage),
            r.equilibrium_exists.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum GameStatus {
    Holds,
    Counterexample,
    NoEquilibrium,
}

#[derive(Serialize)]
struct GameVerdict {
    name: String,
    kind: MechanismKind,
    status: GameStatus,
    /// "explicit" or "canonical".
    profile_source: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    profile: Option<repp_core::mechanisms::EquilibriumProfile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    psne: Option<PsneVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sgpe: Option<SgpeVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_equilibria: Option<Vec<GridProfile>>,
}

pub fn verify(ctx: &Context, path: &Path) -> Result<Outcome, ConfigError> {
    let file = load_experiment(path)?;
    let mut verdicts = Vec::with_capacity(file.games.len());
    for block in &file.games {
        let named = |e: repp_core::Error| ConfigError(format!("game {:?}: {e}", block.name));
        let game = block.grid_game().map_err(named)?;
        let spec = game.mechanism;
        let (profile, source) = match &block.profile {
            Some(p) => (Some(p.clone()), "explicit"),
            None => (equilibrium_profile(&spec, &game.network).map_err(named)?, "canonical"),
        };
        let grid_equilibria = if block.enumerate && !spec.kind().is_sequential() {
            Some(find_psne(&game).map_err(named)?)
        } else {
            None
        };
        let mut verdict = GameVerdict {
            name: block.name.clone(),
            kind: spec.kind(),
            status: GameStatus::NoEquilibrium,
            profile_source: source,
            profile: profile.clone(),
            psne: None,
            sgpe: None,
            grid_equilibria,
        };
        if let Some(p) = &profile {
            let holds = if spec.kind().is_sequential() {
                let v = check_sgpe(&game, p).map_err(named)?;
                let holds = v.holds;
                verdict.sgpe = Some(v);
                holds
            } else {
                let v = is_psne(&game, p).map_err(named)?;
                let holds = v.holds;
                verdict.psne = Some(v);
                holds
            };
            verdict.status = if holds {
                GameStatus::Holds
            } else {
                GameStatus::Counterexample
            };
        }
        let status = match verdict.status {
            GameStatus::Holds => "holds".to_owned(),
            GameStatus::Counterexample => "COUNTEREXAMPLE".to_owned(),
            GameStatus::NoEquilibrium => "no equilibrium profile exists".to_owned(),
        };
        let extra = verdict
            .grid_equilibria
            .as_ref()
            .map(|e| format!(", {} grid equilibria", e.len()))
            .unwrap_or_default();
        ctx.say(format!("{} [{}, {} profile]: {status}{extra}", block.name, spec.kind(), source));
        verdicts.push(verdict);
    }

    let dir = output_dir(ctx, &file);
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    write_json(&dir.join("verify.json"), &verdicts)?;
    let failed = verdicts.iter().any(|v| matches!(v.status, GameStatus::Counterexample));
    Ok(if failed { Outcome::Failed } else { Outcome::Ok })
}

#[derive(Serialize)]
struct Threshold {
    agents: AgentSet,
    tau: f64,
}

#[derive(Serialize)]
struct FundingCondition {
    threshold: f64,
    net_value: f64,
    holds: bool,
}

#[derive(Serialize)]
struct BoundsReport {
    name: String,
    kind: MechanismKind,
    n: usize,
    d: usize,
    net_value: f64,
    desirability: Threshold,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chain_per_contributor: Option<WorstCaseBound>,
    #[serde(skip_serializing_if = "Option::is_none")]
    single_hub: Option<WorstCaseBound>,
    /// Most securities that can be outstanding.
    #[serde(skip_serializing_if = "Option::is_none")]
    q_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lmsr_funding_condition: Option<FundingCondition>,
}

pub fn bounds(ctx: &Context, path: &Path) -> Result<Outcome, ConfigError> {
    let file = load_experiment(path)?;
    let mut reports = Vec::with_capacity(file.reports.len());
    for block in &file.reports {
        let named = |e: repp_core::Error| ConfigError(format!("report {:?}: {e}", block.name));
        let spec = block.mechanism;
        let kind = spec.kind();
        if kind == MechanismKind::Ppb {
            return Err(ConfigError(format!("report {:?}: no bonus bounds for PPB", block.name)));
        }
        let (n, d) = support_size_and_diameter(&block.network).map_err(named)?;
        let net_value = block.network.net_value();
        let (agents, tau) = desirability_threshold(&spec, n, d).map_err(named)?;
        let mut report = BoundsReport {
            name: block.name.clone(),
            kind,
            n,
            d,
            net_value,
            desirability: Threshold { agents, tau },
            sigma_bound: None,
            chain_per_contributor: None,
            single_hub: None,
            q_max: None,
            lmsr_funding_condition: None,
        };
        if kind.has_referrals() {
            report.sigma_bound = Some(sigma_bound(&spec, &block.network).map_err(named)?);
            report.chain_per_contributor =
                Some(worst_case_bonus(&spec, n, d, WorstCase::ChainPerContributor).map_err(named)?);
            report.single_hub = Some(worst_case_bonus(&spec, n, d, WorstCase::SingleHub).map_err(named)?);
        }
        if kind.is_sequential() {
            let full = spec.full_funding_securities().map_err(named)?;
            report.q_max = Some(full + (n * d) as f64 * spec.sigma());
            let (_, threshold) = desirability_threshold_lmsr(&spec, n, d).map_err(named)?;
            report.lmsr_funding_condition = Some(FundingCondition {
                threshold,
                net_value,
                holds: threshold < net_value,
            });
        }

        ctx.say(format!("{} [{kind}] n={n} d={d} ϑ={net_value:.6}", block.name));
        ctx.say(format!("  desirability ({agents}, {tau:.6})"));
        if let Some(s) = report.sigma_bound {
            ctx.say(format!("  sigma bound {s:.6}"));
        }
        if let (Some(c1), Some(c2)) = (&report.chain_per_contributor, &report.single_hub) {
            ctx.say(format!("  chain per contributor: exact {:.6}, bound {:.6}", c1.exact, c1.bound));
            ctx.say(format!("  single hub: exact {:.6}, bound {:.6}", c2.exact, c2.bound));
        }
        if let Some(q) = report.q_max {
            ctx.say(format!("  q_max {q:.6}"));
        }
        if let Some(c) = &report.lmsr_funding_condition {
            ctx.say(format!(
                "  LMSR funding condition {:.6} < {:.6}: {}",
                c.threshold,
                c.net_value,
                if c.holds { "holds" } else { "fails" }
            ));
        }
        reports.push(report);
    }
    let dir = output_dir(ctx, &file);
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    write_json(&dir.join("bounds.json"), &reports)?;
    Ok(Outcome::Ok)
}

pub fn check_rbf(
    ctx: &Context,
    family: RbfFamily,
    cap: f64,
    scale: f64,
    grid_max: f64,
    grid_step: f64,
) -> Result<Outcome, ConfigError> {
    let spec = RbfSpec::new(family, cap, scale).map_err(core_err)?;
    let report = check_conditions(&spec, grid_max, grid_step).map_err(core_err)?;
    print_json(ctx, &report);
    Ok(if report.passes() { Outcome::Ok } else { Outcome::Failed })
}

#[derive(Serialize)]
struct MarketReport {
    b: f64,
    c0_at_zero: f64,
    q_max: f64,
    marginal_securities_at_q_max: f64,
    liquidity_condition: bool,
    samples: usize,
    max_path_dependence: f64,
}

pub fn check_market(ctx: &Context, b: f64, q_max: f64, samples: usize) -> Result<Outcome, ConfigError> {
    let m = Lmsr::new(b).map_err(core_err)?;
    let liquidity = check_epps_liquidity(&m, q_max).map_err(core_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed.unwrap_or(0));
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let start = MarketState::new(rng.gen_range(0.0..=q_max.max(0.0))).map_err(core_err)?;
        let total: f64 = rng.gen_range(0.0..10.0 * b);
        let pieces = rng.gen_range(1..=8);
        let mut cuts: Vec<f64> = (0..pieces - 1).map(|_| rng.gen_range(0.0..=total)).collect();
        cuts.push(0.0);
        cuts.push(total);
        cuts.sort_by(f64::total_cmp);
        let mut state = start;
        let mut split = 0.0;
        for w in cuts.windows(2) {
            let (r, next) = allot_securities(&m, state, w[1] - w[0]).map_err(core_err)?;
            split += r;
            state = next;
        }
        let (lump, _) = allot_securities(&m, start, total).map_err(core_err)?;
        worst = worst.max((split - lump).abs() / lump.max(1.0));
    }
    let report = MarketReport {
        b,
        c0_at_zero: m.c0(0.0),
        q_max,
        marginal_securities_at_q_max: marginal_securities_per_unit(&m, q_max),
        liquidity_condition: liquidity,
        samples,
        max_path_dependence: worst,
    };
    print_json(ctx, &report);
    Ok(if liquidity && worst <= 1e-9 { Outcome::Ok } else { Outcome::Failed })
}

pub fn replay(ctx: &Context, path: &Path) -> Result<Outcome, ConfigError> {
    let trace: RunTrace = read_json(path)?;
    let settlement = trace.replay().map_err(core_err)?;
    print_json(ctx, &settlement);
    if settlement == trace.settlement {
        ctx.say("replay matches the recorded settlement");
        Ok(Outcome::Ok)
    } else {
        eprintln!("replay differs from the recorded settlement");
        Ok(Outcome::Failed)
    }
}
