//! `repp`: batch front end for simulations, equilibrium verification and
//! analytic reports.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use repp_core::rbf::RbfFamily;

mod commands;
mod config;
mod table1;

use config::ConfigError;

#[derive(Parser, Debug)]
#[command(name = "repp", version, about = "Provision point crowdfunding mechanisms: simulate, verify, report")]
struct Cli {
    /// Override the seed of every run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the experiment file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Only print errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every simulation in an experiment file; writes traces and summary.csv.
    Simulate {
        experiment: PathBuf,
        #[arg(long, default_value_t = 1)]
        replicates: u64,
    },
    /// Check the equilibrium profiles of the games in an experiment file.
    VerifyEquilibrium { experiment: PathBuf },
    /// Thresholds, σ-bounds and worst-case payouts for the report blocks.
    Bounds { experiment: PathBuf },
    /// Numeric instantiation of the key-results table.
    Table1(table1::Table1Args),
    /// Grid check of a referral bonus function's admissibility conditions.
    CheckRbf(CheckRbfArgs),
    /// Sanity checks for an LMSR market maker.
    CheckMarket(CheckMarketArgs),
    /// Re-settle a recorded trace.
    Settle {
        #[arg(long)]
        replay: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyArg {
    Tanh,
    LogisticShifted,
    ArctanScaled,
}

impl From<FamilyArg> for RbfFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Tanh => RbfFamily::Tanh,
            FamilyArg::LogisticShifted => RbfFamily::LogisticShifted,
            FamilyArg::ArctanScaled => RbfFamily::ArctanScaled,
        }
    }
}

#[derive(Args, Debug)]
struct CheckRbfArgs {
    #[arg(long, value_enum, default_value = "tanh")]
    family: FamilyArg,
    #[arg(long, default_value_t = 1.0)]
    cap: f64,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 10.0)]
    grid_max: f64,
    #[arg(long, default_value_t = 0.01)]
    grid_step: f64,
}

#[derive(Args, Debug)]
struct CheckMarketArgs {
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, default_value_t = 100.0)]
    q_max: f64,
    /// Random split-versus-lump trials for the path-independence check.
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

/// Successful command outcome.
pub enum Outcome {
    Ok,
    /// A check ran and found a violation.
    Failed,
}

pub struct Context {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

impl Context {
    pub fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

fn dispatch(cli: Cli) -> Result<Outcome, ConfigError> {
    let ctx = Context {
        seed: cli.seed,
        out: cli.out,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Simulate { experiment, replicates } => commands::simulate(&ctx, &experiment, replicates),
        Command::VerifyEquilibrium { experiment } => commands::verify(&ctx, &experiment),
        Command::Bounds { experiment } => commands::bounds(&ctx, &experiment),
        Command::Table1(args) => table1::run(&ctx, &args),
        Command::CheckRbf(a) => commands::check_rbf(&ctx, a.family.into(), a.cap, a.scale, a.grid_max, a.grid_step),
        Command::CheckMarket(a) => commands::check_market(&ctx, a.b, a.q_max, a.samples),
        Command::Settle { replay } => commands::replay(&ctx, &replay),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
