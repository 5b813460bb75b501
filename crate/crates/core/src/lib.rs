//! Provision point mechanisms for civic crowdfunding.
//!
//! Five mechanisms are modelled: the provision point baseline (PPB), refund
//! bonus (PPR), securities-based refund bonus (PPS) and their
//! referral-embedded variants (REPP-R, REPP-S). Around them sit a sequential
//! contribution simulator with referral diffusion over a social network and a
//! brute-force equilibrium oracle that checks the analytic equilibrium sets
//! on discretized instances.
//!
//! Module map:
//!
//! - [`domain`]: agents, social network, contribution events, referral forest
//! - [`rbf`]: referral bonus functions and their admissibility checks
//! - [`market`]: cost functions (LMSR) and security allotment
//! - [`mechanisms`]: utilities, settlement, equilibrium caps and profiles, bounds
//! - [`simulation`]: the sequential game engine and parameter sweeps
//! - [`oracle`]: PSNE enumeration, subgame-perfection and monotonicity checks

pub mod domain;
pub mod error;
pub mod market;
pub mod mechanisms;
pub mod oracle;
pub mod rbf;
pub mod simulation;

pub use error::{Error, Result};

/// Absolute slack used when deciding whether χ has reached h⁰, scaled by
/// `max(1, h⁰)`. Float sums of contributions that should equal h⁰ land within
/// a few ulps of it.
pub const FUNDING_TOLERANCE: f64 = 1e-9;
