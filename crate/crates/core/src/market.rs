//! Cost-function market maker for the securities-based mechanisms.
//!
//! Only the "project not funded" outcome is traded; the funded-outcome count
//! stays at zero, so the two-outcome LMSR collapses to the one-dimensional
//! `C0(q) = b·ln(1 + e^{q/b})`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A one-dimensional cost function `C0`.
pub trait CostFunction {
    fn c0(&self, q: f64) -> f64;
    /// The `q` with `C0(q) = y`.
    fn c0_inverse(&self, y: f64) -> Result<f64>;
    /// `C0'(q)`, the instantaneous price of one security.
    fn price(&self, q: f64) -> f64;
    /// `ln(1/C0'(q) − 1)`, which must be finite for the marginal rate to
    /// exceed one. Cost functions with `C0' ≥ 1` return `None`.
    fn log_marginal_excess(&self, q: f64) -> Option<f64> {
        let rate = 1.0 / self.price(q);
        (rate > 1.0).then(|| (rate - 1.0).ln())
    }
}

/// Logarithmic market scoring rule with liquidity `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Lmsr {
    b: f64,
}

impl Lmsr {
    pub fn new(b: f64) -> Result<Self> {
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::param("b", "liquidity must be positive"));
        }
        Ok(Lmsr { b })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// The full two-outcome cost `b·ln(e^{q0/b} + e^{q1/b})`.
    pub fn two_outcome_cost(&self, not_funded: f64, funded: f64) -> f64 {
        let (hi, lo) = if not_funded >= funded {
            (not_funded, funded)
        } else {
            (funded, not_funded)
        };
        hi + self.b * ((lo - hi) / self.b).exp().ln_1p()
    }
}

impl TryFrom<f64> for Lmsr {
    type Error = Error;

    fn try_from(b: f64) -> Result<Self> {
        Lmsr::new(b)
    }
}

impl From<Lmsr> for f64 {
    fn from(m: Lmsr) -> f64 {
        m.b
    }
}

impl CostFunction for Lmsr {
    fn c0(&self, q: f64) -> f64 {
        self.two_outcome_cost(q, 0.0)
    }

    fn c0_inverse(&self, y: f64) -> Result<f64> {
        if y.is_nan() || y <= 0.0 {
            return Err(Error::Domain {
                function: "c0_inverse",
                value: y,
            });
        }
        let z = y / self.b;
        let q = if z > 1.0 {
            self.b * (z + (-(-z).exp()).ln_1p())
        } else {
            self.b * z.exp_m1().ln()
        };
        Ok(q)
    }

    fn price(&self, q: f64) -> f64 {
        1.0 / (1.0 + (-q / self.b).exp())
    }

    fn log_marginal_excess(&self, q: f64) -> Option<f64> {
        Some(-q / self.b)
    }
}

/// Serialized form `{"family":"lmsr","b":...}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostFunctionSpec {
    Lmsr { b: Lmsr },
}

impl CostFunctionSpec {
    pub fn lmsr(b: f64) -> Result<Self> {
        Ok(CostFunctionSpec::Lmsr { b: Lmsr::new(b)? })
    }

    pub fn liquidity(&self) -> f64 {
        match self {
            CostFunctionSpec::Lmsr { b } => b.b(),
        }
    }
}

impl CostFunction for CostFunctionSpec {
    fn c0(&self, q: f64) -> f64 {
        match self {
            CostFunctionSpec::Lmsr { b } => b.c0(q),
        }
    }

    fn c0_inverse(&self, y: f64) -> Result<f64> {
        match self {
            CostFunctionSpec::Lmsr { b } => b.c0_inverse(y),
        }
    }

    fn price(&self, q: f64) -> f64 {
        match self {
            CostFunctionSpec::Lmsr { b } => b.price(q),
        }
    }

    fn log_marginal_excess(&self, q: f64) -> Option<f64> {
        match self {
            CostFunctionSpec::Lmsr { b } => b.log_marginal_excess(q),
        }
    }
}

/// Outstanding not-funded securities `q`. Only grows during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MarketState {
    outstanding: f64,
}

impl MarketState {
    pub fn new(outstanding: f64) -> Result<Self> {
        if !(outstanding.is_finite() && outstanding >= 0.0) {
            return Err(Error::param("outstanding", "must be finite and nonnegative"));
        }
        Ok(MarketState { outstanding })
    }

    pub fn outstanding(&self) -> f64 {
        self.outstanding
    }
}

/// Securities bought by paying `x` at outstanding `q`: `C0⁻¹(x + C0(q)) − q`.
pub fn securities_for(cf: &(impl CostFunction + ?Sized), q: f64, x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::NegativeContribution(x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let r = cf.c0_inverse(x + cf.c0(q))? - q;
    Ok(r.max(0.0))
}

/// Allots securities for a contribution and advances the state.
pub fn allot_securities(
    cf: &(impl CostFunction + ?Sized),
    state: MarketState,
    x: f64,
) -> Result<(f64, MarketState)> {
    let r = securities_for(cf, state.outstanding, x)?;
    Ok((
        r,
        MarketState {
            outstanding: state.outstanding + r,
        },
    ))
}

/// `∂r/∂x = 1 / C0'(q)`.
pub fn marginal_securities_per_unit(cf: &(impl CostFunction + ?Sized), q: f64) -> f64 {
    1.0 / cf.price(q)
}

/// Whether the marginal securities rate still exceeds one at `q_max`, which
/// keeps refund payouts strictly increasing in the contribution.
pub fn check_epps_liquidity(cf: &(impl CostFunction + ?Sized), q_max: f64) -> Result<bool> {
    if q_max.is_nan() || q_max < 0.0 {
        return Err(Error::param("q_max", "must be nonnegative"));
    }
    Ok(cf.log_marginal_excess(q_max).is_some())
}
