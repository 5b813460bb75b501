//! Referral bonus functions.
//!
//! An RBF maps the mass generated by an agent's referrals (contributions in
//! REPP-R, securities in REPP-S) to a bonus. Admissible functions are smooth,
//! strictly increasing, concave, vanish at zero and stay strictly below their
//! cap σ.

use std::f64::consts::FRAC_2_PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RbfFamily {
    Tanh,
    /// `2·(1/(1+e^{-r}) − 1/2)`, the shifted logistic rescaled to reach 1.
    LogisticShifted,
    /// `(2/π)·arctan(r)`.
    ArctanScaled,
}

impl RbfFamily {
    /// The unit-capped shape `f` with `sup f = 1`.
    fn unit(self, r: f64) -> f64 {
        match self {
            RbfFamily::Tanh => r.tanh(),
            RbfFamily::LogisticShifted => 2.0 * (1.0 / (1.0 + (-r).exp()) - 0.5),
            RbfFamily::ArctanScaled => FRAC_2_PI * r.atan(),
        }
    }
}

/// `s(R) = cap · f(R / scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRbf")]
pub struct RbfSpec {
    pub family: RbfFamily,
    pub cap: f64,
    pub scale: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRbf {
    family: RbfFamily,
    cap: f64,
    #[serde(default = "unit_scale")]
    scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl TryFrom<RawRbf> for RbfSpec {
    type Error = Error;

    fn try_from(raw: RawRbf) -> Result<Self> {
        RbfSpec::new(raw.family, raw.cap, raw.scale)
    }
}

impl RbfSpec {
    pub fn new(family: RbfFamily, cap: f64, scale: f64) -> Result<Self> {
        if !(cap.is_finite() && cap > 0.0) {
            return Err(Error::param("cap", "must be positive"));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::param("scale", "must be positive"));
        }
        Ok(RbfSpec { family, cap, scale })
    }

    pub fn tanh(cap: f64) -> Result<Self> {
        Self::new(RbfFamily::Tanh, cap, 1.0)
    }

    /// Evaluates `s(R)`; `R` must be nonnegative.
    pub fn eval(&self, referred: f64) -> Result<f64> {
        if referred.is_nan() || referred < 0.0 {
            return Err(Error::Domain {
                function: "rbf",
                value: referred,
            });
        }
        Ok(self.bonus(referred))
    }
}

/// A referral bonus function. Implemented by [`RbfSpec`]; custom shapes can
/// be plugged into [`check_conditions`].
pub trait ReferralBonus {
    /// `s(R)` for `R ≥ 0`.
    fn bonus(&self, referred: f64) -> f64;
    /// The advertised supremum σ.
    fn cap(&self) -> f64;
}

impl ReferralBonus for RbfSpec {
    fn bonus(&self, referred: f64) -> f64 {
        if referred <= 0.0 {
            return 0.0;
        }
        let v = self.cap * self.family.unit(referred / self.scale);
        // saturating shapes round to exactly 1 far out; keep the bonus strictly
        // below the cap
        if v >= self.cap {
            f64::from_bits(self.cap.to_bits() - 1)
        } else {
            v
        }
    }

    fn cap(&self) -> f64 {
        self.cap
    }
}

/// Outcome of a grid sweep over `[0, grid_max]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub zero_at_origin: bool,
    /// One-sided slopes close up as the step halves (no kinks).
    pub differentiable: bool,
    /// Central-difference gradient positive at every grid point.
    pub increasing: bool,
    /// Second difference ≤ 0 everywhere.
    pub concave: bool,
    /// `s(R) < cap` on the grid.
    pub bounded: bool,
    /// The far-field value approaches the cap, so the cap is the supremum.
    pub supremum_matches_cap: bool,
    pub min_gradient: f64,
    pub max_second_difference: f64,
    pub max_value: f64,
    pub far_field_value: f64,
    pub grid_points: usize,
}

impl ConditionReport {
    pub fn passes(&self) -> bool {
        self.zero_at_origin
            && self.differentiable
            && self.increasing
            && self.concave
            && self.bounded
            && self.supremum_matches_cap
    }
}

const CONCAVITY_SLACK: f64 = 1e-12;
const FAR_FIELD: f64 = 1e9;
const SUPREMUM_REL_TOL: f64 = 1e-3;
const SATURATION_REL: f64 = 1e-12;

/// Numerically checks the admissibility conditions on a uniform grid.
pub fn check_conditions(
    rbf: &(impl ReferralBonus + ?Sized),
    grid_max: f64,
    grid_step: f64,
) -> Result<ConditionReport> {
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return Err(Error::param("grid_step", "must be positive"));
    }
    if !(grid_max.is_finite() && grid_max >= grid_step) {
        return Err(Error::param("grid_max", "must be at least one step"));
    }
    let h = grid_step;
    let steps = (grid_max / h).round() as usize;
    let s = |r: f64| rbf.bonus(r);
    let cap = rbf.cap();

    let mut report = ConditionReport {
        zero_at_origin: s(0.0).abs() <= 1e-15,
        differentiable: true,
        increasing: true,
        concave: true,
        bounded: true,
        supremum_matches_cap: false,
        min_gradient: f64::INFINITY,
        max_second_difference: f64::NEG_INFINITY,
        max_value: f64::NEG_INFINITY,
        far_field_value: s(FAR_FIELD),
        grid_points: steps + 1,
    };

    for k in 0..=steps {
        let r = k as f64 * h;
        let v = s(r);
        report.max_value = report.max_value.max(v);
        if !v.is_finite() || v >= cap {
            report.bounded = false;
        }

        let gradient = if k == 0 {
            (s(h) - v) / h
        } else {
            (s(r + h) - s(r - h)) / (2.0 * h)
        };
        // this close to the cap the shape is flat in floating point
        let saturated = cap - v <= SATURATION_REL * cap;
        if !saturated {
            report.min_gradient = report.min_gradient.min(gradient);
            if !(gradient > 0.0) {
                report.increasing = false;
            }
        }

        if k > 0 {
            let second = s(r + h) - 2.0 * v + s(r - h);
            report.max_second_difference = report.max_second_difference.max(second);
            if second > CONCAVITY_SLACK {
                report.concave = false;
            }
            // gap between forward and backward slopes shrinks with h for a
            // smooth function and stays put at a kink
            let gap = |step: f64| (s(r + step) - v) / step - (v - s(r - step)) / step;
            let (wide, narrow) = (gap(h), gap(h / 2.0));
            if !wide.is_finite() || !narrow.is_finite() || narrow.abs() > 0.75 * wide.abs() + 1e-9 {
                report.differentiable = false;
            }
        }
    }
    report.supremum_matches_cap = report.far_field_value.is_finite()
        && (report.far_field_value - cap).abs() <= SUPREMUM_REL_TOL * cap;
    Ok(report)
}
