//! The five provision point mechanisms: settlement, utilities, equilibrium
//! formulas, desirability thresholds and worst-case bonus bounds.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::ProjectSpec;
use crate::error::{Error, Result};
use crate::market::{CostFunction, CostFunctionSpec};
use crate::rbf::RbfSpec;

mod bounds;
mod equilibrium;
mod settlement;

pub use bounds::{worst_case_bonus, WorstCase, WorstCaseBound};
pub use equilibrium::{
    desirability_threshold, desirability_threshold_lmsr, equilibrium_cap, equilibrium_profile,
    sigma_bound, socially_desirable, support_size_and_diameter, AgentSet, EquilibriumProfile,
};
pub use settlement::{allocate, settle, utility, AgentAllocation, AgentSettlement, Allocation, SettlementReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MechanismKind {
    /// Provision point, no bonus.
    #[serde(rename = "PPB")]
    Ppb,
    /// Provision point with a proportional refund bonus budget B.
    #[serde(rename = "PPR")]
    Ppr,
    /// Provision point with securities from a cost-function market.
    #[serde(rename = "PPS")]
    Pps,
    /// PPR plus referral bonuses.
    #[serde(rename = "REPP_R")]
    ReppR,
    /// PPS plus referral securities.
    #[serde(rename = "REPP_S")]
    ReppS,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 5] = [
        MechanismKind::Ppb,
        MechanismKind::Ppr,
        MechanismKind::Pps,
        MechanismKind::ReppR,
        MechanismKind::ReppS,
    ];

    /// Pays referral bonuses.
    pub fn has_referrals(self) -> bool {
        matches!(self, MechanismKind::ReppR | MechanismKind::ReppS)
    }

    /// Prices contributions through a market, so order matters.
    pub fn is_sequential(self) -> bool {
        matches!(self, MechanismKind::Pps | MechanismKind::ReppS)
    }

    pub fn uses_budget(self) -> bool {
        matches!(self, MechanismKind::Ppr | MechanismKind::ReppR)
    }

    /// The same mechanism without referral bonuses.
    pub fn base(self) -> MechanismKind {
        match self {
            MechanismKind::ReppR => MechanismKind::Ppr,
            MechanismKind::ReppS => MechanismKind::Pps,
            k => k,
        }
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MechanismKind::Ppb => "PPB",
            MechanismKind::Ppr => "PPR",
            MechanismKind::Pps => "PPS",
            MechanismKind::ReppR => "REPP-R",
            MechanismKind::ReppS => "REPP-S",
        })
    }
}

/// A fully parameterized mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MechanismDoc", into = "MechanismDoc")]
pub struct MechanismSpec {
    kind: MechanismKind,
    project: ProjectSpec,
    refund_budget: Option<f64>,
    market: Option<CostFunctionSpec>,
    rbf: Option<RbfSpec>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MechanismDoc {
    kind: MechanismKind,
    h0: f64,
    #[serde(rename = "T")]
    deadline: f64,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    budget: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    market: Option<CostFunctionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rbf: Option<RbfSpec>,
}

impl TryFrom<MechanismDoc> for MechanismSpec {
    type Error = Error;

    fn try_from(doc: MechanismDoc) -> Result<Self> {
        MechanismSpec::new(
            doc.kind,
            ProjectSpec::new(doc.h0, doc.deadline)?,
            doc.budget,
            doc.market,
            doc.rbf,
        )
    }
}

impl From<MechanismSpec> for MechanismDoc {
    fn from(s: MechanismSpec) -> Self {
        MechanismDoc {
            kind: s.kind,
            h0: s.project.provision_point,
            deadline: s.project.deadline,
            budget: s.refund_budget,
            market: s.market,
            rbf: s.rbf,
        }
    }
}

impl MechanismSpec {
    /// Validates that exactly the parameters the kind needs are present.
    pub fn new(
        kind: MechanismKind,
        project: ProjectSpec,
        refund_budget: Option<f64>,
        market: Option<CostFunctionSpec>,
        rbf: Option<RbfSpec>,
    ) -> Result<Self> {
        match (kind.uses_budget(), refund_budget) {
            (true, None) => return Err(Error::param("B", format!("{kind} needs a refund budget"))),
            (true, Some(b)) if !(b.is_finite() && b > 0.0) => {
                return Err(Error::param("B", "refund budget must be positive"))
            }
            (false, Some(_)) => return Err(Error::param("B", format!("{kind} takes no refund budget"))),
            _ => {}
        }
        match (kind.is_sequential(), market.is_some()) {
            (true, false) => return Err(Error::param("market", format!("{kind} needs a cost function"))),
            (false, true) => return Err(Error::param("market", format!("{kind} takes no cost function"))),
            _ => {}
        }
        match (kind.has_referrals(), rbf.is_some()) {
            (true, false) => return Err(Error::param("rbf", format!("{kind} needs a referral bonus function"))),
            (false, true) => return Err(Error::param("rbf", format!("{kind} pays no referral bonus"))),
            _ => {}
        }
        Ok(MechanismSpec {
            kind,
            project,
            refund_budget,
            market,
            rbf,
        })
    }

    pub fn ppb(project: ProjectSpec) -> Self {
        MechanismSpec {
            kind: MechanismKind::Ppb,
            project,
            refund_budget: None,
            market: None,
            rbf: None,
        }
    }

    pub fn ppr(project: ProjectSpec, budget: f64) -> Result<Self> {
        Self::new(MechanismKind::Ppr, project, Some(budget), None, None)
    }

    pub fn pps(project: ProjectSpec, market: CostFunctionSpec) -> Result<Self> {
        Self::new(MechanismKind::Pps, project, None, Some(market), None)
    }

    pub fn repp_r(project: ProjectSpec, budget: f64, rbf: RbfSpec) -> Result<Self> {
        Self::new(MechanismKind::ReppR, project, Some(budget), None, Some(rbf))
    }

    pub fn repp_s(project: ProjectSpec, market: CostFunctionSpec, rbf: RbfSpec) -> Result<Self> {
        Self::new(MechanismKind::ReppS, project, None, Some(market), Some(rbf))
    }

    /// The same parameters without the referral bonus.
    pub fn without_referrals(&self) -> Self {
        MechanismSpec {
            kind: self.kind.base(),
            rbf: None,
            ..*self
        }
    }

    pub fn kind(&self) -> MechanismKind {
        self.kind
    }

    pub fn project(&self) -> ProjectSpec {
        self.project
    }

    /// h⁰.
    pub fn provision_point(&self) -> f64 {
        self.project.provision_point
    }

    /// T.
    pub fn deadline(&self) -> f64 {
        self.project.deadline
    }

    pub fn refund_budget(&self) -> Option<f64> {
        self.refund_budget
    }

    pub fn market(&self) -> Option<&CostFunctionSpec> {
        self.market.as_ref()
    }

    pub fn rbf(&self) -> Option<&RbfSpec> {
        self.rbf.as_ref()
    }

    /// σ, or zero when no referral bonus is paid.
    pub fn sigma(&self) -> f64 {
        self.rbf.map_or(0.0, |r| r.cap)
    }

    pub(crate) fn budget_or_err(&self, operation: &'static str) -> Result<f64> {
        self.refund_budget.ok_or_else(|| self.unsupported(operation))
    }

    pub(crate) fn market_or_err(&self, operation: &'static str) -> Result<&CostFunctionSpec> {
        self.market.as_ref().ok_or_else(|| self.unsupported(operation))
    }

    pub(crate) fn rbf_or_err(&self, operation: &'static str) -> Result<&RbfSpec> {
        self.rbf.as_ref().ok_or_else(|| self.unsupported(operation))
    }

    pub(crate) fn unsupported(&self, operation: &'static str) -> Error {
        Error::Unsupported {
            operation,
            kind: self.kind.to_string(),
        }
    }

    /// `C0⁻¹(h⁰ + C0(0))`: securities issued when h⁰ is raised in one go.
    pub fn full_funding_securities(&self) -> Result<f64> {
        let cf = self.market_or_err("full_funding_securities")?;
        cf.c0_inverse(self.provision_point() + cf.c0(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rbf::RbfFamily;

    fn project() -> ProjectSpec {
        ProjectSpec::new(4.0, 10.0).unwrap()
    }

    #[test]
    fn parameters_must_match_kind() {
        let rbf = RbfSpec::tanh(0.4).unwrap();
        let lmsr = CostFunctionSpec::lmsr(1.0).unwrap();
        assert!(MechanismSpec::ppr(project(), 0.0).is_err());
        assert!(MechanismSpec::new(MechanismKind::Ppr, project(), None, None, None).is_err());
        assert!(MechanismSpec::new(MechanismKind::Ppb, project(), Some(1.0), None, None).is_err());
        assert!(MechanismSpec::new(MechanismKind::Ppr, project(), Some(1.0), None, Some(rbf)).is_err());
        assert!(MechanismSpec::new(MechanismKind::ReppS, project(), None, Some(lmsr), None).is_err());
        assert!(MechanismSpec::new(MechanismKind::Pps, project(), None, None, None).is_err());
        assert!(MechanismSpec::repp_s(project(), lmsr, rbf).is_ok());
    }

    #[test]
    fn json_shape() {
        let text = r#"{"kind":"REPP_R","h0":4,"T":10,"B":1,"rbf":{"family":"arctan_scaled","cap":0.4}}"#;
        let spec: MechanismSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.kind(), MechanismKind::ReppR);
        assert_eq!(spec.refund_budget(), Some(1.0));
        assert_eq!(spec.rbf().unwrap().family, RbfFamily::ArctanScaled);
        assert_eq!(spec.rbf().unwrap().scale, 1.0);
        let back: MechanismSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);

        let pps: MechanismSpec =
            serde_json::from_str(r#"{"kind":"PPS","h0":4,"T":1,"market":{"family":"lmsr","b":0.5}}"#).unwrap();
        assert_eq!(pps.market().unwrap().liquidity(), 0.5);

        assert!(serde_json::from_str::<MechanismSpec>(r#"{"kind":"PPR","h0":4,"T":1}"#).is_err());
        assert!(serde_json::from_str::<MechanismSpec>(r#"{"kind":"PPB","h0":4,"T":1,"x":1}"#).is_err());
        assert!(serde_json::from_str::<MechanismSpec>(r#"{"kind":"PPB","h0":-4,"T":1}"#).is_err());
    }

    #[test]
    fn stripping_referrals() {
        let spec = MechanismSpec::repp_r(project(), 1.0, RbfSpec::tanh(0.4).unwrap()).unwrap();
        let base = spec.without_referrals();
        assert_eq!(base, MechanismSpec::ppr(project(), 1.0).unwrap());
        assert_eq!(base.sigma(), 0.0);
    }
}
