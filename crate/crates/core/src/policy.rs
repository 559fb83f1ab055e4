//! Multi-stage decision rules and their JSON form.

use serde::{Deserialize, Serialize};

use crate::bounds::{mp_interval, weighted_q_unchecked, Interval, WeightSpec};
use crate::data::{history_dim, Arm, Dataset};
use crate::error::{Error, Result};
use crate::nuisance::NuisanceSet;
use crate::tree::TreeRule;

/// Sign of the fitted weighted contrast at a history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastRule {
    pub dim: usize,
    pub nuisance: NuisanceSet,
    pub tail: Interval,
    pub lambda: f64,
    pub tie: Arm,
}

impl ContrastRule {
    pub fn contrast(&self, h: &[f64]) -> f64 {
        let q = |a| {
            let (i, _) = mp_interval(&self.nuisance, h, a, self.tail);
            weighted_q_unchecked(i, self.lambda)
        };
        q(Arm::Plus) - q(Arm::Minus)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum PolicyStage {
    Tree(TreeRule),
    Constant { label: Arm },
    ContrastSign(ContrastRule),
}

impl PolicyStage {
    /// Decision without dimension checks.
    pub fn act(&self, h: &[f64]) -> Arm {
        match self {
            PolicyStage::Tree(t) => t.predict(h),
            PolicyStage::Constant { label } => *label,
            PolicyStage::ContrastSign(c) => Arm::from_sign(c.contrast(h), c.tie),
        }
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            PolicyStage::Tree(t) => t.validate(dim),
            PolicyStage::Constant { .. } => Ok(()),
            PolicyStage::ContrastSign(c) if c.dim != dim => {
                Err(Error::invalid(format!("contrast rule expects {}-dimensional histories, got {dim}", c.dim)))
            }
            PolicyStage::ContrastSign(_) => Ok(()),
        }
    }
}

pub fn evaluate_policy_stage(policy: &PolicyStage, h: &[f64]) -> Result<Arm> {
    policy.check_dim(h.len())?;
    Ok(policy.act(h))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtrKind {
    IvOptimal,
    IvImproved { baseline: String },
    Sra,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dtr {
    pub kind: DtrKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<WeightSpec>,
    pub stages: Vec<PolicyStage>,
}

impl Dtr {
    pub fn constant(label: Arm, k: usize) -> Self {
        Dtr { kind: DtrKind::Constant, lambda: None, stages: vec![PolicyStage::Constant { label }; k] }
    }

    /// All-`-1` regime.
    pub fn standard_of_care(k: usize) -> Self {
        Dtr::constant(Arm::Minus, k)
    }

    /// All-`+1` regime.
    pub fn prospective(k: usize) -> Self {
        Dtr::constant(Arm::Plus, k)
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// Action at stage `k` (1-based), unchecked.
    pub fn act(&self, k: usize, h: &[f64]) -> Arm {
        self.stages[k - 1].act(h)
    }

    pub fn check_schema(&self, covariate_dims: &[usize]) -> Result<()> {
        if self.stages.len() != covariate_dims.len() {
            return Err(Error::invalid(format!(
                "policy has {} stages, data has {}",
                self.stages.len(),
                covariate_dims.len()
            )));
        }
        for (k, s) in self.stages.iter().enumerate() {
            s.check_dim(history_dim(covariate_dims, k + 1))?;
        }
        Ok(())
    }

    /// Actions at stage `k` for every trajectory.
    pub fn actions_on(&self, data: &Dataset, k: usize) -> Vec<Arm> {
        let x = data.histories(k);
        x.rows().map(|h| self.act(k, h)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: Dtr = serde_json::from_str(s)?;
        if d.stages.is_empty() {
            return Err(Error::invalid("policy has no stages"));
        }
        Ok(d)
    }
}
