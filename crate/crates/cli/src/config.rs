use std::path::Path;

use ivdtr::{Error, Result, RewardBounds, WeightSpec};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

fn default_n_train() -> usize {
    1000
}

fn default_reps() -> usize {
    100
}

fn default_n_eval() -> usize {
    100_000
}

fn default_threshold() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub c1: OneOrMany,
    pub xi: OneOrMany,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_reps")]
    pub replications: usize,
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    #[serde(default = "default_threshold")]
    pub stage1_signal_threshold: f64,
}

/// JSON run configuration. Command-line flags take precedence.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub reward_bounds: Option<RewardBounds>,
    pub covariate_dims: Option<Vec<usize>>,
    pub lambda: Option<WeightSpec>,
    pub depth: Option<usize>,
    pub crossfit: Option<usize>,
    pub baseline: Option<String>,
    pub seed: Option<u64>,
    pub clip: Option<f64>,
    pub tie: Option<i8>,
    pub strict: Option<bool>,
    pub sim: Option<SimSection>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::invalid(format!("invalid config: {e}")))
            }
        }
    }
}

/// Parses `w|b|m` or a comma list of `const:STAGE:VALUE`; unlisted stages get 1/2.
pub fn parse_lambda(spec: &str, k: usize) -> Result<WeightSpec> {
    let spec = spec.trim();
    let w = match spec {
        "w" | "worst" => WeightSpec::Worst,
        "b" | "best" => WeightSpec::Best,
        "m" | "minmax" => WeightSpec::Minmax,
        _ => {
            let mut v = vec![0.5; k];
            for part in spec.split(',') {
                let fields: Vec<&str> = part.trim().split(':').collect();
                let [kind, stage, value] = fields.as_slice() else {
                    return Err(Error::invalid(format!("malformed lambda spec {part:?}")));
                };
                if *kind != "const" {
                    return Err(Error::invalid(format!("malformed lambda spec {part:?}")));
                }
                let stage: usize =
                    stage.parse().map_err(|_| Error::invalid(format!("bad stage in lambda spec {part:?}")))?;
                let value: f64 =
                    value.parse().map_err(|_| Error::invalid(format!("bad value in lambda spec {part:?}")))?;
                if stage == 0 || stage > k {
                    return Err(Error::invalid(format!("lambda stage {stage} outside 1..={k}")));
                }
                v[stage - 1] = value;
            }
            WeightSpec::PerStage(v)
        }
    };
    w.validate(k)?;
    Ok(w)
}
