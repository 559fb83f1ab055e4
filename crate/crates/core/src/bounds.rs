//! Manski-Pepper intervals for a binary instrument, and the lambda-weighted
//! combination of their ends.
//!
//! The instrument must be coded so that `z = +1` is the encouragement arm.

use serde::{Deserialize, Serialize};

use crate::data::Arm;
use crate::error::{Error, Result};
use crate::nuisance::{NuisanceSet, OutcomeModel, Propensity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Interval { lower, upper }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains_approx(&self, v: f64, tol: f64) -> bool {
        v >= self.lower - tol && v <= self.upper + tol
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }
}

/// Per-stage reward ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct RewardBounds {
    stages: Vec<Interval>,
}

impl RewardBounds {
    pub fn new(stages: Vec<Interval>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::invalid("reward bounds need at least one stage"));
        }
        for (k, s) in stages.iter().enumerate() {
            if !(s.lower.is_finite() && s.upper.is_finite() && s.lower <= s.upper) {
                return Err(Error::invalid(format!(
                    "reward bounds for stage {} are not an ordered finite pair",
                    k + 1
                )));
            }
        }
        Ok(RewardBounds { stages })
    }

    pub fn uniform(k: usize, lower: f64, upper: f64) -> Self {
        RewardBounds::new(vec![Interval::new(lower, upper); k]).expect("valid uniform bounds")
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// Range of the reward at stage `k` (1-based).
    pub fn stage(&self, k: usize) -> Interval {
        self.stages[k - 1]
    }

    /// Range of the cumulative reward from stage `k` onward.
    pub fn tail(&self, k: usize) -> Interval {
        let s = &self.stages[k - 1..];
        Interval::new(s.iter().map(|i| i.lower).sum(), s.iter().map(|i| i.upper).sum())
    }

    /// Sum of range widths from stage `k` onward; zero past the last stage.
    pub fn spread_from(&self, k: usize) -> f64 {
        self.stages.iter().skip(k - 1).map(Interval::width).sum()
    }

    /// Returns the first `(trajectory, stage)` whose reward is out of range.
    pub fn check(&self, data: &crate::data::Dataset) -> Result<()> {
        if data.num_stages() != self.num_stages() {
            return Err(Error::invalid(format!(
                "reward bounds cover {} stages, data has {}",
                self.num_stages(),
                data.num_stages()
            )));
        }
        for (i, t) in data.trajectories().iter().enumerate() {
            for (k, s) in t.stages.iter().enumerate() {
                if !self.stages[k].contains_approx(s.reward, 1e-9) {
                    return Err(Error::invalid(format!(
                        "row {}: reward r{} = {} outside declared bounds [{}, {}]",
                        i + 1,
                        k + 1,
                        s.reward,
                        self.stages[k].lower,
                        self.stages[k].upper
                    )));
                }
            }
        }
        Ok(())
    }
}

impl TryFrom<Vec<[f64; 2]>> for RewardBounds {
    type Error = Error;
    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        RewardBounds::new(v.into_iter().map(|[l, u]| Interval::new(l, u)).collect())
    }
}

impl From<RewardBounds> for Vec<[f64; 2]> {
    fn from(b: RewardBounds) -> Self {
        b.stages.iter().map(|i| [i.lower, i.upper]).collect()
    }
}

/// Per-stage weight on the lower end of the Q interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSpec {
    Worst,
    Best,
    Minmax,
    PerStage(Vec<f64>),
}

impl WeightSpec {
    pub fn validate(&self, k: usize) -> Result<()> {
        if let WeightSpec::PerStage(v) = self {
            if v.len() != k {
                return Err(Error::invalid(format!("lambda lists {} stages, expected {k}", v.len())));
            }
            if v.iter().any(|l| !(0.0..=1.0).contains(l)) {
                return Err(Error::invalid("lambda out of range [0, 1]"));
            }
        }
        Ok(())
    }

    /// Weight at stage `k` (1-based).
    pub fn at(&self, k: usize) -> f64 {
        match self {
            WeightSpec::Worst => 1.0,
            WeightSpec::Best => 0.0,
            WeightSpec::Minmax => 0.5,
            WeightSpec::PerStage(v) => v[k - 1],
        }
    }
}

/// `C * P(A=-a|z,h) + E[Y|h,z,a] * P(A=a|z,h)`.
pub fn psi(prop: &Propensity, outcome: &OutcomeModel, h: &[f64], a: Arm, z: Arm, c: f64) -> f64 {
    let pa = prop.p_a(h, z, a);
    psi_raw(pa, outcome.predict(h, z, a), c)
}

pub fn psi_raw(p_a: f64, mu: f64, c: f64) -> f64 {
    c * (1.0 - p_a) + mu * p_a
}

/// Conditional quantities entering one interval, for a fixed `(h, a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellInputs {
    /// `P(Z=+1|h)`.
    pub p_z_plus: f64,
    /// `P(A=a|Z=z,h)` for `z = -1, +1`.
    pub p_a: [f64; 2],
    /// `E[Y|h,Z=z,A=a]` for `z = -1, +1`.
    pub mu: [f64; 2],
}

impl CellInputs {
    pub fn from_models(prop: &Propensity, outcome: &OutcomeModel, h: &[f64], a: Arm) -> Self {
        CellInputs {
            p_z_plus: prop.p_z(h, Arm::Plus),
            p_a: [prop.p_a(h, Arm::Minus, a), prop.p_a(h, Arm::Plus, a)],
            mu: [outcome.predict(h, Arm::Minus, a), outcome.predict(h, Arm::Plus, a)],
        }
    }
}

/// Unrepaired interval ends.
pub fn mp_raw(c: &CellInputs, tail: Interval) -> (f64, f64) {
    let pm = 1.0 - c.p_z_plus;
    let pp = c.p_z_plus;
    let lo_m = psi_raw(c.p_a[0], c.mu[0], tail.lower);
    let lo_p = psi_raw(c.p_a[1], c.mu[1], tail.lower);
    let hi_m = psi_raw(c.p_a[0], c.mu[0], tail.upper);
    let hi_p = psi_raw(c.p_a[1], c.mu[1], tail.upper);
    let lower = pm * lo_m + pp * lo_m.max(lo_p);
    let upper = pm * hi_m.min(hi_p) + pp * hi_p;
    (lower, upper)
}

/// Interval clipped to `tail`; a crossed result collapses to its midpoint.
/// The flag reports whether that collapse happened.
pub fn mp_from_inputs(c: &CellInputs, tail: Interval) -> (Interval, bool) {
    let (l, u) = mp_raw(c, tail);
    let (l, u) = (tail.clamp(l), tail.clamp(u));
    if l > u {
        let m = 0.5 * (l + u);
        (Interval::new(m, m), true)
    } else {
        (Interval::new(l, u), false)
    }
}

pub fn mp_interval_parts(
    prop: &Propensity,
    outcome: &OutcomeModel,
    h: &[f64],
    a: Arm,
    tail: Interval,
) -> (Interval, bool) {
    mp_from_inputs(&CellInputs::from_models(prop, outcome, h, a), tail)
}

pub fn mp_interval(ns: &NuisanceSet, h: &[f64], a: Arm, tail: Interval) -> (Interval, bool) {
    mp_interval_parts(&ns.propensity, &ns.outcome, h, a, tail)
}

/// `lambda * lower + (1 - lambda) * upper`.
pub fn weighted_q(interval: Interval, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid("lambda out of range [0, 1]"));
    }
    Ok(weighted_q_unchecked(interval, lambda))
}

pub(crate) fn weighted_q_unchecked(interval: Interval, lambda: f64) -> f64 {
    if lambda == 1.0 {
        interval.lower
    } else if lambda == 0.0 {
        interval.upper
    } else {
        lambda * interval.lower + (1.0 - lambda) * interval.upper
    }
}
