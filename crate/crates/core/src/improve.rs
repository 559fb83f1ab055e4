//! Improvement over a baseline regime using relative Q-functions.
//!
//! Stored contrasts follow one convention throughout: a positive value means
//! the worst-case gain from flipping the baseline action is positive.

use crate::bounds::{mp_interval_parts, Interval, RewardBounds};
use crate::data::{Arm, Dataset, Features};
use crate::error::{Error, Result};
use crate::nuisance::{fit_outcome, fit_propensity, is_binary_outcome, NuisanceFlags, OutcomeModel, Propensity};
use crate::policy::{Dtr, DtrKind};
use crate::qlearn::{project_labels, FitOptions};

/// Single-stage rule from a contrast interval `[l, u]`.
pub fn improve_rule_single(l: f64, u: f64, baseline: Arm) -> Result<Arm> {
    if l > u {
        return Err(Error::invalid("contrast interval has lower end above upper end"));
    }
    Ok(if l > 0.0 {
        Arm::Plus
    } else if u < 0.0 {
        Arm::Minus
    } else {
        baseline
    })
}

/// Ranges of the three regression targets at one stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeTails {
    pub reward: Interval,
    /// Range of the next-stage relative value.
    pub continuation: Interval,
    /// Range of reward plus next-stage relative value.
    pub sum: Interval,
}

impl RelativeTails {
    pub fn at(bounds: &RewardBounds, k: usize) -> Self {
        let reward = bounds.stage(k);
        let s = bounds.spread_from(k + 1);
        RelativeTails {
            reward,
            continuation: Interval::new(0.0, s),
            sum: Interval::new(reward.lower, reward.upper + s),
        }
    }
}

/// Outcome regressions for the continuation-only and reward-plus-continuation targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationModels {
    pub continuation: OutcomeModel,
    pub sum: OutcomeModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeModels {
    pub propensity: Propensity,
    pub reward: OutcomeModel,
    /// Absent at the last stage.
    pub next: Option<ContinuationModels>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeQ {
    /// Relative Q at the baseline action.
    pub keep: f64,
    /// Relative Q at the flipped action.
    pub flip: f64,
    /// `flip - keep`.
    pub stored: f64,
    pub repairs: usize,
}

impl RelativeQ {
    pub fn action(&self, baseline: Arm) -> Arm {
        if self.stored > 0.0 {
            baseline.flip()
        } else {
            baseline
        }
    }

    pub fn value(&self) -> f64 {
        if self.stored > 0.0 {
            self.flip
        } else {
            self.keep
        }
    }
}

/// Worst case of the flipped arm minus best case of the baseline arm.
pub fn flip_gain(flipped: Interval, baseline: Interval) -> f64 {
    flipped.lower - baseline.upper
}

/// Last stage: worst case of the flipped arm minus best case of the baseline arm.
pub fn relative_contrast_stage_last(
    prop: &Propensity,
    reward: &OutcomeModel,
    h: &[f64],
    baseline: Arm,
    tail: Interval,
) -> RelativeQ {
    let (flipped, r1) = mp_interval_parts(prop, reward, h, baseline.flip(), tail);
    let (base, r2) = mp_interval_parts(prop, reward, h, baseline, tail);
    let flip = flip_gain(flipped, base);
    RelativeQ { keep: 0.0, flip, stored: flip, repairs: usize::from(r1) + usize::from(r2) }
}

/// Generic stage with continuation models.
pub fn relative_contrast_stage_k(
    prop: &Propensity,
    reward: &OutcomeModel,
    next: &ContinuationModels,
    h: &[f64],
    baseline: Arm,
    tails: &RelativeTails,
) -> RelativeQ {
    let (cont, r0) = mp_interval_parts(prop, &next.continuation, h, baseline, tails.continuation);
    let (flipped, r1) = mp_interval_parts(prop, &next.sum, h, baseline.flip(), tails.sum);
    let (base, r2) = mp_interval_parts(prop, reward, h, baseline, tails.reward);
    let keep = cont.lower;
    let flip = flip_gain(flipped, base);
    RelativeQ { keep, flip, stored: flip - keep, repairs: usize::from(r0) + usize::from(r1) + usize::from(r2) }
}

impl RelativeModels {
    pub fn evaluate(&self, h: &[f64], baseline: Arm, tails: &RelativeTails) -> RelativeQ {
        match &self.next {
            None => relative_contrast_stage_last(&self.propensity, &self.reward, h, baseline, tails.reward),
            Some(n) => relative_contrast_stage_k(&self.propensity, &self.reward, n, h, baseline, tails),
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn fit_relative_models(
    x: &Features,
    z: &[Arm],
    a: &[Arm],
    rewards: &[f64],
    next_values: Option<&[f64]>,
    tails: &RelativeTails,
    clip: f64,
) -> Result<(RelativeModels, NuisanceFlags)> {
    let (propensity, mut flags) = fit_propensity(x, z, a, clip)?;
    let r: Vec<f64> = rewards.iter().map(|&v| tails.reward.clamp(v)).collect();
    let (reward, f) = fit_outcome(x, z, a, &r, tails.reward, is_binary_outcome(&r, tails.reward), clip)?;
    flags.merge(f);
    let next = match next_values {
        None => None,
        Some(v) => {
            if v.len() != r.len() {
                return Err(Error::invalid("next-stage values and rewards differ in length"));
            }
            let c: Vec<f64> = v.iter().map(|&x| tails.continuation.clamp(x)).collect();
            let s: Vec<f64> = r.iter().zip(&c).map(|(a, b)| tails.sum.clamp(a + b)).collect();
            let (continuation, f1) = fit_outcome(x, z, a, &c, tails.continuation, false, clip)?;
            let (sum, f2) = fit_outcome(x, z, a, &s, tails.sum, false, clip)?;
            flags.merge(f1);
            flags.merge(f2);
            Some(ContinuationModels { continuation, sum })
        }
    };
    Ok((RelativeModels { propensity, reward, next }, flags))
}

#[derive(Debug, Clone)]
pub struct RelativeStageEstimate {
    pub stage: usize,
    pub baseline: Vec<Arm>,
    pub relative: Vec<RelativeQ>,
    pub improved: Vec<Arm>,
    /// Relative value at the improved action.
    pub value: Vec<f64>,
    pub tails: RelativeTails,
    pub models: RelativeModels,
    pub flags: NuisanceFlags,
    pub repairs: usize,
}

impl RelativeStageEstimate {
    pub fn stored(&self) -> Vec<f64> {
        self.relative.iter().map(|r| r.stored).collect()
    }

    pub fn deviation_fraction(&self) -> f64 {
        let d = self.improved.iter().zip(&self.baseline).filter(|(a, b)| a != b).count();
        d as f64 / self.baseline.len().max(1) as f64
    }
}

/// Step I at one stage.
#[allow(clippy::too_many_arguments)]
pub fn fit_relative_stage(
    stage: usize,
    x: &Features,
    z: &[Arm],
    a: &[Arm],
    rewards: &[f64],
    next_values: Option<&[f64]>,
    baseline: Vec<Arm>,
    tails: RelativeTails,
    opts: &FitOptions,
) -> Result<RelativeStageEstimate> {
    let (models, flags) = fit_relative_models(x, z, a, rewards, next_values, &tails, opts.clip)?;
    let relative = opts.exec.map(x.nrows(), |i| models.evaluate(x.row(i), baseline[i], &tails));
    let improved: Vec<Arm> = relative.iter().zip(&baseline).map(|(r, b)| r.action(*b)).collect();
    let value = relative.iter().map(RelativeQ::value).collect();
    let repairs = relative.iter().map(|r| r.repairs).sum();
    Ok(RelativeStageEstimate { stage, baseline, relative, improved, value, tails, models, flags, repairs })
}

/// Step I over all stages; index 0 is stage 1.
pub fn relative_backward(
    data: &Dataset,
    baseline: &Dtr,
    bounds: &RewardBounds,
    opts: &FitOptions,
) -> Result<Vec<RelativeStageEstimate>> {
    baseline.check_schema(data.covariate_dims())?;
    bounds.check(data)?;
    let k_max = data.num_stages();
    let mut out: Vec<RelativeStageEstimate> = Vec::with_capacity(k_max);
    for k in (1..=k_max).rev() {
        let x = data.histories(k);
        let base = baseline.actions_on(data, k);
        let next = out.last().map(|e| e.value.clone());
        let est = fit_relative_stage(
            k,
            &x,
            &data.instruments(k),
            &data.actions(k),
            &data.rewards(k),
            next.as_deref(),
            base,
            RelativeTails::at(bounds, k),
            opts,
        )?;
        out.push(est);
    }
    out.reverse();
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct IvImprovedFit {
    pub estimates: Vec<RelativeStageEstimate>,
    pub policy: Dtr,
}

/// Labels and weights for Step II from stored contrasts and baseline actions.
pub fn improvement_targets(stored: &[f64], baseline: &[Arm]) -> (Vec<Arm>, Vec<f64>) {
    stored.iter().zip(baseline).map(|(&c, &b)| (if c > 0.0 { b.flip() } else { b }, c.abs())).unzip()
}

pub fn fit_ivimproved(
    data: &Dataset,
    baseline: &Dtr,
    baseline_name: &str,
    bounds: &RewardBounds,
    depth: usize,
    opts: &FitOptions,
) -> Result<IvImprovedFit> {
    let estimates = relative_backward(data, baseline, bounds, opts)?;
    let (labels, weights): (Vec<_>, Vec<_>) =
        estimates.iter().map(|e| improvement_targets(&e.stored(), &e.baseline)).unzip();
    let stages = project_labels(data, &labels, &weights, depth, opts)?;
    let policy = Dtr { kind: DtrKind::IvImproved { baseline: baseline_name.to_string() }, lambda: None, stages };
    Ok(IvImprovedFit { estimates, policy })
}
