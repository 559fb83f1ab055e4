//! Backward-induction weighted Q-learning and projection of the resulting
//! contrasts onto depth-limited trees.

use crate::bounds::{mp_interval, weighted_q_unchecked, Interval, RewardBounds, WeightSpec};
use crate::data::{Arm, Dataset, Features};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::nuisance::{fit_stage_nuisance, is_binary_outcome, NuisanceFlags, NuisanceSet, DEFAULT_CLIP};
use crate::policy::{ContrastRule, Dtr, DtrKind, PolicyStage};
use crate::tree::fit_weighted_tree;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Truncation for every estimated probability.
    pub clip: f64,
    /// Action taken when a contrast is exactly zero.
    pub tie: Arm,
    /// Minimum leaf weight as a fraction of the total classification weight.
    pub min_leaf_frac: f64,
    pub exec: Execution,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { clip: DEFAULT_CLIP, tie: Arm::Plus, min_leaf_frac: 0.01, exec: Execution::Parallel }
    }
}

#[derive(Debug, Clone)]
pub struct StageQEstimate {
    /// 1-based stage index.
    pub stage: usize,
    /// Q intervals per action, indexed by `Arm::index`.
    pub intervals: [Vec<Interval>; 2],
    pub q: [Vec<f64>; 2],
    pub contrast: Vec<f64>,
    pub value: Vec<f64>,
    /// Regression target used at this stage.
    pub outcomes: Vec<f64>,
    pub tail: Interval,
    pub lambda: f64,
    pub nuisance: NuisanceSet,
    pub flags: NuisanceFlags,
    pub repairs: usize,
}

impl StageQEstimate {
    pub fn contrast_rule(&self, dim: usize, tie: Arm) -> ContrastRule {
        ContrastRule { dim, nuisance: self.nuisance.clone(), tail: self.tail, lambda: self.lambda, tie }
    }
}

/// Per-row quantities of a fitted stage at the given histories.
#[derive(Debug, Clone)]
pub struct StageEvaluation {
    pub intervals: [Vec<Interval>; 2],
    pub q: [Vec<f64>; 2],
    pub contrast: Vec<f64>,
    pub value: Vec<f64>,
    pub repairs: usize,
}

pub fn evaluate_stage(
    ns: &NuisanceSet,
    x: &Features,
    tail: Interval,
    lambda: f64,
    tie: Arm,
    exec: Execution,
) -> StageEvaluation {
    let rows = exec.map(x.nrows(), |i| {
        let h = x.row(i);
        let (im, rm) = mp_interval(ns, h, Arm::Minus, tail);
        let (ip, rp) = mp_interval(ns, h, Arm::Plus, tail);
        (im, ip, usize::from(rm) + usize::from(rp))
    });
    let n = rows.len();
    let mut out = StageEvaluation {
        intervals: [Vec::with_capacity(n), Vec::with_capacity(n)],
        q: [Vec::with_capacity(n), Vec::with_capacity(n)],
        contrast: Vec::with_capacity(n),
        value: Vec::with_capacity(n),
        repairs: 0,
    };
    for (im, ip, r) in rows {
        let qm = weighted_q_unchecked(im, lambda);
        let qp = weighted_q_unchecked(ip, lambda);
        let c = qp - qm;
        let v = match Arm::from_sign(c, tie) {
            Arm::Plus => qp,
            Arm::Minus => qm,
        };
        out.intervals[0].push(im);
        out.intervals[1].push(ip);
        out.q[0].push(qm);
        out.q[1].push(qp);
        out.contrast.push(c);
        out.value.push(v);
        out.repairs += r;
    }
    out
}

/// `r_k + V_{k+1}` element-wise.
pub fn pseudo_outcomes(rewards: &[f64], next_values: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() != next_values.len() {
        return Err(Error::invalid("rewards and next-stage values differ in length"));
    }
    Ok(rewards.iter().zip(next_values).map(|(r, v)| r + v).collect())
}

fn clip_outcomes(y: &[f64], tail: Interval) -> Result<Vec<f64>> {
    if let Some(i) = (0..y.len()).find(|&i| !tail.contains_approx(y[i], 1e-9)) {
        return Err(Error::invalid(format!(
            "outcome {} at row {} outside [{}, {}]",
            y[i],
            i + 1,
            tail.lower,
            tail.upper
        )));
    }
    Ok(y.iter().map(|&v| tail.clamp(v)).collect())
}

#[allow(clippy::too_many_arguments)]
pub fn fit_stage(
    stage: usize,
    x: &Features,
    z: &[Arm],
    a: &[Arm],
    outcomes: &[f64],
    tail: Interval,
    lambda: f64,
    opts: &FitOptions,
) -> Result<StageQEstimate> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid("lambda out of range [0, 1]"));
    }
    let y = clip_outcomes(outcomes, tail)?;
    let binary = is_binary_outcome(&y, tail);
    let (nuisance, flags) = fit_stage_nuisance(x, z, a, &y, tail, binary, opts.clip)?;
    let ev = evaluate_stage(&nuisance, x, tail, lambda, opts.tie, opts.exec);
    Ok(StageQEstimate {
        stage,
        intervals: ev.intervals,
        q: ev.q,
        contrast: ev.contrast,
        value: ev.value,
        outcomes: y,
        tail,
        lambda,
        nuisance,
        flags,
        repairs: ev.repairs,
    })
}

/// Step I: stage estimates (index 0 is stage 1) and the sign-of-contrast rule.
pub fn backward_induct(
    data: &Dataset,
    bounds: &RewardBounds,
    lambda: &WeightSpec,
    opts: &FitOptions,
) -> Result<(Vec<StageQEstimate>, Dtr)> {
    let k_max = data.num_stages();
    bounds.check(data)?;
    lambda.validate(k_max)?;
    let mut out: Vec<StageQEstimate> = Vec::with_capacity(k_max);
    for k in (1..=k_max).rev() {
        let tail = bounds.tail(k);
        let rewards = data.rewards(k);
        let y = match out.last() {
            None => rewards,
            Some(next) => pseudo_outcomes(&rewards, &next.value)?.into_iter().map(|v| tail.clamp(v)).collect(),
        };
        let x = data.histories(k);
        let est = fit_stage(k, &x, &data.instruments(k), &data.actions(k), &y, tail, lambda.at(k), opts)?;
        out.push(est);
    }
    out.reverse();
    let stages =
        out.iter().map(|e| PolicyStage::ContrastSign(e.contrast_rule(data.history_dim(e.stage), opts.tie))).collect();
    let q_rule = Dtr { kind: DtrKind::IvOptimal, lambda: Some(lambda.clone()), stages };
    Ok((out, q_rule))
}

/// Fits one tree per stage on labels `label[k]` with weights `weight[k]`.
pub fn project_labels(
    data: &Dataset,
    labels: &[Vec<Arm>],
    weights: &[Vec<f64>],
    depth: usize,
    opts: &FitOptions,
) -> Result<Vec<PolicyStage>> {
    let mut stages = Vec::with_capacity(labels.len());
    for k in 1..=labels.len() {
        let w = &weights[k - 1];
        let min_leaf = opts.min_leaf_frac * w.iter().sum::<f64>();
        let (t, _) = fit_weighted_tree(&data.histories(k), &labels[k - 1], w, depth, min_leaf)?;
        stages.push(PolicyStage::Tree(t));
    }
    Ok(stages)
}

/// Trees fitted on `(sign(C), |C|)` per stage.
pub fn project_contrasts(
    data: &Dataset,
    contrasts: &[Vec<f64>],
    depth: usize,
    opts: &FitOptions,
) -> Result<Vec<PolicyStage>> {
    let labels: Vec<Vec<Arm>> =
        contrasts.iter().map(|c| c.iter().map(|&v| Arm::from_sign(v, opts.tie)).collect()).collect();
    let weights: Vec<Vec<f64>> = contrasts.iter().map(|c| c.iter().map(|v| v.abs()).collect()).collect();
    project_labels(data, &labels, &weights, depth, opts)
}

/// Step II on in-sample contrasts.
pub fn project_policy(
    estimates: &[StageQEstimate],
    data: &Dataset,
    depth: usize,
    lambda: &WeightSpec,
    opts: &FitOptions,
) -> Result<Dtr> {
    let contrasts: Vec<Vec<f64>> = estimates.iter().map(|e| e.contrast.clone()).collect();
    let stages = project_contrasts(data, &contrasts, depth, opts)?;
    Ok(Dtr { kind: DtrKind::IvOptimal, lambda: Some(lambda.clone()), stages })
}

#[derive(Debug, Clone)]
pub struct IvOptimalFit {
    pub estimates: Vec<StageQEstimate>,
    pub q_rule: Dtr,
    pub policy: Dtr,
}

/// Both steps with in-sample contrasts.
pub fn fit_ivoptimal(
    data: &Dataset,
    bounds: &RewardBounds,
    lambda: &WeightSpec,
    depth: usize,
    opts: &FitOptions,
) -> Result<IvOptimalFit> {
    let (estimates, q_rule) = backward_induct(data, bounds, lambda, opts)?;
    let policy = project_policy(&estimates, data, depth, lambda, opts)?;
    Ok(IvOptimalFit { estimates, q_rule, policy })
}
