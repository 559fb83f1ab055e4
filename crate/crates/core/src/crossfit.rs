//! Cross-fitted contrasts: each sample's contrast comes from models fitted
//! without its own batch. Value propagation between stages still uses the
//! full-sample fits; only the classification weights and labels are
//! cross-fitted.

use crate::bounds::{mp_interval, weighted_q_unchecked, Interval, RewardBounds, WeightSpec};
use crate::data::{assign_batches, Arm, BatchAssignment, Dataset, Features};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::improve::{
    fit_relative_models, improvement_targets, relative_backward, IvImprovedFit, RelativeModels, RelativeTails,
};
use crate::nuisance::{fit_stage_nuisance, is_binary_outcome, NuisanceSet};
use crate::policy::{Dtr, DtrKind};
use crate::qlearn::{backward_induct, project_contrasts, project_labels, FitOptions, StageQEstimate};

/// Smallest batch accepted when cross-fitting.
pub const MIN_BATCH: usize = 10;

#[derive(Debug, Clone)]
pub struct CrossfitContrasts<M> {
    pub contrasts: Vec<f64>,
    pub batches: BatchAssignment,
    /// Model fitted without batch `j`, for each `j`.
    pub models: Vec<M>,
}

/// Fits `fit` on each batch complement (ascending order) and evaluates
/// `eval` at the held-out samples.
pub fn crossfit<M, F, E>(batches: &BatchAssignment, exec: Execution, fit: F, eval: E) -> Result<CrossfitContrasts<M>>
where
    M: Send,
    F: Fn(&[usize]) -> Result<M> + Sync + Send,
    E: Fn(&M, usize) -> f64,
{
    let models: Vec<M> = exec.map(batches.m, |j| fit(&batches.complement(j))).into_iter().collect::<Result<_>>()?;
    let contrasts = (0..batches.batch.len()).map(|i| eval(&models[batches.batch[i]], i)).collect();
    Ok(CrossfitContrasts { contrasts, batches: batches.clone(), models })
}

pub fn check_batches(n: usize, m: usize) -> Result<()> {
    if n / m < MIN_BATCH {
        return Err(Error::invalid(format!(
            "cross-fitting with {m} batches leaves fewer than {MIN_BATCH} samples per batch (n = {n})"
        )));
    }
    Ok(())
}

/// Weighted contrast of one fitted stage at `h`.
pub fn weighted_contrast(ns: &NuisanceSet, h: &[f64], tail: Interval, lambda: f64) -> f64 {
    let q = |a| weighted_q_unchecked(mp_interval(ns, h, a, tail).0, lambda);
    q(Arm::Plus) - q(Arm::Minus)
}

#[allow(clippy::too_many_arguments)]
pub fn crossfit_stage_contrasts(
    x: &Features,
    z: &[Arm],
    a: &[Arm],
    outcomes: &[f64],
    tail: Interval,
    lambda: f64,
    batches: &BatchAssignment,
    opts: &FitOptions,
) -> Result<CrossfitContrasts<NuisanceSet>> {
    let binary = is_binary_outcome(outcomes, tail);
    let fit = |idx: &[usize]| {
        let zs: Vec<Arm> = idx.iter().map(|&i| z[i]).collect();
        let as_: Vec<Arm> = idx.iter().map(|&i| a[i]).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| tail.clamp(outcomes[i])).collect();
        fit_stage_nuisance(&x.select(idx), &zs, &as_, &ys, tail, binary, opts.clip).map(|(ns, _)| ns)
    };
    crossfit(batches, opts.exec, fit, |ns, i| weighted_contrast(ns, x.row(i), tail, lambda))
}

#[derive(Debug, Clone)]
pub struct CrossfitOptimalFit {
    pub estimates: Vec<StageQEstimate>,
    pub contrasts: Vec<CrossfitContrasts<NuisanceSet>>,
    pub policy: Dtr,
}

/// IV-optimal regime whose classification step uses cross-fitted contrasts.
#[allow(clippy::too_many_arguments)]
pub fn fit_ivoptimal_crossfit(
    data: &Dataset,
    bounds: &RewardBounds,
    lambda: &WeightSpec,
    depth: usize,
    m: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<CrossfitOptimalFit> {
    let (estimates, _) = backward_induct(data, bounds, lambda, opts)?;
    if m <= 1 {
        let c: Vec<Vec<f64>> = estimates.iter().map(|e| e.contrast.clone()).collect();
        let stages = project_contrasts(data, &c, depth, opts)?;
        let policy = Dtr { kind: DtrKind::IvOptimal, lambda: Some(lambda.clone()), stages };
        return Ok(CrossfitOptimalFit { estimates, contrasts: Vec::new(), policy });
    }
    check_batches(data.n(), m)?;
    let batches = assign_batches(data.n(), m, seed)?;
    let mut contrasts = Vec::with_capacity(estimates.len());
    for e in &estimates {
        let k = e.stage;
        contrasts.push(crossfit_stage_contrasts(
            &data.histories(k),
            &data.instruments(k),
            &data.actions(k),
            &e.outcomes,
            e.tail,
            e.lambda,
            &batches,
            opts,
        )?);
    }
    let c: Vec<Vec<f64>> = contrasts.iter().map(|c| c.contrasts.clone()).collect();
    let stages = project_contrasts(data, &c, depth, opts)?;
    let policy = Dtr { kind: DtrKind::IvOptimal, lambda: Some(lambda.clone()), stages };
    Ok(CrossfitOptimalFit { estimates, contrasts, policy })
}

/// Cross-fitted stored relative contrasts at one stage.
#[allow(clippy::too_many_arguments)]
pub fn crossfit_relative_contrasts(
    x: &Features,
    z: &[Arm],
    a: &[Arm],
    rewards: &[f64],
    next_values: Option<&[f64]>,
    baseline: &[Arm],
    tails: RelativeTails,
    batches: &BatchAssignment,
    opts: &FitOptions,
) -> Result<CrossfitContrasts<RelativeModels>> {
    let fit = |idx: &[usize]| {
        let zs: Vec<Arm> = idx.iter().map(|&i| z[i]).collect();
        let as_: Vec<Arm> = idx.iter().map(|&i| a[i]).collect();
        let rs: Vec<f64> = idx.iter().map(|&i| rewards[i]).collect();
        let nv: Option<Vec<f64>> = next_values.map(|v| idx.iter().map(|&i| v[i]).collect());
        fit_relative_models(&x.select(idx), &zs, &as_, &rs, nv.as_deref(), &tails, opts.clip).map(|(m, _)| m)
    };
    crossfit(batches, opts.exec, fit, |m, i| m.evaluate(x.row(i), baseline[i], &tails).stored)
}

/// IV-improved regime whose classification step uses cross-fitted contrasts.
#[allow(clippy::too_many_arguments)]
pub fn fit_ivimproved_crossfit(
    data: &Dataset,
    baseline: &Dtr,
    baseline_name: &str,
    bounds: &RewardBounds,
    depth: usize,
    m: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<IvImprovedFit> {
    let estimates = relative_backward(data, baseline, bounds, opts)?;
    let mut labels = Vec::with_capacity(estimates.len());
    let mut weights = Vec::with_capacity(estimates.len());
    if m <= 1 {
        for e in &estimates {
            let (l, w) = improvement_targets(&e.stored(), &e.baseline);
            labels.push(l);
            weights.push(w);
        }
    } else {
        check_batches(data.n(), m)?;
        let batches = assign_batches(data.n(), m, seed)?;
        for (s, e) in estimates.iter().enumerate() {
            let k = e.stage;
            let next = estimates.get(s + 1).map(|n| n.value.as_slice());
            let c = crossfit_relative_contrasts(
                &data.histories(k),
                &data.instruments(k),
                &data.actions(k),
                &data.rewards(k),
                next,
                &e.baseline,
                e.tails,
                &batches,
                opts,
            )?;
            let (l, w) = improvement_targets(&c.contrasts, &e.baseline);
            labels.push(l);
            weights.push(w);
        }
    }
    let stages = project_labels(data, &labels, &weights, depth, opts)?;
    let policy = Dtr { kind: DtrKind::IvImproved { baseline: baseline_name.to_string() }, lambda: None, stages };
    Ok(IvImprovedFit { estimates, policy })
}
