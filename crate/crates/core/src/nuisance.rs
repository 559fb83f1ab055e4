//! Parametric nuisance models: logistic and linear regression, and the
//! per-stage set of conditional models feeding the bounds.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::Interval;
use crate::data::{Arm, Features};
use crate::error::{Error, Result};

pub const DEFAULT_CLIP: f64 = 1e-3;
pub const RIDGE: f64 = 1e-8;
pub const GRAD_TOL: f64 = 1e-8;
pub const MAX_ITER: usize = 100;

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LogisticModel {
    pub fn linear_predictor(&self, h: &[f64]) -> f64 {
        self.intercept + dot(&self.coefficients, h)
    }

    pub fn prob(&self, h: &[f64]) -> f64 {
        expit(self.linear_predictor(h))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn predict(&self, h: &[f64]) -> f64 {
        self.intercept + dot(&self.coefficients, h)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Logistic probability truncated to `[clip, 1 - clip]`.
pub fn predict_prob(model: &LogisticModel, h: &[f64], clip: f64) -> f64 {
    model.prob(h).clamp(clip, 1.0 - clip)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitInfo {
    pub iterations: usize,
    pub converged: bool,
}

fn check_inputs(x: &Features, y: &[f64], w: Option<&[f64]>) -> Result<Vec<f64>> {
    if x.nrows() == 0 {
        return Err(Error::invalid("regression needs at least one row"));
    }
    if y.len() != x.nrows() {
        return Err(Error::invalid("targets and features differ in length"));
    }
    if y.iter().any(|v| !v.is_finite()) || x.rows().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite regression input"));
    }
    normalized_weights(w, x.nrows())
}

/// Equal weights become exact unit weights; otherwise rescaled to mean one.
fn normalized_weights(w: Option<&[f64]>, n: usize) -> Result<Vec<f64>> {
    let Some(w) = w else { return Ok(vec![1.0; n]) };
    if w.len() != n {
        return Err(Error::invalid("weights and features differ in length"));
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("weights must be finite and nonnegative"));
    }
    if w.iter().all(|v| *v == w[0]) {
        if w[0] == 0.0 {
            return Err(Error::invalid("all weights are zero"));
        }
        return Ok(vec![1.0; n]);
    }
    let mean = w.iter().sum::<f64>() / n as f64;
    Ok(w.iter().map(|v| v / mean).collect())
}

fn design_row(h: &[f64], out: &mut [f64]) {
    out[0] = 1.0;
    out[1..].copy_from_slice(h);
}

fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(&b));
    }
    a.lu().solve(&b).ok_or_else(|| Error::Numerical("singular normal equations".into()))
}

/// Penalized log-likelihood, penalty `RIDGE * |beta|^2` over all parameters.
pub fn logistic_objective(x: &Features, y: &[f64], w: &[f64], beta: &[f64]) -> f64 {
    let mut ll = 0.0;
    for (i, h) in x.rows().enumerate() {
        let eta = beta[0] + dot(&beta[1..], h);
        ll += w[i] * (y[i] * eta - softplus(eta));
    }
    ll - RIDGE * beta.iter().map(|b| b * b).sum::<f64>()
}

/// Gradient of [`logistic_objective`].
pub fn logistic_score(x: &Features, y: &[f64], w: &[f64], beta: &[f64]) -> Vec<f64> {
    let p = beta.len();
    let mut g: Vec<f64> = beta.iter().map(|b| -2.0 * RIDGE * b).collect();
    let mut row = vec![0.0; p];
    for (i, h) in x.rows().enumerate() {
        design_row(h, &mut row);
        let r = w[i] * (y[i] - expit(dot(beta, &row)));
        for j in 0..p {
            g[j] += r * row[j];
        }
    }
    g
}

/// Newton-Raphson with step halving on the ridge-penalized likelihood.
pub fn fit_logistic(x: &Features, labels: &[f64], weights: Option<&[f64]>) -> Result<(LogisticModel, FitInfo)> {
    let w = check_inputs(x, labels, weights)?;
    if labels.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid("logistic labels must be 0 or 1"));
    }
    let p = x.ncols() + 1;
    let mut beta = vec![0.0; p];
    let mut obj = logistic_objective(x, labels, &w, &beta);
    let mut row = vec![0.0; p];
    let mut info = FitInfo { iterations: 0, converged: false };
    for it in 0..=MAX_ITER {
        let g = logistic_score(x, labels, &w, &beta);
        if g.iter().map(|v| v * v).sum::<f64>().sqrt() <= GRAD_TOL {
            info = FitInfo { iterations: it, converged: true };
            break;
        }
        if it == MAX_ITER {
            info = FitInfo { iterations: it, converged: false };
            break;
        }
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for (i, h) in x.rows().enumerate() {
            design_row(h, &mut row);
            let pr = expit(dot(&beta, &row));
            let s = w[i] * pr * (1.0 - pr);
            for a in 0..p {
                for b in 0..=a {
                    hess[(a, b)] += s * row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            hess[(a, a)] += 2.0 * RIDGE;
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        let step = solve_spd(hess, DVector::from_vec(g))?;
        // Near the optimum the objective moves by less than its rounding
        // error, so compare with a matching slack.
        let slack = 64.0 * f64::EPSILON * (1.0 + obj.abs());
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let c = logistic_objective(x, labels, &w, &cand);
            if c >= obj - slack {
                beta = cand;
                obj = c;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No ascent direction left at working precision.
            info = FitInfo { iterations: it + 1, converged: false };
            break;
        }
    }
    let model = LogisticModel { intercept: beta[0], coefficients: beta[1..].to_vec() };
    Ok((model, info))
}

/// Weighted least squares with a `RIDGE` penalty on the slopes only.
pub fn fit_linear(x: &Features, targets: &[f64], weights: Option<&[f64]>) -> Result<LinearModel> {
    let w = check_inputs(x, targets, weights)?;
    let p = x.ncols() + 1;
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for (i, h) in x.rows().enumerate() {
        design_row(h, &mut row);
        for r in 0..p {
            b[r] += w[i] * row[r] * targets[i];
            for c in 0..=r {
                a[(r, c)] += w[i] * row[r] * row[c];
            }
        }
    }
    for r in 0..p {
        if r > 0 {
            a[(r, r)] += RIDGE;
        }
        for c in 0..r {
            a[(c, r)] = a[(r, c)];
        }
    }
    let beta = solve_spd(a, b)?;
    Ok(LinearModel { intercept: beta[0], coefficients: beta.iter().skip(1).copied().collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predictor {
    Logistic(LogisticModel),
    Linear(LinearModel),
    Constant { value: f64 },
}

impl Predictor {
    fn raw(&self, h: &[f64]) -> f64 {
        match self {
            Predictor::Logistic(m) => m.prob(h),
            Predictor::Linear(m) => m.predict(h),
            Predictor::Constant { value } => *value,
        }
    }
}

/// `P(Z=+1|h)` and `P(A=+1|h, Z=z)` for one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Propensity {
    pub pz: Predictor,
    /// Indexed by `Arm::index` of z.
    pub pa_given_z: [Predictor; 2],
    pub clip: f64,
}

impl Propensity {
    pub fn p_z(&self, h: &[f64], z: Arm) -> f64 {
        let p = self.pz.raw(h).clamp(self.clip, 1.0 - self.clip);
        match z {
            Arm::Plus => p,
            Arm::Minus => 1.0 - p,
        }
    }

    pub fn p_a(&self, h: &[f64], z: Arm, a: Arm) -> f64 {
        let p = self.pa_given_z[z.index()].raw(h).clamp(self.clip, 1.0 - self.clip);
        match a {
            Arm::Plus => p,
            Arm::Minus => 1.0 - p,
        }
    }
}

/// `E[Y | h, Z=z, A=a]` for the four cells, clipped to the outcome range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    /// Indexed by `2 * z.index() + a.index()`.
    pub cells: [Predictor; 4],
    pub range: Interval,
    pub clip: f64,
}

impl OutcomeModel {
    pub fn predict(&self, h: &[f64], z: Arm, a: Arm) -> f64 {
        let m = &self.cells[2 * z.index() + a.index()];
        let v = match m {
            Predictor::Logistic(_) => m.raw(h).clamp(self.clip, 1.0 - self.clip),
            _ => m.raw(h),
        };
        v.clamp(self.range.lower, self.range.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSet {
    pub propensity: Propensity,
    pub outcome: OutcomeModel,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NuisanceFlags {
    /// `(z, a)` cells with no rows.
    pub empty_mu_cells: Vec<(Arm, Arm)>,
    /// Instrument levels with no rows.
    pub empty_pa_cells: Vec<Arm>,
    pub nonconverged: usize,
}

impl NuisanceFlags {
    pub fn merge(&mut self, other: NuisanceFlags) {
        self.empty_mu_cells.extend(other.empty_mu_cells);
        self.empty_pa_cells.extend(other.empty_pa_cells);
        self.nonconverged += other.nonconverged;
    }
}

fn indicator(arms: &[Arm]) -> Vec<f64> {
    arms.iter().map(|a| if *a == Arm::Plus { 1.0 } else { 0.0 }).collect()
}

fn logistic_predictor(x: &Features, y: &[f64], flags: &mut NuisanceFlags) -> Result<Predictor> {
    let (m, info) = fit_logistic(x, y, None)?;
    if !info.converged {
        flags.nonconverged += 1;
    }
    Ok(Predictor::Logistic(m))
}

pub fn fit_propensity(x: &Features, z: &[Arm], a: &[Arm], clip: f64) -> Result<(Propensity, NuisanceFlags)> {
    if x.nrows() == 0 {
        return Err(Error::invalid("cannot fit nuisances on zero rows"));
    }
    let mut flags = NuisanceFlags::default();
    let pz = logistic_predictor(x, &indicator(z), &mut flags)?;
    let mut pa = Vec::with_capacity(2);
    for z0 in Arm::BOTH {
        let idx: Vec<usize> = (0..z.len()).filter(|&i| z[i] == z0).collect();
        if idx.is_empty() {
            flags.empty_pa_cells.push(z0);
            pa.push(Predictor::Constant { value: 0.5 });
            continue;
        }
        let ay: Vec<Arm> = idx.iter().map(|&i| a[i]).collect();
        pa.push(logistic_predictor(&x.select(&idx), &indicator(&ay), &mut flags)?);
    }
    let pa_given_z = [pa[0].clone(), pa[1].clone()];
    Ok((Propensity { pz, pa_given_z, clip }, flags))
}

pub fn fit_outcome(
    x: &Features,
    z: &[Arm],
    a: &[Arm],
    y: &[f64],
    range: Interval,
    binary_outcome: bool,
    clip: f64,
) -> Result<(OutcomeModel, NuisanceFlags)> {
    if x.nrows() == 0 {
        return Err(Error::invalid("cannot fit nuisances on zero rows"));
    }
    if let Some(i) = (0..y.len()).find(|&i| !range.contains_approx(y[i], 1e-9)) {
        return Err(Error::invalid(format!(
            "outcome {} at row {} outside [{}, {}]",
            y[i],
            i + 1,
            range.lower,
            range.upper
        )));
    }
    let mut flags = NuisanceFlags::default();
    let mut cells = Vec::with_capacity(4);
    for z0 in Arm::BOTH {
        for a0 in Arm::BOTH {
            let idx: Vec<usize> = (0..y.len()).filter(|&i| z[i] == z0 && a[i] == a0).collect();
            if idx.is_empty() {
                flags.empty_mu_cells.push((z0, a0));
                cells.push(Predictor::Constant { value: range.midpoint() });
                continue;
            }
            let xs = x.select(&idx);
            let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let m = if binary_outcome {
                logistic_predictor(&xs, &ys, &mut flags)?
            } else {
                Predictor::Linear(fit_linear(&xs, &ys, None)?)
            };
            cells.push(m);
        }
    }
    let cells = [cells[0].clone(), cells[1].clone(), cells[2].clone(), cells[3].clone()];
    Ok((OutcomeModel { cells, range, clip }, flags))
}

pub fn fit_stage_nuisance(
    x: &Features,
    z: &[Arm],
    a: &[Arm],
    y: &[f64],
    outcome_range: Interval,
    binary_outcome: bool,
    clip: f64,
) -> Result<(NuisanceSet, NuisanceFlags)> {
    let (propensity, mut flags) = fit_propensity(x, z, a, clip)?;
    let (outcome, f2) = fit_outcome(x, z, a, y, outcome_range, binary_outcome, clip)?;
    flags.merge(f2);
    Ok((NuisanceSet { propensity, outcome }, flags))
}

/// Whether a stage outcome should be modelled as Bernoulli.
pub fn is_binary_outcome(y: &[f64], range: Interval) -> bool {
    range.lower == 0.0 && range.upper == 1.0 && y.iter().all(|&v| v == 0.0 || v == 1.0)
}
