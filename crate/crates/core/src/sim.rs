//! Two-stage simulation with binary latent confounders, ground-truth policy
//! values, the no-unmeasured-confounding baseline, and the replication runner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{RewardBounds, WeightSpec};
use crate::crossfit::{fit_ivimproved_crossfit, fit_ivoptimal_crossfit};
use crate::data::{Arm, Dataset, Features, StageObservation, Trajectory};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::nuisance::{expit, fit_linear, fit_logistic, Predictor};
use crate::policy::{Dtr, DtrKind};
use crate::qlearn::{project_contrasts, FitOptions};

fn default_threshold() -> f64 {
    1.0
}

fn default_depth() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    Parametric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Instrument strength.
    pub c1: f64,
    /// Confounding strength.
    pub xi: f64,
    pub n_train: usize,
    pub seed: u64,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default = "default_depth")]
    pub depth: usize,
    pub replications: usize,
    pub n_eval: usize,
    /// Cut point in the stage-1 reward signal `sgn(X1 - threshold)`.
    #[serde(default = "default_threshold")]
    pub stage1_signal_threshold: f64,
    /// Number of cross-fitting batches; 0 or 1 fits in-sample.
    #[serde(default)]
    pub crossfit: usize,
}

impl SimConfig {
    pub fn new(c1: f64, xi: f64, n_train: usize, replications: usize, n_eval: usize, seed: u64) -> Self {
        SimConfig {
            c1,
            xi,
            n_train,
            seed,
            estimator: Estimator::Parametric,
            depth: 2,
            replications,
            n_eval,
            stage1_signal_threshold: 1.0,
            crossfit: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1.is_finite() && self.c1 > 0.0) {
            return Err(Error::invalid("c1 must be a positive real"));
        }
        if !(self.xi.is_finite() && self.xi > 0.0) {
            return Err(Error::invalid("xi must be a positive real"));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if self.n_train < 2 || self.n_eval == 0 {
            return Err(Error::invalid("n_train must be at least 2 and n_eval at least 1"));
        }
        if !self.stage1_signal_threshold.is_finite() {
            return Err(Error::invalid("stage1_signal_threshold must be finite"));
        }
        Ok(())
    }

    pub fn bounds() -> RewardBounds {
        RewardBounds::uniform(2, 0.0, 1.0)
    }
}

/// Latent confounders, exported for debugging only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentTrace {
    pub u1: Vec<u8>,
    pub u2: Vec<u8>,
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn rademacher(rng: &mut impl Rng) -> Arm {
    if rng.random_bool(0.5) {
        Arm::Plus
    } else {
        Arm::Minus
    }
}

fn draw(rng: &mut impl Rng, p_plus: f64) -> Arm {
    if rng.random::<f64>() < p_plus {
        Arm::Plus
    } else {
        Arm::Minus
    }
}

fn bern(rng: &mut impl Rng, p: f64) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

pub fn p_a1(cfg: &SimConfig, z1: Arm, u1: f64) -> f64 {
    expit(cfg.c1 * (z1.value() + 1.0) - cfg.xi * u1 - 2.0)
}

pub fn p_r1(cfg: &SimConfig, x1: f64, u1: f64, a1: Arm) -> f64 {
    let s = sgn(x1 - cfg.stage1_signal_threshold);
    expit(0.5 * (s - cfg.xi * u1 + 0.2) * (a1.value() + 1.0))
}

pub fn p_a2(cfg: &SimConfig, x1: f64, z2: Arm, r1: f64, u2: f64) -> f64 {
    expit(cfg.c1 * (z2.value() + 1.0) + x1 - 7.0 * (r1 - 0.5) - cfg.xi * (1.0 + x1) * (2.0 * u2 - 1.0))
}

pub fn p_r2(cfg: &SimConfig, x1: f64, a1: Arm, r1: f64, u2: f64, a2: Arm) -> f64 {
    expit(0.1 * (a1.value() + 1.0) + 0.4 * (1.0 - x1 + r1 - cfg.xi * (2.0 * u2 - 1.0)) * (a2.value() + 1.0))
}

pub fn generate(cfg: &SimConfig, n: usize, rng: &mut impl Rng) -> Result<(Dataset, LatentTrace)> {
    if n == 0 {
        return Err(Error::invalid("cannot generate an empty dataset"));
    }
    let mut t = Vec::with_capacity(n);
    let mut trace = LatentTrace { u1: Vec::with_capacity(n), u2: Vec::with_capacity(n) };
    for _ in 0..n {
        let x1: f64 = rng.random_range(-1.0..=1.0);
        let x2: f64 = rng.random_range(-1.0..=1.0);
        let u1 = bern(rng, 0.5);
        let z1 = rademacher(rng);
        let a1 = draw(rng, p_a1(cfg, z1, u1));
        let r1 = bern(rng, p_r1(cfg, x1, u1, a1));
        let u2 = bern(rng, 0.5);
        let z2 = rademacher(rng);
        let a2 = draw(rng, p_a2(cfg, x1, z2, r1, u2));
        let r2 = bern(rng, p_r2(cfg, x1, a1, r1, u2, a2));
        trace.u1.push(u1 as u8);
        trace.u2.push(u2 as u8);
        t.push(Trajectory {
            stages: vec![
                StageObservation { covariates: vec![x1, x2], instrument: z1, action: a1, reward: r1 },
                StageObservation { covariates: vec![], instrument: z2, action: a2, reward: r2 },
            ],
        });
    }
    Ok((Dataset::new(t, vec![2, 0])?, trace))
}

/// Exact `E[R1 + R2 | X1 = x1, X2 = x2]` under `policy`, integrating out the
/// latent confounders and the stage-1 reward.
pub fn conditional_value(policy: &Dtr, cfg: &SimConfig, x1: f64, x2: f64) -> f64 {
    let a1 = policy.act(1, &[x1, x2]);
    let a2 = [policy.act(2, &[x1, x2, a1.value(), 0.0]), policy.act(2, &[x1, x2, a1.value(), 1.0])];
    let mut v = 0.0;
    for u1 in [0.0, 1.0] {
        let pr1 = p_r1(cfg, x1, u1, a1);
        for (r1, pw) in [(0.0, 1.0 - pr1), (1.0, pr1)] {
            let a2 = a2[r1 as usize];
            let mut er2 = 0.0;
            for u2 in [0.0, 1.0] {
                er2 += 0.5 * p_r2(cfg, x1, a1, r1, u2, a2);
            }
            v += 0.5 * pw * (r1 + er2);
        }
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub raw_value: f64,
    /// Raw value over the standard-of-care value, which is exactly 1.
    pub normalized_value: f64,
    pub monte_carlo_se: f64,
    pub n_eval: usize,
}

/// Value of the all-`-1` regime: each reward is a fair coin.
pub const STD_VALUE: f64 = 1.0;

pub fn draw_eval_points(n: usize, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    (0..n).map(|_| [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]).collect()
}

const CHUNK: usize = 4096;

pub fn evaluate_on(policy: &Dtr, cfg: &SimConfig, points: &[[f64; 2]], exec: Execution) -> Result<EvalReport> {
    if policy.num_stages() != 2 {
        return Err(Error::invalid("simulation policies must have two stages"));
    }
    policy.check_schema(&[2, 0])?;
    if points.is_empty() {
        return Err(Error::invalid("no evaluation points"));
    }
    let chunks = points.len().div_ceil(CHUNK);
    let partial = exec.map(chunks, |c| {
        let mut s = 0.0;
        let mut ss = 0.0;
        for p in &points[c * CHUNK..((c + 1) * CHUNK).min(points.len())] {
            let v = conditional_value(policy, cfg, p[0], p[1]);
            s += v;
            ss += v * v;
        }
        (s, ss)
    });
    let (s, ss) = partial.iter().fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    let n = points.len() as f64;
    let mean = s / n;
    let var = if points.len() > 1 { ((ss - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(EvalReport {
        raw_value: mean,
        normalized_value: mean / STD_VALUE,
        monte_carlo_se: (var / n).sqrt(),
        n_eval: points.len(),
    })
}

pub fn true_value(policy: &Dtr, cfg: &SimConfig, n_eval: usize, rng: &mut impl Rng) -> Result<EvalReport> {
    let pts = draw_eval_points(n_eval, rng);
    evaluate_on(policy, cfg, &pts, Execution::Parallel)
}

fn arm_models(x: &Features, a: &[Arm], y: &[f64], binary: bool) -> Result<[Predictor; 2]> {
    let mut out = Vec::with_capacity(2);
    for arm in Arm::BOTH {
        let idx: Vec<usize> = (0..a.len()).filter(|&i| a[i] == arm).collect();
        let xs = x.select(&idx);
        let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        out.push(if binary {
            Predictor::Logistic(fit_logistic(&xs, &ys, None)?.0)
        } else {
            Predictor::Linear(fit_linear(&xs, &ys, None)?)
        });
    }
    Ok([out[0].clone(), out[1].clone()])
}

fn predict_arm(m: &Predictor, h: &[f64], lo: f64, hi: f64, clip: f64) -> f64 {
    let v = match m {
        Predictor::Logistic(l) => l.prob(h).clamp(clip, 1.0 - clip),
        Predictor::Linear(l) => l.predict(h),
        Predictor::Constant { value } => *value,
    };
    v.clamp(lo, hi)
}

/// Regime optimal under no unmeasured confounding, learned by backward
/// AIPW contrast estimation followed by weighted classification. The
/// instrument is ignored.
pub fn fit_sra_baseline(data: &Dataset, bounds: &RewardBounds, depth: usize, opts: &FitOptions) -> Result<Dtr> {
    bounds.check(data)?;
    let k_max = data.num_stages();
    let mut smoothed: Vec<Vec<f64>> = vec![Vec::new(); k_max];
    let mut next_max: Option<Vec<f64>> = None;
    for k in (1..=k_max).rev() {
        let a = data.actions(k);
        if a.iter().all(|&v| v == a[0]) {
            return Err(Error::invalid(format!("no treatment variation at stage {k}")));
        }
        let tail = bounds.tail(k);
        let r = data.rewards(k);
        let y: Vec<f64> = match &next_max {
            None => r,
            Some(v) => r.iter().zip(v).map(|(a, b)| tail.clamp(a + b)).collect(),
        };
        let binary = next_max.is_none() && crate::nuisance::is_binary_outcome(&y, tail);
        let x = data.histories(k);
        let mu = arm_models(&x, &a, &y, binary)?;
        let ind: Vec<f64> = a.iter().map(|&v| if v == Arm::Plus { 1.0 } else { 0.0 }).collect();
        let (prop, _) = fit_logistic(&x, &ind, None)?;
        let phi: Vec<f64> = x
            .rows()
            .enumerate()
            .map(|(i, h)| {
                let m = |arm: Arm| predict_arm(&mu[arm.index()], h, tail.lower, tail.upper, opts.clip);
                let p_plus = prop.prob(h).clamp(opts.clip, 1.0 - opts.clip);
                let p_obs = if a[i] == Arm::Plus { p_plus } else { 1.0 - p_plus };
                m(Arm::Plus) - m(Arm::Minus) + a[i].value() * (y[i] - m(a[i])) / p_obs
            })
            .collect();
        let smooth = fit_linear(&x, &phi, None)?;
        smoothed[k - 1] = x.rows().map(|h| smooth.predict(h)).collect();
        if k > 1 {
            // Continuation for the previous stage: best fitted arm at this stage.
            next_max = Some(
                x.rows()
                    .map(|h| {
                        Arm::BOTH
                            .iter()
                            .map(|&arm| predict_arm(&mu[arm.index()], h, tail.lower, tail.upper, opts.clip))
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .collect(),
            );
        }
    }
    let stages = project_contrasts(data, &smoothed, depth, opts)?;
    Ok(Dtr { kind: DtrKind::Sra, lambda: None, stages })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    BStd,
    UpStd,
    BProsp,
    UpProsp,
    BSra,
    UpSra,
    Iv1,
    Iv0,
    IvHalf,
}

impl Regime {
    pub const ALL: [Regime; 9] = [
        Regime::BStd,
        Regime::UpStd,
        Regime::BProsp,
        Regime::UpProsp,
        Regime::BSra,
        Regime::UpSra,
        Regime::Iv1,
        Regime::Iv0,
        Regime::IvHalf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regime::BStd => "b_std",
            Regime::UpStd => "up_std",
            Regime::BProsp => "b_prosp",
            Regime::UpProsp => "up_prosp",
            Regime::BSra => "b_sra",
            Regime::UpSra => "up_sra",
            Regime::Iv1 => "iv_1",
            Regime::Iv0 => "iv_0",
            Regime::IvHalf => "iv_half",
        }
    }
}

/// Normalized values of the nine regimes for one replication, in `Regime::ALL` order.
pub type RepValues = [f64; 9];

pub fn replication_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

/// Fits all nine regimes on one training set.
pub fn fit_regimes(data: &Dataset, cfg: &SimConfig, seed: u64, opts: &FitOptions) -> Result<Vec<Dtr>> {
    let bounds = SimConfig::bounds();
    let std = Dtr::standard_of_care(2);
    let prosp = Dtr::prospective(2);
    let sra = fit_sra_baseline(data, &bounds, cfg.depth, opts)?;
    let m = cfg.crossfit;
    let up = |b: &Dtr, name: &str| {
        fit_ivimproved_crossfit(data, b, name, &bounds, cfg.depth, m, seed, opts).map(|f| f.policy)
    };
    let iv = |l: WeightSpec| fit_ivoptimal_crossfit(data, &bounds, &l, cfg.depth, m, seed, opts).map(|f| f.policy);
    Ok(vec![
        std.clone(),
        up(&std, "std")?,
        prosp.clone(),
        up(&prosp, "prosp")?,
        sra.clone(),
        up(&sra, "sra")?,
        iv(WeightSpec::Worst)?,
        iv(WeightSpec::Best)?,
        iv(WeightSpec::Minmax)?,
    ])
}

pub fn run_replication(cfg: &SimConfig, rep: usize) -> Result<RepValues> {
    let mut rng = replication_rng(cfg.seed, rep);
    let (data, _) = generate(cfg, cfg.n_train, &mut rng)?;
    let points = draw_eval_points(cfg.n_eval, &mut rng);
    let opts = FitOptions { exec: Execution::Sequential, ..FitOptions::default() };
    let policies = fit_regimes(&data, cfg, cfg.seed ^ rep as u64, &opts)?;
    let mut out = [0.0; 9];
    for (o, p) in out.iter_mut().zip(&policies) {
        *o = evaluate_on(p, cfg, &points, Execution::Sequential)?.normalized_value;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Summary {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Summary { mean: values.iter().sum::<f64>() / values.len() as f64, q25: quantile(&s, 0.25), q75: quantile(&s, 0.75) }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub config: SimConfig,
    pub values: Vec<RepValues>,
}

impl CellResult {
    pub fn column(&self, r: Regime) -> Vec<f64> {
        let j = Regime::ALL.iter().position(|&x| x == r).expect("regime listed");
        self.values.iter().map(|v| v[j]).collect()
    }

    pub fn summary(&self) -> Vec<(Regime, Summary)> {
        Regime::ALL.iter().map(|&r| (r, summarize(&self.column(r)))).collect()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["rep", "regime", "value"])?;
        for (rep, row) in self.values.iter().enumerate() {
            for (r, v) in Regime::ALL.iter().zip(row) {
                w.write_record([rep.to_string(), r.name().to_string(), v.to_string()])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
    }
}

pub fn run_cell(cfg: &SimConfig, exec: Execution) -> Result<CellResult> {
    cfg.validate()?;
    let values = exec.map(cfg.replications, |rep| run_replication(cfg, rep)).into_iter().collect::<Result<Vec<_>>>()?;
    Ok(CellResult { config: cfg.clone(), values })
}
