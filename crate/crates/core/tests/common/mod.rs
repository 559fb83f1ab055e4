#![allow(dead_code)]

use ivdtr::data::{StageObservation, Trajectory};
use ivdtr::{Arm, Dataset, Features};
use rand::Rng;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn arm(rng: &mut impl Rng, p_plus: f64) -> Arm {
    if rng.random::<f64>() < p_plus {
        Arm::Plus
    } else {
        Arm::Minus
    }
}

/// Noncompliant IV data with a latent confounder. Rewards lie in [0, 1].
pub fn iv_dataset(rng: &mut impl Rng, n: usize, dims: &[usize], binary: bool) -> Dataset {
    let mut trajectories = Vec::with_capacity(n);
    for _ in 0..n {
        let mut stages = Vec::with_capacity(dims.len());
        for &d in dims {
            let covariates: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x0 = covariates.first().copied().unwrap_or(0.0);
            let u = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let instrument = arm(rng, 0.5);
            let action = arm(rng, sigmoid(1.5 * instrument.value() + 0.8 * u + 0.5 * x0));
            let mean = sigmoid(0.7 * action.value() * x0 + 0.6 * u - 0.2);
            let reward = if binary {
                if rng.random::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            } else {
                (mean + 0.3 * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0)
            };
            stages.push(StageObservation { covariates, instrument, action, reward });
        }
        trajectories.push(Trajectory { stages });
    }
    Dataset::new(trajectories, dims.to_vec()).unwrap()
}

/// Manski-Pepper interval written out from the bound formulas, independent
/// of the library code. Inputs: `P(Z=+1)`, `P(A=a|Z=-1)`, `P(A=a|Z=+1)`,
/// `E[Y|Z=-1,A=a]`, `E[Y|Z=+1,A=a]`.
pub fn mp_oracle(pz: f64, pa_m: f64, pa_p: f64, mu_m: f64, mu_p: f64, lo: f64, hi: f64) -> (f64, f64) {
    let psi = |pa: f64, mu: f64, c: f64| c * (1.0 - pa) + mu * pa;
    let lower = (1.0 - pz) * psi(pa_m, mu_m, lo) + pz * f64::max(psi(pa_m, mu_m, lo), psi(pa_p, mu_p, lo));
    let upper = (1.0 - pz) * f64::min(psi(pa_m, mu_m, hi), psi(pa_p, mu_p, hi)) + pz * psi(pa_p, mu_p, hi);
    (lower, upper)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            let pivot = a[c].clone();
            for (x, p) in a[r][c..].iter_mut().zip(&pivot[c..]) {
                *x -= f * p;
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Least squares with intercept via the normal equations.
pub fn ols_oracle(x: &Features, y: &[f64]) -> Vec<f64> {
    let p = x.ncols() + 1;
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (i, h) in x.rows().enumerate() {
        let row: Vec<f64> = std::iter::once(1.0).chain(h.iter().copied()).collect();
        for r in 0..p {
            xty[r] += row[r] * y[i];
            for c in 0..p {
                xtx[r][c] += row[r] * row[c];
            }
        }
    }
    gauss_solve(xtx, xty)
}

fn leaf_loss(idx: &[usize], labels: &[Arm], w: &[f64]) -> f64 {
    let plus: f64 = idx.iter().filter(|&&i| labels[i] == Arm::Plus).map(|&i| w[i]).sum();
    let minus: f64 = idx.iter().filter(|&&i| labels[i] == Arm::Minus).map(|&i| w[i]).sum();
    plus.min(minus)
}

fn candidate_splits(x: &Features) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for f in 0..x.ncols() {
        let mut v: Vec<f64> = x.rows().map(|h| h[f]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        out.extend(v.windows(2).map(|w| (f, 0.5 * (w[0] + w[1]))));
    }
    out
}

fn best_loss(x: &Features, idx: &[usize], labels: &[Arm], w: &[f64], depth: usize, splits: &[(usize, f64)]) -> f64 {
    let mut best = leaf_loss(idx, labels, w);
    if depth == 0 {
        return best;
    }
    for &(f, t) in splits {
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x.row(i)[f] < t);
        let loss = best_loss(x, &l, labels, w, depth - 1, splits) + best_loss(x, &r, labels, w, depth - 1, splits);
        best = best.min(loss);
    }
    best
}

/// Minimum weighted misclassification over every tree of the given depth
/// whose thresholds are midpoints of observed values.
pub fn exhaustive_tree_loss(x: &Features, labels: &[Arm], w: &[f64], depth: usize) -> f64 {
    let idx: Vec<usize> = (0..x.nrows()).collect();
    best_loss(x, &idx, labels, w, depth, &candidate_splits(x))
}

pub struct TreeInstance {
    pub x: Features,
    pub labels: Vec<Arm>,
    pub weights: Vec<f64>,
    pub depth: usize,
}

/// Fifty small instances on which greedy induction is provably optimal:
/// single-threshold patterns with distractor features, and one-dimensional
/// (-, +, -) patterns whose middle block outweighs both ends together.
pub fn curated_tree_corpus(rng: &mut impl Rng) -> Vec<TreeInstance> {
    let mut out = Vec::with_capacity(50);
    for _ in 0..25 {
        let n = rng.random_range(4..=12);
        let d = rng.random_range(1..=3);
        let f = rng.random_range(0..d);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        let cut = vals[rng.random_range(1..n)];
        let flip = rng.random_bool(0.5);
        let labels = rows.iter().map(|r| if (r[f] < cut) ^ flip { Arm::Minus } else { Arm::Plus }).collect();
        let weights = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        out.push(TreeInstance { x: Features::from_rows(&rows), labels, weights, depth: rng.random_range(1..=2) });
    }
    for _ in 0..25 {
        let n = rng.random_range(6..=12);
        let a = rng.random_range(1..=(n - 4) / 2);
        let b = rng.random_range(1..=(n - 4) / 2);
        let mid = n - a - b;
        let mut xs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        xs.sort_by(f64::total_cmp);
        let mut labels = vec![Arm::Minus; a];
        labels.extend(vec![Arm::Plus; mid]);
        labels.extend(vec![Arm::Minus; b]);
        let mut weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let outer: f64 = weights[..a].iter().chain(&weights[a + mid..]).sum();
        let inner: f64 = weights[a..a + mid].iter().sum();
        let scale = (1.5 * outer / inner).max(1.0);
        for w in &mut weights[a..a + mid] {
            *w *= scale;
        }
        let rows: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
        out.push(TreeInstance { x: Features::from_rows(&rows), labels, weights, depth: 2 });
    }
    out
}

/// Largest gap between fitted cell probabilities and empirical frequencies
/// for a logistic fit on one binary feature.
pub fn saturated_logistic_gap(rng: &mut impl Rng) -> f64 {
    let n = rng.random_range(20..200);
    let p = [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)];
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let g = i % 2;
        rows.push(vec![g as f64]);
        y.push(if rng.random::<f64>() < p[g] { 1.0 } else { 0.0 });
    }
    for g in 0..2 {
        // keep both outcomes present in each cell
        y[g] = 1.0;
        y[g + 2] = 0.0;
    }
    let x = Features::from_rows(&rows);
    let (m, info) = ivdtr::nuisance::fit_logistic(&x, &y, None).unwrap();
    assert!(info.converged);
    (0..2)
        .map(|g| {
            let idx: Vec<usize> = (0..n).filter(|i| i % 2 == g).collect();
            let freq = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
            (m.prob(&[g as f64]) - freq).abs()
        })
        .fold(0.0, f64::max)
}

/// Largest coefficient gap between the library's linear fit and the
/// normal-equation oracle on a random `n x d` design.
pub fn ols_gap(rng: &mut impl Rng, n: usize, d: usize) -> f64 {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let beta: Vec<f64> = (0..=d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| beta[0] + r.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-0.5..0.5))
        .collect();
    let x = Features::from_rows(&rows);
    let m = ivdtr::nuisance::fit_linear(&x, &y, None).unwrap();
    let oracle = ols_oracle(&x, &y);
    std::iter::once(m.intercept)
        .chain(m.coefficients.iter().copied())
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Largest relative gap between the analytic logistic score and a central
/// finite difference of the penalized log-likelihood, at the fitted
/// parameters and at a random point.
pub fn score_fd_gap(rng: &mut impl Rng) -> f64 {
    let n = rng.random_range(30..120);
    let d = rng.random_range(1..4);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = rows.iter().map(|r| if rng.random::<f64>() < sigmoid(r[0] - 0.3) { 1.0 } else { 0.0 }).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let x = Features::from_rows(&rows);
    let (m, _) = ivdtr::nuisance::fit_logistic(&x, &y, Some(&w)).unwrap();
    let fitted: Vec<f64> = std::iter::once(m.intercept).chain(m.coefficients.iter().copied()).collect();
    let random: Vec<f64> = (0..=d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut worst: f64 = 0.0;
    for beta in [fitted, random] {
        let g = ivdtr::nuisance::logistic_score(&x, &y, &w, &beta);
        for j in 0..=d {
            let step = 1e-5 * beta[j].abs().max(1.0);
            let mut up = beta.clone();
            let mut dn = beta.clone();
            up[j] += step;
            dn[j] -= step;
            let fd = (ivdtr::nuisance::logistic_objective(&x, &y, &w, &up)
                - ivdtr::nuisance::logistic_objective(&x, &y, &w, &dn))
                / (2.0 * step);
            // gradients vanish at the optimum, so scale by at least one
            worst = worst.max((g[j] - fd).abs() / g[j].abs().max(1.0));
        }
    }
    worst
}

/// Draws one random nuisance configuration and checks the interval
/// properties on it: agreement with [`mp_oracle`], validity after repair,
/// monotonicity under widening of the outcome range, the lambda extremes
/// and the collapse under full compliance.
pub fn check_mp_config(rng: &mut impl Rng) -> std::result::Result<(), String> {
    use ivdtr::bounds::{mp_from_inputs, mp_raw, weighted_q, CellInputs};
    use ivdtr::Interval;

    let lo = rng.random_range(-2.0..1.0);
    let tail = Interval::new(lo, lo + rng.random_range(0.1..3.0));
    let c = CellInputs {
        p_z_plus: rng.random_range(0.01..0.99),
        p_a: [rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0)],
        mu: [rng.random_range(tail.lower..=tail.upper), rng.random_range(tail.lower..=tail.upper)],
    };
    let (ol, ou) = mp_oracle(c.p_z_plus, c.p_a[0], c.p_a[1], c.mu[0], c.mu[1], tail.lower, tail.upper);
    let (rl, ru) = mp_raw(&c, tail);
    if (rl - ol).abs() > 1e-12 || (ru - ou).abs() > 1e-12 {
        return Err(format!("raw ends ({rl}, {ru}) differ from oracle ({ol}, {ou})"));
    }
    let (iv, repaired) = mp_from_inputs(&c, tail);
    if !(iv.lower <= iv.upper && iv.lower >= tail.lower && iv.upper <= tail.upper) {
        return Err(format!("invalid interval {iv:?} for tail {tail:?}"));
    }
    if !repaired {
        let wide = Interval::new(tail.lower - rng.random_range(0.0..1.0), tail.upper + rng.random_range(0.0..1.0));
        let (w, _) = mp_from_inputs(&c, wide);
        if w.lower > iv.lower || w.upper < iv.upper {
            return Err(format!("widening {tail:?} to {wide:?} shrank {iv:?} to {w:?}"));
        }
    }
    if weighted_q(iv, 1.0).unwrap() != iv.lower || weighted_q(iv, 0.0).unwrap() != iv.upper {
        return Err(format!("lambda extremes do not return the ends of {iv:?}"));
    }
    let lam = rng.random_range(0.0..=1.0);
    let q = weighted_q(iv, lam).unwrap();
    if q < iv.lower - 1e-12 || q > iv.upper + 1e-12 {
        return Err(format!("weighted value {q} outside {iv:?}"));
    }
    let clip = rng.random_range(1e-6..0.05);
    let m = rng.random_range(tail.lower..=tail.upper);
    let compliant = CellInputs { p_z_plus: c.p_z_plus, p_a: [1.0 - clip, 1.0 - clip], mu: [m, m] };
    let (ci, _) = mp_from_inputs(&compliant, tail);
    if ci.width() > 2.0 * clip * tail.width() + 1e-12 || !ci.contains_approx(m, 1e-12) {
        return Err(format!("compliant interval {ci:?} too wide or misses {m}"));
    }
    Ok(())
}

/// Fits the full pipeline on a random single-stage dataset with lambda 1/2
/// and counts training histories where its rule disagrees with the min-max
/// rule computed directly from [`mp_oracle`] intervals.
pub fn k1_minmax_mismatches(rng: &mut impl Rng) -> usize {
    use ivdtr::qlearn::backward_induct;
    use ivdtr::{FitOptions, RewardBounds, WeightSpec};

    let n = rng.random_range(40..150);
    let d = rng.random_range(1..=2);
    let binary = rng.random_bool(0.5);
    let data = iv_dataset(rng, n, &[d], binary);
    let bounds = RewardBounds::uniform(1, 0.0, 1.0);
    let (est, q_rule) = backward_induct(&data, &bounds, &WeightSpec::Minmax, &FitOptions::default()).unwrap();
    let ns = &est[0].nuisance;
    let x = data.histories(1);
    let mut mismatches = 0;
    for (i, h) in x.rows().enumerate() {
        let pz = ns.propensity.p_z(h, Arm::Plus);
        let q = |a: Arm| {
            let (l, u) = mp_oracle(
                pz,
                ns.propensity.p_a(h, Arm::Minus, a),
                ns.propensity.p_a(h, Arm::Plus, a),
                ns.outcome.predict(h, Arm::Minus, a),
                ns.outcome.predict(h, Arm::Plus, a),
                0.0,
                1.0,
            );
            let (l, u) = (l.clamp(0.0, 1.0), u.clamp(0.0, 1.0));
            // a crossed interval collapses to its midpoint
            0.5 * l + 0.5 * u
        };
        let direct = if q(Arm::Plus) >= q(Arm::Minus) { Arm::Plus } else { Arm::Minus };
        if q_rule.act(1, h) != direct || Arm::from_sign(est[0].contrast[i], Arm::Plus) != direct {
            mismatches += 1;
        }
    }
    mismatches
}

/// [`mp_oracle`] clipped to `[lo, hi]`; a crossed result becomes its midpoint.
pub fn mp_oracle_repaired(pz: f64, pa_m: f64, pa_p: f64, mu_m: f64, mu_p: f64, lo: f64, hi: f64) -> (f64, f64) {
    let (l, u) = mp_oracle(pz, pa_m, pa_p, mu_m, mu_p, lo, hi);
    let (l, u) = (l.clamp(lo, hi), u.clamp(lo, hi));
    if l > u {
        let m = 0.5 * (l + u);
        (m, m)
    } else {
        (l, u)
    }
}

/// Constant-valued nuisance models with outcome means inside `tail`.
pub fn random_constant_models(
    rng: &mut impl Rng,
    tail: ivdtr::Interval,
    clip: f64,
) -> (ivdtr::nuisance::Propensity, ivdtr::nuisance::OutcomeModel) {
    use ivdtr::nuisance::{OutcomeModel, Predictor, Propensity};
    let mut prob = || Predictor::Constant { value: rng.random_range(clip..=1.0 - clip) };
    let prop = Propensity { pz: prob(), pa_given_z: [prob(), prob()], clip };
    let mut mean = || Predictor::Constant { value: rng.random_range(tail.lower..=tail.upper) };
    let outcome = OutcomeModel { cells: [mean(), mean(), mean(), mean()], range: tail, clip };
    (prop, outcome)
}

/// Oracle interval of arm `a` at `h` from fitted models.
pub fn model_interval(
    prop: &ivdtr::nuisance::Propensity,
    outcome: &ivdtr::nuisance::OutcomeModel,
    h: &[f64],
    a: Arm,
    tail: ivdtr::Interval,
) -> (f64, f64) {
    mp_oracle_repaired(
        prop.p_z(h, Arm::Plus),
        prop.p_a(h, Arm::Minus, a),
        prop.p_a(h, Arm::Plus, a),
        outcome.predict(h, Arm::Minus, a),
        outcome.predict(h, Arm::Plus, a),
        tail.lower,
        tail.upper,
    )
}

/// Single-stage improvement on random constant models against the closed
/// form rule with `L = lower(+1) - upper(-1)` and `U = upper(+1) - lower(-1)`.
/// Returns a description of the first disagreement, if any.
pub fn single_stage_improvement_check(rng: &mut impl Rng) -> Option<String> {
    use ivdtr::improve::{improve_rule_single, RelativeModels, RelativeTails};
    use ivdtr::Interval;

    let lo = rng.random_range(-1.0..1.0);
    let tail = Interval::new(lo, lo + rng.random_range(0.1..2.0));
    let (propensity, reward) = random_constant_models(rng, tail, 1e-3);
    let baseline = arm(rng, 0.5);
    let (pl, pu) = model_interval(&propensity, &reward, &[], Arm::Plus, tail);
    let (ml, mu) = model_interval(&propensity, &reward, &[], Arm::Minus, tail);
    let (l, u) = (pl - mu, pu - ml);
    let expected = improve_rule_single(l, u, baseline).unwrap();
    let models = RelativeModels { propensity, reward, next: None };
    let tails = RelativeTails { reward: tail, continuation: Interval::new(0.0, 0.0), sum: tail };
    let got = models.evaluate(&[], baseline, &tails).action(baseline);
    (got != expected).then(|| format!("L={l} U={u} baseline={baseline:?}: rule {expected:?}, fitted {got:?}"))
}

/// Largest gap between the generic-stage relative contrast with a zero
/// continuation and the last-stage formula.
pub fn terminal_reduction_gap(rng: &mut impl Rng) -> f64 {
    use ivdtr::improve::{relative_contrast_stage_k, relative_contrast_stage_last, ContinuationModels, RelativeTails};
    use ivdtr::nuisance::{OutcomeModel, Predictor};
    use ivdtr::Interval;

    let lo = rng.random_range(-1.0..1.0);
    let tail = Interval::new(lo, lo + rng.random_range(0.1..2.0));
    let (prop, reward) = random_constant_models(rng, tail, 1e-3);
    let zero = Interval::new(0.0, 0.0);
    let continuation =
        OutcomeModel { cells: std::array::from_fn(|_| Predictor::Constant { value: 0.0 }), range: zero, clip: 1e-3 };
    let next = ContinuationModels { continuation, sum: reward.clone() };
    let tails = RelativeTails { reward: tail, continuation: zero, sum: tail };
    let baseline = arm(rng, 0.5);
    let a = relative_contrast_stage_k(&prop, &reward, &next, &[], baseline, &tails);
    let b = relative_contrast_stage_last(&prop, &reward, &[], baseline, tail);
    (a.stored - b.stored).abs().max((a.keep - b.keep).abs()).max((a.flip - b.flip).abs())
}

/// Refits cross-fitted contrasts after replacing every record of one batch
/// with noise. Returns a description of the first held-out contrast or
/// complement model that changed.
pub fn leakage_check(rng: &mut impl Rng) -> Option<String> {
    use ivdtr::crossfit::{crossfit_stage_contrasts, weighted_contrast};
    use ivdtr::data::assign_batches;
    use ivdtr::{FitOptions, RewardBounds};

    let n = rng.random_range(60..160);
    let k = rng.random_range(1..=2);
    let binary = rng.random_bool(0.5);
    let data = iv_dataset(rng, n, &vec![2; k], binary);
    let stage = rng.random_range(1..=k);
    let tail = RewardBounds::uniform(k, 0.0, 1.0).tail(stage);
    let m = rng.random_range(2..=(n / 10).min(5));
    let batches = assign_batches(n, m, rng.random()).unwrap();
    let lambda = rng.random_range(0.0..=1.0);
    let opts = FitOptions::default();
    let x = data.histories(stage);
    let (z, a, y) = (data.instruments(stage), data.actions(stage), data.rewards(stage));
    let base = crossfit_stage_contrasts(&x, &z, &a, &y, tail, lambda, &batches, &opts).unwrap();
    for j in 0..m {
        let members = batches.members(j);
        let mut rows: Vec<Vec<f64>> = x.rows().map(|r| r.to_vec()).collect();
        let (mut z2, mut a2, mut y2) = (z.clone(), a.clone(), y.clone());
        for &i in &members {
            for v in &mut rows[i] {
                *v = rng.random_range(-5.0..5.0);
            }
            z2[i] = arm(rng, 0.5);
            a2[i] = arm(rng, 0.5);
            y2[i] = if binary {
                f64::from(u8::from(rng.random_bool(0.5)))
            } else {
                rng.random_range(tail.lower..=tail.upper)
            };
        }
        let x2 = Features::from_rows(&rows);
        let noisy = crossfit_stage_contrasts(&x2, &z2, &a2, &y2, tail, lambda, &batches, &opts).unwrap();
        if noisy.models[j] != base.models[j] {
            return Some(format!("model for batch {j} changed after perturbing batch {j}"));
        }
        for &i in &members {
            let c = weighted_contrast(&noisy.models[j], x.row(i), tail, lambda);
            if c.to_bits() != base.contrasts[i].to_bits() {
                return Some(format!("contrast of sample {i} moved from {} to {c}", base.contrasts[i]));
            }
        }
    }
    None
}

/// `P(A1 = +1)` by enumerating the instrument and the stage-1 confounder.
pub fn p_a1_plus(c1: f64, xi: f64) -> f64 {
    let mut p = 0.0;
    for z in [-1.0, 1.0] {
        for u in [0.0, 1.0] {
            p += 0.25 * sigmoid(c1 * (z + 1.0) - xi * u - 2.0);
        }
    }
    p
}

/// Exact `E[R1 + R2 | x1]` for fixed decision functions, written directly
/// from the data-generating process.
pub fn dgp_value(xi: f64, x1: f64, a1: f64, a2_given_r1: impl Fn(f64) -> f64) -> f64 {
    let sgn = if x1 > 1.0 {
        1.0
    } else if x1 < 1.0 {
        -1.0
    } else {
        0.0
    };
    let mut v = 0.0;
    for u1 in [0.0, 1.0] {
        let pr1 = sigmoid(0.5 * (sgn - xi * u1 + 0.2) * (a1 + 1.0));
        for (r1, w) in [(0.0, 1.0 - pr1), (1.0, pr1)] {
            let a2 = a2_given_r1(r1);
            for u2 in [0.0, 1.0] {
                let pr2 = sigmoid(0.1 * (a1 + 1.0) + 0.4 * (1.0 - x1 + r1 - xi * (2.0 * u2 - 1.0)) * (a2 + 1.0));
                v += 0.25 * w * (r1 + pr2);
            }
        }
    }
    v
}
