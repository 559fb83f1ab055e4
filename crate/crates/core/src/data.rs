//! Trajectory data, CSV ingestion and history construction.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A binary action or instrument level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Arm {
    Minus,
    Plus,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Minus, Arm::Plus];

    pub fn from_sign(x: f64, tie: Arm) -> Arm {
        if x > 0.0 {
            Arm::Plus
        } else if x < 0.0 {
            Arm::Minus
        } else {
            tie
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Arm::Minus => -1.0,
            Arm::Plus => 1.0,
        }
    }

    pub fn flip(self) -> Arm {
        match self {
            Arm::Minus => Arm::Plus,
            Arm::Plus => Arm::Minus,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Arm::Minus => 0,
            Arm::Plus => 1,
        }
    }
}

impl From<Arm> for i8 {
    fn from(a: Arm) -> i8 {
        match a {
            Arm::Minus => -1,
            Arm::Plus => 1,
        }
    }
}

impl TryFrom<i8> for Arm {
    type Error = String;
    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            -1 => Ok(Arm::Minus),
            1 => Ok(Arm::Plus),
            _ => Err(format!("{v} not in {{-1,+1}}")),
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", i8::from(*self))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageObservation {
    pub covariates: Vec<f64>,
    pub instrument: Arm,
    pub action: Arm,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub stages: Vec<StageObservation>,
}

/// Row-major dense matrix of stage histories.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * d, "feature buffer has wrong length");
        Features { n, d, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            assert_eq!(r.len(), d, "ragged rows");
            data.extend_from_slice(r);
        }
        Features { n: rows.len(), d, data }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n).map(move |i| self.row(i))
    }

    /// Rows at `idx`, in the given order.
    pub fn select(&self, idx: &[usize]) -> Features {
        let mut data = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Features { n: idx.len(), d: self.d, data }
    }
}

/// Feature vector available when deciding at one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct History(pub Vec<f64>);

impl History {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Number of history features at stage `k` (1-based).
pub fn history_dim(covariate_dims: &[usize], k: usize) -> usize {
    covariate_dims[..k].iter().sum::<usize>() + 2 * (k - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    trajectories: Vec<Trajectory>,
    covariate_dims: Vec<usize>,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>, covariate_dims: Vec<usize>) -> Result<Self> {
        if covariate_dims.is_empty() {
            return Err(Error::invalid("dataset needs at least one stage"));
        }
        if trajectories.is_empty() {
            return Err(Error::invalid("empty dataset"));
        }
        let k = covariate_dims.len();
        for (i, t) in trajectories.iter().enumerate() {
            if t.stages.len() != k {
                return Err(Error::invalid(format!("trajectory {i} has {} stages, expected {k}", t.stages.len())));
            }
            for (s, (obs, &dim)) in t.stages.iter().zip(&covariate_dims).enumerate() {
                if obs.covariates.len() != dim {
                    return Err(Error::invalid(format!(
                        "trajectory {i} stage {} has {} covariates, expected {dim}",
                        s + 1,
                        obs.covariates.len()
                    )));
                }
                if !obs.reward.is_finite() || obs.covariates.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid(format!("trajectory {i} stage {} has a non-finite value", s + 1)));
                }
            }
        }
        Ok(Dataset { trajectories, covariate_dims })
    }

    pub fn n(&self) -> usize {
        self.trajectories.len()
    }

    pub fn num_stages(&self) -> usize {
        self.covariate_dims.len()
    }

    pub fn covariate_dims(&self) -> &[usize] {
        &self.covariate_dims
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn history_dim(&self, k: usize) -> usize {
        history_dim(&self.covariate_dims, k)
    }

    pub fn histories(&self, k: usize) -> Features {
        let d = self.history_dim(k);
        let mut data = Vec::with_capacity(self.n() * d);
        for t in &self.trajectories {
            push_history(t, k, &mut data);
        }
        Features::new(self.n(), d, data)
    }

    pub fn instruments(&self, k: usize) -> Vec<Arm> {
        self.trajectories.iter().map(|t| t.stages[k - 1].instrument).collect()
    }

    pub fn actions(&self, k: usize) -> Vec<Arm> {
        self.trajectories.iter().map(|t| t.stages[k - 1].action).collect()
    }

    pub fn rewards(&self, k: usize) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.stages[k - 1].reward).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        let t = idx.iter().map(|&i| self.trajectories[i].clone()).collect();
        Dataset::new(t, self.covariate_dims.clone())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(csv_header(&self.covariate_dims))?;
        for t in &self.trajectories {
            let mut rec = Vec::new();
            for s in &t.stages {
                rec.extend(s.covariates.iter().map(|x| x.to_string()));
                rec.push(s.instrument.to_string());
                rec.push(s.action.to_string());
                rec.push(s.reward.to_string());
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }
}

fn push_history(t: &Trajectory, k: usize, out: &mut Vec<f64>) {
    for (s, obs) in t.stages[..k].iter().enumerate() {
        out.extend_from_slice(&obs.covariates);
        if s + 1 < k {
            out.push(obs.action.value());
            out.push(obs.reward);
        }
    }
}

/// History at stage `k`: `[x_1, a_1, r_1, x_2, ..., a_{k-1}, r_{k-1}, x_k]`.
pub fn history_at(traj: &Trajectory, k: usize) -> Result<History> {
    if k == 0 || k > traj.stages.len() {
        return Err(Error::invalid(format!("stage {k} out of range 1..={}", traj.stages.len())));
    }
    let mut v = Vec::new();
    push_history(traj, k, &mut v);
    Ok(History(v))
}

pub fn csv_header(dims: &[usize]) -> Vec<String> {
    let mut h = Vec::new();
    for (s, &d) in dims.iter().enumerate() {
        let k = s + 1;
        h.extend((1..=d).map(|j| format!("x{k}_{j}")));
        h.push(format!("z{k}"));
        h.push(format!("a{k}"));
        h.push(format!("r{k}"));
    }
    h
}

/// Recovers per-stage covariate dimensions from a header.
pub fn infer_schema(header: &[&str]) -> Result<Vec<usize>> {
    let mut dims = Vec::new();
    let mut pos = 0;
    while pos < header.len() {
        let k = dims.len() + 1;
        let mut d = 0;
        while pos < header.len() && header[pos] == format!("x{k}_{}", d + 1) {
            d += 1;
            pos += 1;
        }
        for name in ["z", "a", "r"] {
            if header.get(pos).map(|s| s.trim()) != Some(format!("{name}{k}").as_str()) {
                return Err(Error::invalid(format!("malformed header: expected {name}{k} at column {}", pos + 1)));
            }
            pos += 1;
        }
        dims.push(d);
    }
    if dims.is_empty() {
        return Err(Error::invalid("malformed header: no columns"));
    }
    Ok(dims)
}

fn parse_arm(cell: &str, what: &str, row: usize) -> Result<Arm> {
    match cell.trim() {
        "1" | "+1" => Ok(Arm::Plus),
        "-1" => Ok(Arm::Minus),
        other => Err(Error::invalid(format!("row {row}: {what} not in {{-1,+1}} (got {other:?})"))),
    }
}

fn parse_real(cell: &str, col: &str, row: usize) -> Result<f64> {
    let c = cell.trim();
    if c.is_empty() {
        return Err(Error::invalid(format!("row {row}: missing value in column {col}")));
    }
    let v: f64 =
        c.parse().map_err(|_| Error::invalid(format!("row {row}: non-numeric value {c:?} in column {col}")))?;
    if !v.is_finite() {
        return Err(Error::invalid(format!("row {row}: non-finite value in column {col}")));
    }
    Ok(v)
}

pub fn parse_csv(text: &str, dims: Option<&[usize]>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let dims = match dims {
        Some(d) => {
            let expected = csv_header(d);
            if header != expected {
                return Err(Error::invalid(format!("malformed header: expected {}", expected.join(","))));
            }
            d.to_vec()
        }
        None => infer_schema(&header.iter().map(String::as_str).collect::<Vec<_>>())?,
    };
    let mut trajectories = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        if rec.len() != header.len() {
            return Err(Error::invalid(format!(
                "row {row}: inconsistent row width {} (expected {})",
                rec.len(),
                header.len()
            )));
        }
        let mut pos = 0;
        let mut stages = Vec::with_capacity(dims.len());
        for (s, &d) in dims.iter().enumerate() {
            let k = s + 1;
            let mut cov = Vec::with_capacity(d);
            for _ in 0..d {
                cov.push(parse_real(&rec[pos], &header[pos], row)?);
                pos += 1;
            }
            let instrument = parse_arm(&rec[pos], &format!("instrument z{k}"), row)?;
            let action = parse_arm(&rec[pos + 1], &format!("action a{k}"), row)?;
            let reward = parse_real(&rec[pos + 2], &header[pos + 2], row)?;
            pos += 3;
            stages.push(StageObservation { covariates: cov, instrument, action, reward });
        }
        trajectories.push(Trajectory { stages });
    }
    Dataset::new(trajectories, dims)
}

/// Loads a trajectory CSV. With `dims = None` the schema is read from the header.
pub fn load_csv(path: impl AsRef<Path>, dims: Option<&[usize]>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, dims)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchAssignment {
    pub batch: Vec<usize>,
    pub m: usize,
}

impl BatchAssignment {
    /// Indices in batch `j`, ascending.
    pub fn members(&self, j: usize) -> Vec<usize> {
        (0..self.batch.len()).filter(|&i| self.batch[i] == j).collect()
    }

    /// Indices outside batch `j`, ascending.
    pub fn complement(&self, j: usize) -> Vec<usize> {
        (0..self.batch.len()).filter(|&i| self.batch[i] != j).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.m];
        for &b in &self.batch {
            s[b] += 1;
        }
        s
    }
}

/// Random balanced partition of `0..n` into `m` batches (0-based labels).
pub fn assign_batches(n: usize, m: usize, seed: u64) -> Result<BatchAssignment> {
    if m < 2 {
        return Err(Error::invalid("cross-fitting needs at least 2 batches"));
    }
    if m > n {
        return Err(Error::invalid(format!("{m} batches requested for {n} samples")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut batch = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        batch[i] = pos % m;
    }
    Ok(BatchAssignment { batch, m })
}
