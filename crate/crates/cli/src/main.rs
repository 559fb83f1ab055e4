mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ivdtr::crossfit::{fit_ivimproved_crossfit, fit_ivoptimal_crossfit};
use ivdtr::data::load_csv;
use ivdtr::nuisance::NuisanceFlags;
use ivdtr::sim::{fit_sra_baseline, replication_rng, run_cell, true_value, SimConfig};
use ivdtr::{exec, Arm, Dataset, Dtr, Error, Execution, FitOptions, Interval, PolicyStage, Result, RewardBounds};
use serde_json::{json, Value};

use config::{parse_lambda, RunConfig, SimSection};

#[derive(Parser)]
#[command(name = "ivdtr", version, about = "Instrumental-variable dynamic treatment regimes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Tree depth for the projected policy
    #[arg(long)]
    depth: Option<usize>,
    /// Number of cross-fitting batches (0 or 1 disables)
    #[arg(long)]
    crossfit: Option<usize>,
    /// Worker thread cap
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate an IV-optimal regime from trajectory data
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// w | b | m | const:STAGE:VALUE[,const:STAGE:VALUE...]
        #[arg(long)]
        lambda: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Improve a baseline regime using trajectory data
    Improve {
        #[arg(long)]
        data: PathBuf,
        /// std | prosp | sra | path to a policy JSON
        #[arg(long)]
        baseline: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Run simulation cells and write per-replication values
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Ground-truth value of a policy in one simulation cell
    Evaluate {
        /// std | prosp | path to a policy JSON
        #[arg(long)]
        policy: String,
        #[command(flatten)]
        common: Common,
    },
}

struct Settings {
    cfg: RunConfig,
    depth: usize,
    crossfit: usize,
    seed: u64,
    opts: FitOptions,
    strict: bool,
}

fn settings(common: &Common) -> Result<Settings> {
    let cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(t) = common.threads {
        exec::set_threads(t);
    }
    let tie = match cfg.tie {
        None => Arm::Plus,
        Some(v) => Arm::try_from(v).map_err(|e| Error::invalid(format!("tie: {e}")))?,
    };
    let clip = cfg.clip.unwrap_or(ivdtr::nuisance::DEFAULT_CLIP);
    if !(clip > 0.0 && clip < 0.5) {
        return Err(Error::invalid("clip must lie in (0, 0.5)"));
    }
    Ok(Settings {
        depth: common.depth.or(cfg.depth).unwrap_or(2),
        crossfit: common.crossfit.or(cfg.crossfit).unwrap_or(0),
        seed: common.seed.or(cfg.seed).unwrap_or(0),
        opts: FitOptions { clip, tie, ..FitOptions::default() },
        strict: cfg.strict.unwrap_or(false),
        cfg,
    })
}

fn load_data(path: &Path, s: &Settings) -> Result<(Dataset, RewardBounds)> {
    let data = load_csv(path, s.cfg.covariate_dims.as_deref())?;
    let bounds = s.cfg.reward_bounds.clone().ok_or_else(|| Error::invalid("config must declare reward_bounds"))?;
    bounds.check(&data)?;
    Ok((data, bounds))
}

fn write_json(dir: &Path, name: &str, v: &Value) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn quantiles(mut v: Vec<f64>) -> Value {
    if v.is_empty() {
        return Value::Null;
    }
    v.sort_by(f64::total_cmp);
    let q = |p: f64| ivdtr::sim::quantile(&v, p);
    json!({"q10": q(0.1), "q50": q(0.5), "q90": q(0.9)})
}

fn flags_json(f: &NuisanceFlags) -> Value {
    json!({
        "empty_mu_cells": f.empty_mu_cells.iter().map(|(z, a)| json!({"z": z, "a": a})).collect::<Vec<_>>(),
        "empty_pa_cells": f.empty_pa_cells,
        "nonconverged_fits": f.nonconverged,
    })
}

fn tree_text(stage: &PolicyStage) -> Value {
    match stage {
        PolicyStage::Tree(t) => json!(t.describe()),
        _ => Value::Null,
    }
}

fn strict_check(s: &Settings, nonconverged: usize) -> Result<()> {
    if s.strict && nonconverged > 0 {
        return Err(Error::Numerical(format!("{nonconverged} nuisance fits did not converge")));
    }
    Ok(())
}

fn cmd_fit(data_path: &Path, lambda: Option<&str>, common: &Common) -> Result<()> {
    let s = settings(common)?;
    let (data, bounds) = load_data(data_path, &s)?;
    let k = data.num_stages();
    let lambda = match lambda {
        Some(spec) => parse_lambda(spec, k)?,
        None => s.cfg.lambda.clone().unwrap_or(ivdtr::WeightSpec::Minmax),
    };
    lambda.validate(k)?;
    let fit = fit_ivoptimal_crossfit(&data, &bounds, &lambda, s.depth, s.crossfit, s.seed, &s.opts)?;
    let nonconv: usize = fit.estimates.iter().map(|e| e.flags.nonconverged).sum();
    strict_check(&s, nonconv)?;
    let stages: Vec<Value> = fit
        .estimates
        .iter()
        .zip(&fit.policy.stages)
        .map(|(e, p)| {
            let widths: Vec<f64> = e.intervals.iter().flat_map(|v| v.iter().map(Interval::width)).collect();
            json!({
                "stage": e.stage,
                "lambda": e.lambda,
                "interval_width": quantiles(widths),
                "interval_repairs": e.repairs,
                "flags": flags_json(&e.flags),
                "tree": tree_text(p),
            })
        })
        .collect();
    let report = json!({
        "command": "fit",
        "n": data.n(),
        "num_stages": k,
        "depth": s.depth,
        "crossfit": s.crossfit,
        "stages": stages,
    });
    write_json(&common.out, "policy.json", &serde_json::to_value(&fit.policy)?)?;
    write_json(&common.out, "report.json", &report)?;
    println!("{}", serde_json::to_string(&json!({"policy": common.out.join("policy.json")}))?);
    Ok(())
}

fn load_policy(spec: &str, k: usize) -> Result<(Dtr, String)> {
    match spec {
        "std" => Ok((Dtr::standard_of_care(k), "std".into())),
        "prosp" => Ok((Dtr::prospective(k), "prosp".into())),
        path => {
            let text =
                std::fs::read_to_string(path).map_err(|e| Error::invalid(format!("cannot read policy {path}: {e}")))?;
            let d = Dtr::from_json(&text).map_err(|e| Error::invalid(format!("malformed policy JSON: {e}")))?;
            Ok((d, path.to_string()))
        }
    }
}

fn cmd_improve(data_path: &Path, baseline: Option<&str>, common: &Common) -> Result<()> {
    let s = settings(common)?;
    let (data, bounds) = load_data(data_path, &s)?;
    let k = data.num_stages();
    let spec = baseline
        .map(str::to_string)
        .or_else(|| s.cfg.baseline.clone())
        .ok_or_else(|| Error::invalid("a baseline is required"))?;
    let (base, name) = if spec == "sra" {
        (fit_sra_baseline(&data, &bounds, s.depth, &s.opts)?, "sra".to_string())
    } else {
        load_policy(&spec, k)?
    };
    base.check_schema(data.covariate_dims())?;
    let fit = fit_ivimproved_crossfit(&data, &base, &name, &bounds, s.depth, s.crossfit, s.seed, &s.opts)?;
    let nonconv: usize = fit.estimates.iter().map(|e| e.flags.nonconverged).sum();
    strict_check(&s, nonconv)?;
    let stages: Vec<Value> = fit
        .estimates
        .iter()
        .zip(&fit.policy.stages)
        .map(|(e, p)| {
            let improved = fit.policy.actions_on(&data, e.stage);
            let dev = improved.iter().zip(&e.baseline).filter(|(a, b)| a != b).count() as f64 / data.n() as f64;
            json!({
                "stage": e.stage,
                "deviation_fraction": dev,
                "unprojected_deviation_fraction": e.deviation_fraction(),
                "interval_repairs": e.repairs,
                "flags": flags_json(&e.flags),
                "tree": tree_text(p),
            })
        })
        .collect();
    let report = json!({
        "command": "improve",
        "baseline": name,
        "n": data.n(),
        "num_stages": k,
        "depth": s.depth,
        "crossfit": s.crossfit,
        "stages": stages,
    });
    write_json(&common.out, "policy.json", &serde_json::to_value(&fit.policy)?)?;
    write_json(&common.out, "report.json", &report)?;
    println!("{}", serde_json::to_string(&json!({"policy": common.out.join("policy.json")}))?);
    Ok(())
}

fn sim_cells(sec: &SimSection, s: &Settings) -> Result<Vec<SimConfig>> {
    let mut cells = Vec::new();
    for c1 in sec.c1.values() {
        for xi in sec.xi.values() {
            let mut c = SimConfig::new(c1, xi, sec.n_train, sec.replications, sec.n_eval, s.seed);
            c.depth = s.depth;
            c.crossfit = s.crossfit;
            c.stage1_signal_threshold = sec.stage1_signal_threshold;
            c.validate()?;
            cells.push(c);
        }
    }
    if cells.is_empty() {
        return Err(Error::invalid("simulation grid is empty"));
    }
    Ok(cells)
}

fn cell_name(c: &SimConfig) -> String {
    format!("c1={}_xi={}", c.c1, c.xi)
}

fn cmd_simulate(common: &Common) -> Result<()> {
    let s = settings(common)?;
    let sec = s.cfg.sim.clone().ok_or_else(|| Error::invalid("config must contain a sim section"))?;
    let cells = sim_cells(&sec, &s)?;
    std::fs::create_dir_all(&common.out)?;
    let mut summary = serde_json::Map::new();
    for c in &cells {
        let res = run_cell(c, Execution::Parallel)?;
        let name = cell_name(c);
        std::fs::write(common.out.join(format!("{name}.csv")), res.to_csv_string()?)?;
        let mut block = serde_json::Map::new();
        for (r, sm) in res.summary() {
            block.insert(r.name().into(), serde_json::to_value(sm)?);
        }
        summary.insert(name, Value::Object(block));
    }
    write_json(&common.out, "summary.json", &Value::Object(summary.clone()))?;
    println!("{}", serde_json::to_string(&Value::Object(summary))?);
    Ok(())
}

fn cmd_evaluate(policy: &str, common: &Common) -> Result<()> {
    let s = settings(common)?;
    let sec = s.cfg.sim.clone().ok_or_else(|| Error::invalid("config must contain a sim section"))?;
    let cells = sim_cells(&sec, &s)?;
    if cells.len() != 1 {
        return Err(Error::invalid("evaluate takes a single simulation cell"));
    }
    let (dtr, _) = load_policy(policy, 2)?;
    dtr.check_schema(&[2, 0])?;
    let report = true_value(&dtr, &cells[0], cells[0].n_eval, &mut replication_rng(s.seed, 0))?;
    let v = json!({"cell": cell_name(&cells[0]), "report": report});
    write_json(&common.out, "evaluation.json", &v)?;
    println!("{}", serde_json::to_string(&v)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Fit { data, lambda, common } => cmd_fit(data, lambda.as_deref(), common),
        Command::Improve { data, baseline, common } => cmd_improve(data, baseline.as_deref(), common),
        Command::Simulate { common } => cmd_simulate(common),
        Command::Evaluate { policy, common } => cmd_evaluate(policy, common),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = if e.is_validation() { "validation" } else { "numerical" };
            eprintln!("{}", json!({"error": {"kind": kind, "message": e.to_string()}}));
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
