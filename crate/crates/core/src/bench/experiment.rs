//! Grid sweeps over methods, tuning parameters, budgets and repeats.
//!
//! Every cell gets seeds derived from `(master seed, repeat, grid indices)`,
//! shared by all methods in the cell, so comparisons between methods are
//! paired. Results are collected in cell order regardless of which worker
//! finished first, which keeps `metrics.csv` byte-identical across runs.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::lasso::lasso_glm;
use crate::bench::metrics::{l2_distance, prediction_error, selection_rates};
use crate::bench::sim::{simulate_dataset, SimSpec};
use crate::budget::{recycle, RecycleChoice};
use crate::error::{NappError, Result};
use crate::glm::{certify_bounds, BoundsCerts, Dataset, LossFamily, OutcomeBounds};
use crate::noise::{Penalty, PrivacyBudget, RegularizerTarget};
use crate::rng::derive_seed;
use crate::solver::{napp_fit, FitMode, SolverConfig};
use crate::stats::{mean, quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "napp-erm")]
    NappErm,
    #[serde(rename = "napp-vs")]
    NappVs,
    #[serde(rename = "napp-vs+")]
    NappVsPlus,
    #[serde(rename = "legacy-dperm")]
    LegacyDperm,
    #[serde(rename = "nonprivate-lasso")]
    NonprivateLasso,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::NappErm => "napp-erm",
            Method::NappVs => "napp-vs",
            Method::NappVsPlus => "napp-vs+",
            Method::LegacyDperm => "legacy-dperm",
            Method::NonprivateLasso => "nonprivate-lasso",
        }
    }

    fn mode(self) -> Option<FitMode> {
        match self {
            Method::NappErm | Method::LegacyDperm => Some(FitMode::Erm),
            Method::NappVs => Some(FitMode::Vs),
            Method::NappVsPlus => Some(FitMode::VsPlus),
            Method::NonprivateLasso => None,
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub method: Method,
    /// Ignored by `legacy-dperm` (always the sum) and `nonprivate-lasso`.
    #[serde(default = "yes")]
    pub moor: bool,
}

impl MethodSpec {
    fn effective_moor(&self) -> bool {
        match self.method {
            Method::LegacyDperm => false,
            _ => self.moor,
        }
    }
}

fn default_n() -> usize {
    500
}
fn default_test_n() -> usize {
    10_000
}
fn default_r() -> f64 {
    0.5
}
fn default_n_e() -> usize {
    10_000
}
fn default_t_max() -> usize {
    50
}
fn default_penalty() -> String {
    "lasso".into()
}
fn default_jobs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    pub family: LossFamily,
    /// Training size of simulated data.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Simulate with every coefficient zero.
    #[serde(default)]
    pub null_truth: bool,
    /// Training CSV (`y` plus features) instead of simulated data.
    pub data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    #[serde(default = "default_test_n")]
    pub test_n: usize,
    /// `ridge`, `lasso`, `bridge:G` or `enet:K`.
    #[serde(default = "default_penalty")]
    pub penalty: String,
    pub lambda_grid: Vec<f64>,
    /// Empty means the smallest admissible floor for each epsilon.
    #[serde(default)]
    pub lambda0_grid: Vec<f64>,
    /// `inf` runs without DP noise.
    pub epsilon_grid: Vec<f64>,
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_n_e")]
    pub n_e: usize,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    pub outer_tol: Option<f64>,
    pub repeats: usize,
    pub methods: Vec<MethodSpec>,
    /// Also report the retrievable budget portion of private fits.
    #[serde(default)]
    pub retrieval: bool,
    #[serde(default)]
    pub bounds: OutcomeBounds,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub gnuplot: bool,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| NappError::InvalidParameter(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<Penalty> {
        if self.repeats == 0 {
            return Err(NappError::InvalidParameter(
                "repeats must be at least 1".into(),
            ));
        }
        if self.lambda_grid.is_empty() || self.epsilon_grid.is_empty() || self.methods.is_empty() {
            return Err(NappError::InvalidParameter(
                "lambda grid, epsilon grid and methods must be nonempty".into(),
            ));
        }
        if self.epsilon_grid.iter().any(|e| !(*e > 0.0)) {
            return Err(NappError::InvalidParameter(
                "epsilon values must be positive".into(),
            ));
        }
        self.penalty.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub moor: bool,
    /// Position in `lambda0_grid`; the floor varies with the data when the grid is empty.
    pub lambda0_index: usize,
    pub lambda0: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub repeat: usize,
    pub metric: String,
    pub value: f64,
    pub status: String,
}

struct Replicate {
    train: Dataset,
    test: Dataset,
    truth: Option<Vec<f64>>,
    certs: Option<BoundsCerts>,
    /// Reference fit per lambda index.
    oracle: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    repeat: usize,
    l0: usize,
    lam: usize,
    eps: usize,
    method: usize,
}

/// Penalty weights `(l1, l2)` of the non-private reference matching the
/// fixed point of the adaptive schedule.
fn oracle_penalty(penalty: Penalty, lambda: f64) -> Option<(f64, f64)> {
    match penalty {
        Penalty::Ridge => Some((0.0, lambda)),
        Penalty::Bridge { gamma } if gamma == 1.0 => Some((2.0 * lambda, 0.0)),
        Penalty::ElasticNet { kappa } => Some((2.0 * lambda, lambda * kappa)),
        Penalty::Bridge { .. } => None,
    }
}

fn build_replicate(
    cfg: &ExperimentConfig,
    penalty: Penalty,
    repeat: usize,
    seed: u64,
) -> Result<Replicate> {
    let (train, truth) = match &cfg.data {
        Some(path) => (Dataset::from_csv(path, cfg.family)?, None),
        None => {
            let s = derive_seed(seed, &[1, repeat as u64]);
            let spec = if cfg.null_truth {
                SimSpec::null(cfg.family, cfg.n, s)
            } else {
                SimSpec::benchmark(cfg.family, cfg.n, s)
            };
            (simulate_dataset(&spec)?, Some(spec.theta_true))
        }
    };
    let test = match (&cfg.test_data, &cfg.data) {
        (Some(path), _) => Dataset::from_csv(path, cfg.family)?,
        (None, Some(_)) => train.clone(),
        (None, None) => {
            let s = derive_seed(seed, &[2, repeat as u64]);
            let mut spec = SimSpec::benchmark(cfg.family, cfg.test_n, s);
            if let Some(t) = &truth {
                spec.theta_true = t.clone();
            }
            simulate_dataset(&spec)?
        }
    };
    let certs = if cfg.epsilon_grid.iter().any(|e| e.is_finite()) {
        Some(certify_bounds(&train, &cfg.bounds)?)
    } else {
        None
    };
    let oracle = cfg
        .lambda_grid
        .iter()
        .map(|&lam| match oracle_penalty(penalty, lam) {
            Some((l1, l2)) => lasso_glm(&train, l1, l2).map(|f| Some(f.theta)),
            None => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Replicate {
        train,
        test,
        truth,
        certs,
        oracle,
    })
}

fn lambda0_for(
    cfg: &ExperimentConfig,
    l0: usize,
    epsilon: f64,
    certs: Option<&BoundsCerts>,
) -> f64 {
    match cfg.lambda0_grid.get(l0) {
        Some(v) => *v,
        None if epsilon.is_finite() => {
            let budget = PrivacyBudget {
                epsilon,
                delta: cfg.delta,
                r: cfg.r,
                delta_eps: 0.0,
            };
            certs.map_or(0.0, |c| budget.lambda0_floor(c.zeta3))
        }
        None => 0.0,
    }
}

fn run_cell(
    cfg: &ExperimentConfig,
    penalty: Penalty,
    reps: &[Result<Replicate>],
    cell: Cell,
    seed: u64,
) -> Vec<MetricRow> {
    let spec = cfg.methods[cell.method];
    let lambda = cfg.lambda_grid[cell.lam];
    let epsilon = cfg.epsilon_grid[cell.eps];
    let moor = spec.effective_moor();
    let row = |lambda0: f64, metric: &str, value: f64, status: &str| MetricRow {
        method: spec.method.name().to_string(),
        moor,
        lambda0_index: cell.l0,
        lambda0,
        lambda,
        epsilon,
        repeat: cell.repeat,
        metric: metric.to_string(),
        value,
        status: status.to_string(),
    };
    let rep = match &reps[cell.repeat] {
        Ok(rep) => rep,
        Err(e) => return vec![row(f64::NAN, "fit", f64::NAN, &format!("error: {e}"))],
    };
    let lambda0 = lambda0_for(cfg, cell.l0, epsilon, rep.certs.as_ref());

    let (theta, retrieved) = match spec.method.mode() {
        None => match &rep.oracle[cell.lam] {
            Some(t) => (t.clone(), None),
            None => {
                return vec![row(
                    lambda0,
                    "fit",
                    f64::NAN,
                    "error: no reference fit for this penalty",
                )]
            }
        },
        Some(mode) => {
            let fit_seed = derive_seed(
                seed,
                &[
                    3,
                    cell.repeat as u64,
                    cell.l0 as u64,
                    cell.lam as u64,
                    cell.eps as u64,
                ],
            );
            let result = (|| -> Result<(Vec<f64>, Option<f64>)> {
                let reg = RegularizerTarget::new(penalty, lambda, lambda0, moor)?;
                let budget = if epsilon.is_finite() {
                    PrivacyBudget::new(epsilon, cfg.delta, cfg.r)?
                } else {
                    PrivacyBudget::non_private()
                };
                let certs = rep.certs.unwrap_or(BoundsCerts {
                    zeta1: 1.0,
                    zeta2: 1.0,
                    zeta3: 1.0,
                });
                let solver = SolverConfig {
                    t_max: cfg.t_max,
                    n_e: cfg.n_e,
                    mode,
                    outer_tol: cfg.outer_tol.unwrap_or(SolverConfig::default().outer_tol),
                    ..SolverConfig::default()
                };
                let fit = napp_fit(&rep.train, &certs, &reg, &budget, &solver, fit_seed)?;
                let retrieved = if cfg.retrieval && budget.is_private() && fit.converged {
                    Some(
                        recycle(&fit, &rep.train, &certs, RecycleChoice::Return)?.retrieved_portion,
                    )
                } else {
                    None
                };
                Ok((fit.theta_hat, retrieved))
            })();
            match result {
                Ok(v) => v,
                Err(e) => return vec![row(lambda0, "fit", f64::NAN, &format!("error: {e}"))],
            }
        }
    };

    let mut rows = Vec::new();
    if let Some(truth) = &rep.truth {
        let (tpr, fpr) = selection_rates(&theta, truth);
        if let Some(t) = tpr {
            rows.push(row(lambda0, "tpr", t, "ok"));
        }
        if let Some(f) = fpr {
            rows.push(row(lambda0, "fpr", f, "ok"));
        }
    }
    let err_name = if cfg.family == LossFamily::Logistic {
        "misclass"
    } else {
        "mse"
    };
    match prediction_error(&theta, &rep.test) {
        Ok(v) => rows.push(row(lambda0, err_name, v, "ok")),
        Err(e) => rows.push(row(lambda0, err_name, f64::NAN, &format!("error: {e}"))),
    }
    if let Some(oracle) = &rep.oracle[cell.lam] {
        rows.push(row(
            lambda0,
            "l2_dist_to_lasso",
            l2_distance(&theta, oracle),
            "ok",
        ));
    }
    if let Some(v) = retrieved {
        rows.push(row(lambda0, "retrieved_portion", v, "ok"));
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub moor: bool,
    /// Median over repeats.
    pub lambda0: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub metric: String,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub mean: f64,
    pub count: usize,
    pub failures: usize,
}

/// Groups rows by everything except the repeat, in first-seen order.
pub fn summarize(rows: &[MetricRow]) -> Vec<SummaryRow> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, (MetricRow, Vec<f64>, usize, Vec<f64>)> = HashMap::new();
    for r in rows.iter().filter(|r| r.metric != "fit") {
        let key = format!(
            "{}|{}|{}|{}|{}|{}",
            r.method, r.moor, r.lambda0_index, r.lambda, r.epsilon, r.metric
        );
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (r.clone(), Vec::new(), 0, Vec::new())
        });
        entry.3.push(r.lambda0);
        if r.status == "ok" && r.value.is_finite() {
            entry.1.push(r.value);
        } else {
            entry.2 += 1;
        }
    }
    order
        .iter()
        .map(|k| {
            let (r, values, failures, lambda0s) = &groups[k];
            SummaryRow {
                method: r.method.clone(),
                moor: r.moor,
                lambda0: quantile(lambda0s, 0.5),
                lambda: r.lambda,
                epsilon: r.epsilon,
                metric: r.metric.clone(),
                median: quantile(values, 0.5),
                q25: quantile(values, 0.25),
                q75: quantile(values, 0.75),
                mean: if values.is_empty() {
                    f64::NAN
                } else {
                    mean(values)
                },
                count: values.len(),
                failures: *failures,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<MetricRow>,
    pub summary: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn gnuplot_script(metric: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set logscale x");
    let _ = writeln!(s, "set xlabel 'lambda'");
    let _ = writeln!(s, "set ylabel 'median {metric}'");
    let _ = writeln!(s, "plot 'fig_{metric}.csv' using 4:7 with linespoints");
    s
}

/// Runs the sweep and writes `metrics.csv`, `summary.json` and one
/// `fig_<metric>.csv` per metric into `cfg.out_dir`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    jobs: Option<usize>,
    seed: Option<u64>,
) -> Result<ExperimentOutput> {
    let penalty = cfg.validate()?;
    let seed = seed.unwrap_or(cfg.seed);
    let jobs = jobs.unwrap_or(cfg.jobs).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| NappError::InvalidParameter(format!("thread pool: {e}")))?;

    let n_l0 = cfg.lambda0_grid.len().max(1);
    let mut cells = Vec::new();
    for repeat in 0..cfg.repeats {
        for l0 in 0..n_l0 {
            for lam in 0..cfg.lambda_grid.len() {
                for eps in 0..cfg.epsilon_grid.len() {
                    for method in 0..cfg.methods.len() {
                        cells.push(Cell {
                            repeat,
                            l0,
                            lam,
                            eps,
                            method,
                        });
                    }
                }
            }
        }
    }

    let rows: Vec<MetricRow> = pool
        .install(|| {
            let reps: Vec<Result<Replicate>> = (0..cfg.repeats)
                .into_par_iter()
                .map(|r| build_replicate(cfg, penalty, r, seed))
                .collect();
            cells
                .par_iter()
                .map(|c| run_cell(cfg, penalty, &reps, *c, seed))
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect();

    fs::create_dir_all(&cfg.out_dir)?;
    let mut files = Vec::new();
    let metrics_path = cfg.out_dir.join("metrics.csv");
    write_csv(&metrics_path, &rows)?;
    files.push(metrics_path);

    let summary = summarize(&rows);
    let summary_path = cfg.out_dir.join("summary.json");
    let doc = serde_json::json!({
        "config": cfg,
        "seed": seed,
        "preprocessing": "categorical one-hot with first level dropped; numeric min-max to [-1, 1]; rows with missing fields dropped; rows clipped to unit norm",
        "summary": summary,
    });
    fs::write(&summary_path, serde_json::to_string_pretty(&doc)?)?;
    files.push(summary_path);

    let mut metrics: Vec<&str> = Vec::new();
    for s in &summary {
        if !metrics.contains(&s.metric.as_str()) {
            metrics.push(&s.metric);
        }
    }
    for m in metrics {
        let panel: Vec<&SummaryRow> = summary.iter().filter(|s| s.metric == m).collect();
        let path = cfg.out_dir.join(format!("fig_{m}.csv"));
        write_csv(&path, &panel)?;
        files.push(path);
        if cfg.gnuplot {
            let gp = cfg.out_dir.join(format!("fig_{m}.gp"));
            fs::write(&gp, gnuplot_script(m))?;
            files.push(gp);
        }
    }
    Ok(ExperimentOutput {
        rows,
        summary,
        files,
    })
}
