use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use napp::bench::{run_experiment, simulate_dataset, ExperimentConfig, SimConfig};
use napp::bounds::{
    achievable_excess_risk, empirical_risk_bound, excess_risk_bound, realized_regularizer,
    sample_complexity, BoundParams, ProbeMode, RiskInputs,
};
use napp::budget::{recycle, RecycleChoice};
use napp::{
    certify_bounds, napp_fit, Dataset, FitMode, FitResult, LossFamily, OutcomeBounds, Penalty,
    PrivacyBudget, RegularizerTarget, SolverConfig,
};

#[derive(Parser)]
#[command(name = "napp", version, about = "Noise-augmented private GLM fitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a private GLM to a CSV with a `y` column.
    Fit(FitArgs),
    /// Retrieve the unspent budget of a saved fit.
    Retrieve {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long, default_value = "return")]
        choice: RecycleChoice,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate utility bounds or the realized regularizer.
    Bounds {
        #[arg(long, value_enum)]
        kind: BoundKind,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a simulated data set.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run an experiment sweep.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(clap::Args, Clone, Serialize, Deserialize)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    family: LossFamily,
    /// ridge, lasso, bridge:G or enet:K
    #[arg(long, default_value = "lasso")]
    reg: Penalty,
    #[arg(long)]
    lambda: f64,
    /// Defaults to the strong-convexity floor.
    #[arg(long)]
    lambda0: Option<f64>,
    /// `inf` disables the DP noise.
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value_t = 0.5)]
    r: f64,
    #[arg(long, default_value_t = 10_000)]
    ne: usize,
    #[arg(long, default_value = "erm")]
    mode: FitMode,
    #[arg(long)]
    no_moor: bool,
    #[arg(long)]
    trunc_c: Option<f64>,
    #[arg(long, default_value_t = 50)]
    t_max: usize,
    #[arg(long)]
    outer_tol: Option<f64>,
    /// Linear: bound on |y - eta|.
    #[arg(long)]
    resid_bound: Option<f64>,
    /// Poisson: largest count.
    #[arg(long)]
    y_max: Option<f64>,
    /// Poisson: bound on |eta|.
    #[arg(long)]
    eta_max: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct SavedFit {
    args: FitArgs,
    #[serde(flatten)]
    fit: FitResult,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundKind {
    Empirical,
    Excess,
    Complexity,
    Figure1,
}

/// Accepts a single object or an array of them.
fn parse_rows<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    if text.trim_start().starts_with('[') {
        Ok(serde_json::from_str(text)?)
    } else {
        Ok(vec![serde_json::from_str(text)?])
    }
}

#[derive(Deserialize, Serialize)]
struct EmpiricalRow {
    b_norm: f64,
    n: usize,
    n_e: usize,
    lpp0: f64,
    v_min: f64,
    r_t: f64,
    r: f64,
}

#[derive(Deserialize)]
struct ExcessRow {
    #[serde(flatten)]
    inputs: RiskInputs,
    reg_gap: f64,
    pi: f64,
}

#[derive(Deserialize)]
struct ComplexityRow {
    #[serde(flatten)]
    inputs: RiskInputs,
    #[serde(default)]
    params: BoundParams,
    r_t_theta0: f64,
}

#[derive(Deserialize)]
struct Figure1Params {
    #[serde(default = "Penalty::lasso")]
    penalty: Penalty,
    lambda: f64,
    lambda0: f64,
    theta_grid: Vec<f64>,
}

fn outcome_bounds(args: &FitArgs) -> OutcomeBounds {
    OutcomeBounds {
        residual: args.resid_bound,
        y_max: args.y_max,
        eta_max: args.eta_max,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn fit(args: FitArgs) -> Result<()> {
    let data = Dataset::from_csv(&args.data, args.family)
        .with_context(|| format!("reading {}", args.data.display()))?;
    let certs = certify_bounds(&data, &outcome_bounds(&args))?;
    let budget = PrivacyBudget::new(args.epsilon, args.delta, args.r)?;
    let lambda0 = args
        .lambda0
        .unwrap_or_else(|| budget.lambda0_floor(certs.zeta3));
    let reg = RegularizerTarget::new(args.reg, args.lambda, lambda0, !args.no_moor)?;
    let mut cfg = SolverConfig {
        n_e: args.ne,
        mode: args.mode,
        trunc_c: args.trunc_c,
        t_max: args.t_max,
        ..Default::default()
    };
    if let Some(tol) = args.outer_tol {
        cfg.outer_tol = tol;
    }
    let result = napp_fit(&data, &certs, &reg, &budget, &cfg, args.seed)?;
    eprintln!(
        "{} after {} iterations; theta = {:?}",
        if result.converged {
            "converged"
        } else {
            "stopped"
        },
        result.iterations_used,
        result.theta_hat
    );
    let out = args.out.clone();
    write_json(&out, &SavedFit { args, fit: result })
}

fn retrieve(fit_path: &Path, choice: RecycleChoice, out: &Path) -> Result<()> {
    let text =
        fs::read_to_string(fit_path).with_context(|| format!("reading {}", fit_path.display()))?;
    let saved: SavedFit = serde_json::from_str(&text)?;
    let data = Dataset::from_csv(&saved.args.data, saved.args.family)?;
    let certs = certify_bounds(&data, &outcome_bounds(&saved.args))?;
    let report = recycle(&saved.fit, &data, &certs, choice)?;
    eprintln!(
        "retrieved {:.4} of {:.4} over {} round(s)",
        report.delta_eps_cumulative,
        saved.fit.budget.jacobian_share(),
        report.rounds.len()
    );
    if let Some(w) = &report.warning {
        eprintln!("warning: {w}");
    }
    write_json(out, &report)
}

fn bounds(kind: BoundKind, params: &Path, out: &Path) -> Result<()> {
    let text =
        fs::read_to_string(params).with_context(|| format!("reading {}", params.display()))?;
    let mut w = csv::Writer::from_path(out)?;
    match kind {
        BoundKind::Empirical => {
            let rows: Vec<EmpiricalRow> = parse_rows(&text)?;
            w.write_record(["b_norm", "n", "n_e", "lpp0", "v_min", "r_t", "r", "bound"])?;
            for row in rows {
                let bound = empirical_risk_bound(
                    row.b_norm, row.n, row.n_e, row.lpp0, row.v_min, row.r_t, row.r,
                );
                w.serialize((
                    row.b_norm, row.n, row.n_e, row.lpp0, row.v_min, row.r_t, row.r, bound,
                ))?;
            }
        }
        BoundKind::Excess => {
            let rows: Vec<ExcessRow> = parse_rows(&text)?;
            w.write_record([
                "guarantee",
                "p",
                "n",
                "epsilon",
                "modulus",
                "reg_gap",
                "pi",
                "bound",
            ])?;
            for row in rows {
                let bound = excess_risk_bound(&row.inputs, row.reg_gap, row.pi)?;
                let i = &row.inputs;
                w.serialize((
                    format!("{:?}", i.guarantee),
                    i.p,
                    i.n,
                    i.epsilon,
                    i.modulus(),
                    row.reg_gap,
                    row.pi,
                    bound,
                ))?;
            }
        }
        BoundKind::Complexity => {
            let rows: Vec<ComplexityRow> = parse_rows(&text)?;
            w.write_record([
                "guarantee",
                "p",
                "epsilon",
                "varrho",
                "c_prime",
                "c",
                "n_required",
                "achievable_at_n",
            ])?;
            for row in rows {
                row.params.validate()?;
                let sc = sample_complexity(&row.params, &row.inputs, row.r_t_theta0)?;
                let at_n = achievable_excess_risk(&row.params, &row.inputs, row.r_t_theta0)?;
                let i = &row.inputs;
                w.serialize((
                    format!("{:?}", i.guarantee),
                    i.p,
                    i.epsilon,
                    row.params.varrho,
                    sc.c_prime,
                    sc.c,
                    sc.n_required,
                    at_n,
                ))?;
            }
        }
        BoundKind::Figure1 => {
            let p: Figure1Params = serde_json::from_str(&text)?;
            let reg = RegularizerTarget::new(p.penalty, p.lambda, p.lambda0, true)?;
            w.write_record([
                "mode",
                "theta",
                "target",
                "realized",
                "modulus",
                "converged",
            ])?;
            for (mode, name) in [(ProbeMode::Moor, "moor"), (ProbeMode::Legacy, "legacy")] {
                for pt in realized_regularizer(&reg, &p.theta_grid, mode) {
                    w.serialize((
                        name,
                        pt.theta,
                        pt.target,
                        pt.realized,
                        pt.modulus,
                        pt.converged,
                    ))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn simulate(config: &Path) -> Result<()> {
    let text =
        fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let cfg: SimConfig = toml::from_str(&text)?;
    let data = simulate_dataset(&cfg.spec())?;
    data.to_csv(&cfg.out)?;
    eprintln!(
        "wrote {} rows x {} features to {}",
        data.n(),
        data.p(),
        cfg.out.display()
    );
    Ok(())
}

fn bench(config: &Path, jobs: Option<usize>, seed: Option<u64>) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let output = run_experiment(&cfg, jobs, seed)?;
    let failures = output.rows.iter().filter(|r| r.status != "ok").count();
    eprintln!("{} metric rows ({failures} failed fits)", output.rows.len());
    for f in &output.files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Fit(args) => fit(args),
        Command::Retrieve { fit, choice, out } => retrieve(&fit, choice, &out),
        Command::Bounds { kind, params, out } => bounds(kind, &params, &out),
        Command::Simulate { config } => simulate(&config),
        Command::Bench { config, jobs, seed } => bench(&config, jobs, seed),
    }
}
