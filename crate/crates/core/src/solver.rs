//! Inner damped-Newton fit on the augmented data and the outer
//! noise-augmented loop.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{NappError, Result};
use crate::glm::{
    dp_link_derivatives, loss_value, value_grad_weights, weighted_gram, BoundsCerts, Dataset,
    LossFamily,
};
use crate::noise::{
    build_dp_rows, regularization_variance, sample_mechanism, sample_regularization_noise,
    AugmentedBlock, Mechanism, MechanismParams, NoiseDraw, PrivacyBudget, RegularizerTarget,
    THETA_FLOOR,
};
use crate::rng::{streams, StreamSeed};

const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FitMode {
    #[serde(rename = "erm")]
    Erm,
    #[serde(rename = "vs")]
    Vs,
    #[serde(rename = "vs+")]
    VsPlus,
}

impl FitMode {
    pub fn is_selection(self) -> bool {
        !matches!(self, FitMode::Erm)
    }

    /// Truncation point used when none is configured.
    pub fn default_truncation(self) -> Option<f64> {
        match self {
            FitMode::Erm => None,
            FitMode::Vs => Some(f64::NEG_INFINITY),
            FitMode::VsPlus => Some(0.0),
        }
    }
}

impl fmt::Display for FitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitMode::Erm => "erm",
            FitMode::Vs => "vs",
            FitMode::VsPlus => "vs+",
        })
    }
}

impl FromStr for FitMode {
    type Err = NappError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erm" => Ok(FitMode::Erm),
            "vs" => Ok(FitMode::Vs),
            "vs+" | "vs_plus" | "vs-plus" => Ok(FitMode::VsPlus),
            other => Err(NappError::InvalidParameter(format!(
                "unknown mode `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Maximum number of outer iterations.
    pub t_max: usize,
    pub inner_tol: f64,
    pub inner_max: usize,
    pub outer_tol: f64,
    pub window: usize,
    pub mode: FitMode,
    pub tau_zero: f64,
    /// Number of noise rows; must be even.
    pub n_e: usize,
    /// Overrides the mode's default truncation point.
    #[serde(with = "crate::serde_ext::option", default)]
    pub trunc_c: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            t_max: 50,
            inner_tol: 1e-8,
            inner_max: 100,
            outer_tol: 1e-6,
            window: 5,
            mode: FitMode::Erm,
            tau_zero: 1e-4,
            n_e: 10_000,
            trunc_c: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 || self.inner_max == 0 || self.window == 0 {
            return Err(NappError::InvalidParameter(
                "T, inner_max and window must be at least 1".into(),
            ));
        }
        if !(self.inner_tol > 0.0) || !(self.outer_tol > 0.0) || !(self.tau_zero >= 0.0) {
            return Err(NappError::InvalidParameter(
                "tolerances must be positive".into(),
            ));
        }
        if self.n_e == 0 || self.n_e % 2 != 0 {
            return Err(NappError::OddNoiseRows(self.n_e));
        }
        Ok(())
    }

    pub fn truncation(&self) -> Option<f64> {
        if self.mode.is_selection() {
            self.trunc_c.or(self.mode.default_truncation())
        } else {
            None
        }
    }
}

/// Result of one inner minimization.
#[derive(Debug, Clone)]
pub struct InnerFit {
    pub theta: DVector<f64>,
    /// `sum_i l(theta|d_i) + sum_i l(theta|e_i)`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `sum_i l(theta|d_i) + sum_i l(theta|e_i)` over data and noise rows.
pub fn augmented_loss(data: &Dataset, block: &AugmentedBlock, theta: &DVector<f64>) -> Result<f64> {
    let design = block.design();
    Ok(loss_value(data.family, theta, &data.x, &data.y)?
        + loss_value(data.family, theta, &design, &block.e_y)?)
}

struct Augmented<'a> {
    data: &'a Dataset,
    design: DMatrix<f64>,
    e_y: &'a DVector<f64>,
}

impl Augmented<'_> {
    fn value(&self, theta: &DVector<f64>) -> Result<f64> {
        let f = self.data.family;
        Ok(loss_value(f, theta, &self.data.x, &self.data.y)?
            + loss_value(f, theta, &self.design, self.e_y)?)
    }

    fn value_grad(
        &self,
        theta: &DVector<f64>,
    ) -> Result<(f64, DVector<f64>, DVector<f64>, DVector<f64>)> {
        let f = self.data.family;
        let (v1, g1, w1) = value_grad_weights(f, theta, &self.data.x, &self.data.y)?;
        let (v2, g2, w2) = value_grad_weights(f, theta, &self.design, self.e_y)?;
        Ok((v1 + v2, g1 + g2, w1, w2))
    }

    fn hessian(&self, w1: &DVector<f64>, w2: &DVector<f64>) -> DMatrix<f64> {
        weighted_gram(&self.data.x, w1) + weighted_gram(&self.design, w2)
    }
}

/// Minimizes the unregularized loss over data plus noise rows by damped
/// Newton, warm-started at `init`.
pub fn minimize_augmented(
    data: &Dataset,
    block: &AugmentedBlock,
    init: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<InnerFit> {
    let p = data.p();
    if init.len() != p || block.e_star.len() != p {
        return Err(NappError::DimensionMismatch(format!(
            "p = {p} but init has {} entries",
            init.len()
        )));
    }
    if data.n() + block.n_e() <= p {
        return Err(NappError::DimensionMismatch(format!(
            "n + n_e = {} must exceed p = {p}",
            data.n() + block.n_e()
        )));
    }
    let problem = Augmented {
        data,
        design: block.design(),
        e_y: &block.e_y,
    };
    let constant_curvature = data.family.has_constant_curvature();

    let mut theta = init.clone();
    let (mut f, mut g, w1, w2) = problem.value_grad(&theta)?;
    let mut hess = problem.hessian(&w1, &w2);

    for it in 1..=cfg.inner_max {
        let chol = hess.clone().cholesky().ok_or(NappError::SingularHessian)?;
        let step = chol.solve(&g);
        let decrement = g.dot(&step);
        if !decrement.is_finite() {
            return Err(NappError::SingularHessian);
        }
        let small = 0.5 * decrement <= cfg.inner_tol * f.abs().max(1.0);

        let mut s = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = &theta - s * &step;
            if let Ok(fc) = problem.value(&cand) {
                if fc.is_finite() && fc <= f {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            s *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            if small {
                return Ok(InnerFit {
                    theta,
                    objective: f,
                    iterations: it,
                    converged: true,
                });
            }
            return Err(NappError::Divergence(MAX_HALVINGS));
        };
        theta = cand;
        if small {
            return Ok(InnerFit {
                theta,
                objective: fc,
                iterations: it,
                converged: true,
            });
        }
        let (fv, gv, w1, w2) = problem.value_grad(&theta)?;
        f = fv;
        g = gv;
        if !constant_curvature {
            hess = problem.hessian(&w1, &w2);
        }
    }
    Ok(InnerFit {
        theta,
        objective: f,
        iterations: cfg.inner_max,
        converged: false,
    })
}

/// Flips the DP row component `e*_j` by the sign of the previous estimate;
/// `sgn(0)` is taken as `+1`.
pub fn sign_adjust(e_star_base: &[f64], theta_prev: &[f64]) -> Vec<f64> {
    e_star_base
        .iter()
        .zip(theta_prev)
        .map(|(e, th)| if *th < 0.0 { -e } else { *e })
        .collect()
}

fn flips(a: f64, b: f64) -> bool {
    (a > 0.0 && b < 0.0) || (a < 0.0 && b > 0.0)
}

/// Final estimate from a trace of iterates: coordinate `j` is zeroed when its
/// sign changed within the last `window` iterates or it stayed below
/// `tau_zero` in magnitude throughout them.
pub fn zero_stabilize(thetas: &[Vec<f64>], tau_zero: f64, window: usize) -> Vec<f64> {
    let Some(last) = thetas.last() else {
        return Vec::new();
    };
    let tail = &thetas[thetas.len().saturating_sub(window.max(1))..];
    (0..last.len())
        .map(|j| {
            let sign_change = tail.windows(2).any(|w| flips(w[0][j], w[1][j]));
            let tiny = tail.iter().all(|th| th[j].abs() < tau_zero);
            if sign_change || tiny {
                0.0
            } else {
                last[j]
            }
        })
        .collect()
}

/// Relative change of the `window`-point moving average of `losses` between
/// the last two positions, or `None` until enough points exist.
pub fn smoothed_change(losses: &[f64], window: usize) -> Option<f64> {
    let w = window.max(1);
    if losses.len() < w + 1 {
        return None;
    }
    let k = losses.len();
    let cur: f64 = losses[k - w..].iter().sum::<f64>() / w as f64;
    let prev: f64 = losses[k - w - 1..k - 1].iter().sum::<f64>() / w as f64;
    Some((cur - prev).abs() / prev.abs().max(f64::MIN_POSITIVE))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// Augmented loss divided by `n`.
    pub loss: f64,
    pub theta: Vec<f64>,
    pub inner_iterations: usize,
}

/// Which noise was used and how to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    /// `None` for a non-private fit.
    pub mechanism: Option<Mechanism>,
    pub seed: u64,
    pub draw: NoiseDraw,
    /// DP row component before any sign adjustment.
    pub e_star: Vec<f64>,
    pub e_y: f64,
    pub lp0: f64,
    pub lpp0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: Vec<f64>,
    /// Last iterate before zero stabilization.
    pub theta_last: Vec<f64>,
    pub converged: bool,
    pub iterations_used: usize,
    pub trace: Vec<TraceEntry>,
    pub budget: PrivacyBudget,
    pub noise_record: NoiseRecord,
    pub reg: RegularizerTarget,
    pub family: LossFamily,
    pub config: SolverConfig,
    /// Variance schedule used in the last iteration.
    pub last_schedule: Vec<f64>,
    /// Schedule implied by `theta_hat`; its minimum drives budget retrieval.
    pub final_schedule: Vec<f64>,
}

impl FitResult {
    pub fn v_min(&self) -> f64 {
        self.final_schedule
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `n_e * l''(0)`, the factor turning a variance into a quadratic weight times two.
    pub fn curvature_scale(&self) -> f64 {
        self.config.n_e as f64 * self.noise_record.lpp0
    }
}

pub(crate) struct OuterRun {
    pub theta_last: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
    pub last_schedule: Vec<f64>,
    pub final_schedule: Vec<f64>,
}

/// The outer loop. `start` warm-starts the first iteration and makes its
/// schedule depend on `start`, as in later iterations.
pub(crate) fn run_outer(
    data: &Dataset,
    reg: &RegularizerTarget,
    e_star_base: &[f64],
    e_y: f64,
    lpp0: f64,
    cfg: &SolverConfig,
    noise_seed: StreamSeed,
    start: Option<&[f64]>,
) -> Result<OuterRun> {
    let p = data.p();
    let n = data.n() as f64;
    let mut rng = noise_seed.rng();
    let mut theta = match start {
        Some(s) => DVector::from_column_slice(s),
        None => DVector::zeros(p),
    };
    let mut prev: Option<Vec<f64>> = start.map(|s| s.to_vec());
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut losses = Vec::new();
    let mut converged = false;
    let mut last_schedule = Vec::new();

    for t in 1..=cfg.t_max {
        let t_eff = if start.is_some() { t + 1 } else { t };
        let variance = regularization_variance(reg, prev.as_deref(), t_eff, p, lpp0, cfg.n_e)?;
        let e_tilde = sample_regularization_noise(&variance, cfg.n_e, &mut rng)?;
        let e_star = match (&prev, cfg.mode.is_selection() && t_eff >= 2) {
            (Some(th), true) => sign_adjust(e_star_base, th),
            _ => e_star_base.to_vec(),
        };
        let block = AugmentedBlock::new(&e_star, e_tilde, e_y, variance.clone())?;
        let inner = minimize_augmented(data, &block, &theta, cfg)?;
        theta = inner.theta;
        let snapshot: Vec<f64> = theta.iter().copied().collect();
        losses.push(inner.objective / n);
        trace.push(TraceEntry {
            loss: inner.objective / n,
            theta: snapshot.clone(),
            inner_iterations: inner.iterations,
        });
        prev = Some(snapshot);
        last_schedule = variance;
        if smoothed_change(&losses, cfg.window).is_some_and(|c| c < cfg.outer_tol) {
            converged = true;
            break;
        }
    }

    let thetas: Vec<Vec<f64>> = trace.iter().map(|e| e.theta.clone()).collect();
    let mut theta_hat = zero_stabilize(&thetas, cfg.tau_zero, cfg.window);
    // Coefficients under the weight floor are numerically zero.
    for v in theta_hat.iter_mut().filter(|v| v.abs() < THETA_FLOOR) {
        *v = 0.0;
    }
    let final_schedule = regularization_variance(reg, Some(&theta_hat), 2, p, lpp0, cfg.n_e)?;
    Ok(OuterRun {
        theta_last: theta.iter().copied().collect(),
        theta_hat,
        trace,
        converged,
        last_schedule,
        final_schedule,
    })
}

/// Draws the DP noise for `budget` under the mode's mechanism; zero when non-private.
pub fn draw_dp_noise(
    p: usize,
    certs: &BoundsCerts,
    budget: &PrivacyBudget,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<(Option<Mechanism>, NoiseDraw)> {
    if !budget.is_private() {
        return Ok((None, NoiseDraw::zero(p)));
    }
    let mechanism = Mechanism::for_delta(budget.delta, cfg.mode.is_selection());
    let params = MechanismParams {
        p,
        zeta12: certs.zeta12(),
        r_eps: budget.r_eps(),
        delta: budget.delta,
    };
    let mut rng = StreamSeed::new(seed, streams::DP_NOISE).rng();
    let draw = sample_mechanism(mechanism, &params, cfg.truncation(), &mut rng)?;
    Ok((Some(mechanism), draw))
}

/// Fits a private GLM by noise augmentation.
///
/// With `budget.epsilon = inf` no DP noise is drawn and the result is the
/// non-private noise-augmented estimator.
pub fn napp_fit(
    data: &Dataset,
    certs: &BoundsCerts,
    reg: &RegularizerTarget,
    budget: &PrivacyBudget,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<FitResult> {
    cfg.validate()?;
    reg.penalty.validate()?;
    let floor = budget.lambda0_floor(certs.zeta3);
    if budget.is_private() && reg.lambda0 < floor {
        return Err(NappError::InvalidParameter(format!(
            "lambda0 = {} is below the strong-convexity floor {floor}",
            reg.lambda0
        )));
    }
    let (mechanism, draw) = draw_dp_noise(data.p(), certs, budget, cfg, seed)?;
    fit_with_noise(
        data,
        reg,
        budget,
        cfg,
        seed,
        mechanism,
        draw,
        streams::REGULARIZATION,
        None,
    )
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn fit_with_noise(
    data: &Dataset,
    reg: &RegularizerTarget,
    budget: &PrivacyBudget,
    cfg: &SolverConfig,
    seed: u64,
    mechanism: Option<Mechanism>,
    draw: NoiseDraw,
    stream: u64,
    start: Option<&[f64]>,
) -> Result<FitResult> {
    let family = data.family;
    let e_y = family.noise_pseudo_outcome();
    let (lp0, lpp0) = dp_link_derivatives(family, e_y)?;
    let rows = build_dp_rows(&draw, cfg.n_e, family, e_y)?;
    let run = run_outer(
        data,
        reg,
        &rows.e_star,
        e_y,
        lpp0,
        cfg,
        StreamSeed::new(seed, stream),
        start,
    )?;
    Ok(FitResult {
        theta_hat: run.theta_hat,
        theta_last: run.theta_last,
        converged: run.converged,
        iterations_used: run.trace.len(),
        trace: run.trace,
        budget: *budget,
        noise_record: NoiseRecord {
            mechanism,
            seed,
            draw,
            e_star: rows.e_star,
            e_y,
            lp0,
            lpp0,
        },
        reg: *reg,
        family,
        config: *cfg,
        last_schedule: run.last_schedule,
        final_schedule: run.final_schedule,
    })
}
