//! Retrievable privacy budget and the return/recycle protocol.
//!
//! When the target penalty already supplies more curvature than the floor
//! `lambda0`, part of the `(1 - r) epsilon` reserved for the Jacobian ratio
//! is unspent. It can be returned, or recycled into a smaller DP noise
//! scale followed by a warm-started re-run.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{NappError, Result};
use crate::glm::{BoundsCerts, Dataset};
use crate::noise::{gaussian_dp_variance, RegularizerTarget};
use crate::rng::streams;
use crate::solver::{fit_with_noise, FitResult};

/// Hard cap on recycle rounds.
pub const MAX_RECYCLE_ROUNDS: usize = 10;

/// `max{0, (1 - r) eps (1 - lambda0 / (n_e l''(0) V_min))}`.
pub fn retrievable_budget(
    lambda0: f64,
    v_min: f64,
    n_e: usize,
    lpp0: f64,
    r: f64,
    epsilon: f64,
) -> f64 {
    let m = n_e as f64 * lpp0 * v_min;
    if !(m > 0.0) || !epsilon.is_finite() {
        return 0.0;
    }
    ((1.0 - r) * epsilon * (1.0 - lambda0 / m)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecycleChoice {
    Return,
    Recycle,
}

impl FromStr for RecycleChoice {
    type Err = NappError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "return" => Ok(RecycleChoice::Return),
            "recycle" => Ok(RecycleChoice::Recycle),
            other => Err(NappError::InvalidParameter(format!(
                "unknown choice `{other}`"
            ))),
        }
    }
}

impl fmt::Display for RecycleChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecycleChoice::Return => "return",
            RecycleChoice::Recycle => "recycle",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRound {
    pub delta_eps: f64,
    pub lambda0_before: f64,
    pub lambda0_after: f64,
    /// Outer iterations of the re-run; 0 when no re-run happened.
    pub iterations: usize,
    pub e_star_norm_before: f64,
    pub e_star_norm_after: f64,
    /// `(r eps + cum) + ((1 - r) eps - cum)`, equal to `eps`.
    pub conserved_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub rounds: Vec<RetrievalRound>,
    pub delta_eps_cumulative: f64,
    pub choice: RecycleChoice,
    pub final_theta: Vec<f64>,
    /// `delta_eps_cumulative / ((1 - r) eps)`.
    pub retrieved_portion: f64,
    /// Set when a re-run failed to converge or the round cap was hit.
    pub warning: Option<String>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = j;
        }
    }
    best
}

/// Target weight of coordinate value `theta_j`, without the floor.
fn target_weight(reg: &RegularizerTarget, theta_j: f64) -> f64 {
    let no_floor = RegularizerTarget {
        lambda0: 0.0,
        moor: true,
        ..*reg
    };
    no_floor.penalty_weights(Some(&[theta_j]), 1)[0]
}

/// Retrieves the unspent Jacobian budget of a converged fit and either
/// returns it or recycles it into less DP noise.
pub fn recycle(
    fit: &FitResult,
    data: &Dataset,
    certs: &BoundsCerts,
    choice: RecycleChoice,
) -> Result<RetrievalReport> {
    if !fit.converged {
        return Err(NappError::NotConverged);
    }
    let budget = fit.budget;
    let eps = budget.epsilon;
    let r_eps = budget.r_eps();
    let share = budget.jacobian_share();
    let n_e = fit.config.n_e;
    let lpp0 = fit.noise_record.lpp0;
    let scale = fit.curvature_scale();
    let lambda0 = fit.reg.lambda0;
    let e_star_norm = norm(&fit.noise_record.e_star);

    let first = retrievable_budget(lambda0, fit.v_min(), n_e, lpp0, budget.r, eps);
    if choice == RecycleChoice::Return || first == 0.0 {
        return Ok(RetrievalReport {
            rounds: vec![RetrievalRound {
                delta_eps: first,
                lambda0_before: lambda0,
                lambda0_after: lambda0,
                iterations: 0,
                e_star_norm_before: e_star_norm,
                e_star_norm_after: e_star_norm,
                conserved_total: (r_eps + first) + (share - first),
            }],
            delta_eps_cumulative: first,
            choice,
            final_theta: fit.theta_hat.clone(),
            retrieved_portion: if share > 0.0 { first / share } else { 0.0 },
            warning: None,
        });
    }

    let original = &fit.noise_record.draw;
    let gaussian = fit.noise_record.mechanism.is_some_and(|m| m.is_gaussian());
    let mut rounds = Vec::new();
    let mut cum = 0.0;
    let mut delta = first;
    let mut lambda0 = lambda0;
    let mut theta = fit.theta_hat.clone();
    let mut schedule = fit.final_schedule.clone();
    let mut e_norm = e_star_norm;
    let mut warning = None;

    while delta > 0.0 {
        if rounds.len() == MAX_RECYCLE_ROUNDS {
            warning = Some(format!("stopped after {MAX_RECYCLE_ROUNDS} recycle rounds"));
            break;
        }
        cum += delta;
        let conserved_total = (r_eps + cum) + (share - cum);
        if (conserved_total - eps).abs() > 4.0 * f64::EPSILON * eps {
            return Err(NappError::InvalidParameter(format!(
                "budget not conserved: {conserved_total} != {eps}"
            )));
        }

        let factor = if gaussian {
            (gaussian_dp_variance(certs.zeta12(), r_eps + cum, budget.delta)?
                / gaussian_dp_variance(certs.zeta12(), r_eps, budget.delta)?)
            .sqrt()
        } else {
            r_eps / (r_eps + cum)
        };
        let draw = original.rescaled(factor);

        let j_star = argmin(&schedule);
        let floor = lambda0.max(target_weight(&fit.reg, theta[j_star]));
        let rerun_reg = RegularizerTarget {
            lambda0: floor,
            ..fit.reg
        };
        let round_stream = streams::RECYCLE_BASE + rounds.len() as u64;
        let rerun = fit_with_noise(
            data,
            &rerun_reg,
            &budget,
            &fit.config,
            fit.noise_record.seed,
            fit.noise_record.mechanism,
            draw,
            round_stream,
            Some(&theta),
        )?;
        let new_e_norm = norm(&rerun.noise_record.e_star);
        if !rerun.converged {
            rounds.push(RetrievalRound {
                delta_eps: delta,
                lambda0_before: lambda0,
                lambda0_after: lambda0,
                iterations: rerun.iterations_used,
                e_star_norm_before: e_norm,
                e_star_norm_after: new_e_norm,
                conserved_total,
            });
            warning = Some(format!("re-run in round {} did not converge", rounds.len()));
            break;
        }

        let used_min = rerun
            .last_schedule
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let lambda0_before = lambda0;
        lambda0 = lambda0.max(scale * used_min);
        rounds.push(RetrievalRound {
            delta_eps: delta,
            lambda0_before,
            lambda0_after: lambda0,
            iterations: rerun.iterations_used,
            e_star_norm_before: e_norm,
            e_star_norm_after: new_e_norm,
            conserved_total,
        });

        e_norm = new_e_norm;
        theta = rerun.theta_hat.clone();
        schedule = rerun.final_schedule.clone();
        let v_min_fresh = rerun.v_min();
        delta = ((share - cum) * (1.0 - lambda0 / (scale * v_min_fresh))).max(0.0);
        if cum + delta > share {
            delta = (share - cum).max(0.0);
        }
    }

    Ok(RetrievalReport {
        rounds,
        delta_eps_cumulative: cum,
        choice,
        final_theta: theta,
        retrieved_portion: if share > 0.0 { cum / share } else { 0.0 },
        warning,
    })
}
