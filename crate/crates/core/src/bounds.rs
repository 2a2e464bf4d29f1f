//! Utility guarantees: empirical-risk bound, excess-risk bounds, sample
//! complexity, and the realized-regularizer probe.
//!
//! Throughout, `M = n_e * l''(0) * V_min` is twice the smallest quadratic
//! weight of the regularization schedule.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{NappError, Result};
use crate::noise::RegularizerTarget;

/// Which DP guarantee the noise was calibrated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Guarantee {
    Eps,
    EpsDelta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundParams {
    pub pi: f64,
    pub pi_prime: f64,
    pub c_prime: f64,
    pub varrho: f64,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self {
            pi: 0.05,
            pi_prime: 0.05,
            c_prime: 1.0,
            varrho: 0.1,
        }
    }
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.pi) || !open(self.pi_prime) {
            return Err(NappError::InvalidParameter(
                "pi and pi' must lie in (0, 1)".into(),
            ));
        }
        if !(self.varrho > 0.0) {
            return Err(NappError::InvalidParameter(
                "varrho must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Shared inputs of the excess-risk bounds and the sample complexity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskInputs {
    pub guarantee: Guarantee,
    pub p: usize,
    pub zeta1: f64,
    pub zeta2: f64,
    pub r: f64,
    pub epsilon: f64,
    /// Required for [`Guarantee::EpsDelta`].
    pub delta: Option<f64>,
    pub n: usize,
    pub n_e: usize,
    pub lpp0: f64,
    pub v_min: f64,
}

impl RiskInputs {
    /// `n_e * l''(0) * V_min`.
    pub fn modulus(&self) -> f64 {
        self.n_e as f64 * self.lpp0 * self.v_min
    }

    fn check(&self) -> Result<()> {
        if self.p == 0 || self.n == 0 || !(self.modulus() > 0.0) || !(self.r * self.epsilon > 0.0) {
            return Err(NappError::BoundUndefined(
                "p, n, n_e l''(0) V_min and r eps must be positive".into(),
            ));
        }
        Ok(())
    }

    fn delta(&self) -> Result<f64> {
        match self.delta {
            Some(d) if d > 0.0 && d < 1.0 => Ok(d),
            other => Err(NappError::GaussianNeedsDelta(other.unwrap_or(0.0))),
        }
    }
}

/// `n^-1 (||b||^2 / (n_e l''(0) V_min) + R_t(theta_hat) - R(theta_hat))`.
pub fn empirical_risk_bound(
    b_norm: f64,
    n: usize,
    n_e: usize,
    lpp0: f64,
    v_min: f64,
    r_t_at_theta_hat: f64,
    r_at_theta_hat: f64,
) -> f64 {
    let m = n_e as f64 * lpp0 * v_min;
    (b_norm * b_norm / m + (r_t_at_theta_hat - r_at_theta_hat)) / n as f64
}

/// Noise-dependent factor of the excess-risk bound: `(p zeta1 zeta2 log(p/pi) / (r eps))^2`
/// for epsilon-DP, `4 p zeta1^2 zeta2^2 (r eps)^-2 (r eps + log(2/delta)) log(1/pi)` otherwise.
fn risk_factor(inputs: &RiskInputs, pi: f64) -> Result<f64> {
    let z = inputs.zeta1 * inputs.zeta2;
    let r_eps = inputs.r * inputs.epsilon;
    let p = inputs.p as f64;
    Ok(match inputs.guarantee {
        Guarantee::Eps => (p * z * (p / pi).ln() / r_eps).powi(2),
        Guarantee::EpsDelta => {
            let delta = inputs.delta()?;
            4.0 * p * z * z * (r_eps + (2.0 / delta).ln()) * (1.0 / pi).ln() / (r_eps * r_eps)
        }
    })
}

/// B1 (epsilon-DP) or B2 ((epsilon, delta)-DP), holding with probability `1 - pi`.
pub fn excess_risk_bound(inputs: &RiskInputs, reg_gap: f64, pi: f64) -> Result<f64> {
    inputs.check()?;
    if !(pi > 0.0 && pi < 1.0) {
        return Err(NappError::InvalidParameter(format!(
            "pi must lie in (0, 1), got {pi}"
        )));
    }
    let bracket = 1.0 / inputs.modulus() + reg_gap;
    Ok(risk_factor(inputs, pi)? * bracket / inputs.n as f64)
}

/// The constant `C` of the sample complexity.
pub fn complexity_constant(inputs: &RiskInputs, pi: f64) -> Result<f64> {
    let f = risk_factor(inputs, pi)?;
    Ok(match inputs.guarantee {
        Guarantee::Eps => 2.0 * f,
        Guarantee::EpsDelta => f,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexity {
    /// Training size above which the excess risk is below `varrho`.
    pub n_required: f64,
    pub c: f64,
    pub c_prime: f64,
}

/// `n > (varrho + C' log(pi') / (2M))^-1 (R_t(theta0) + C / M)`.
pub fn sample_complexity(
    params: &BoundParams,
    inputs: &RiskInputs,
    r_t_at_theta0: f64,
) -> Result<SampleComplexity> {
    params.validate()?;
    inputs.check()?;
    let m = inputs.modulus();
    let c = complexity_constant(inputs, params.pi)?;
    let denom = params.varrho + params.c_prime * params.pi_prime.ln() / (2.0 * m);
    if !(denom > 0.0) {
        return Err(NappError::BoundUndefined(format!(
            "varrho = {} is too small for pi' = {} and C' = {}",
            params.varrho, params.pi_prime, params.c_prime
        )));
    }
    Ok(SampleComplexity {
        n_required: (r_t_at_theta0 + c / m) / denom,
        c,
        c_prime: params.c_prime,
    })
}

/// Excess risk guaranteed at training size `n`:
/// `R_t(theta0)/n + (C/n - C' log(pi') / 2) / M`.
pub fn achievable_excess_risk(
    params: &BoundParams,
    inputs: &RiskInputs,
    r_t_at_theta0: f64,
) -> Result<f64> {
    params.validate()?;
    inputs.check()?;
    let n = inputs.n as f64;
    let c = complexity_constant(inputs, params.pi)?;
    Ok(
        r_t_at_theta0 / n
            + (c / n - 0.5 * params.c_prime * params.pi_prime.ln()) / inputs.modulus(),
    )
}

/// Whether the probe uses the max (MOOR) or the legacy sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeMode {
    Moor,
    Legacy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedPoint {
    pub theta: f64,
    /// Target penalty `Lambda R(theta)`.
    pub target: f64,
    /// `w(theta) theta^2` at the fixed point of the schedule.
    pub realized: f64,
    /// `n_e l''(0) V(theta) = 2 w(theta)`.
    pub modulus: f64,
    pub iterations: usize,
    pub converged: bool,
}

const PROBE_MAX_ITER: usize = 100;
const PROBE_TOL: f64 = 1e-10;

/// Realized scalar regularizer on a grid of `theta`.
///
/// The schedule weight is iterated as `w <- w(theta)` until it stops
/// changing; for the penalties here the weight depends on `theta` only, so
/// the iteration settles after one update.
pub fn realized_regularizer(
    reg: &RegularizerTarget,
    theta_grid: &[f64],
    mode: ProbeMode,
) -> Vec<RealizedPoint> {
    let probe = RegularizerTarget {
        moor: mode == ProbeMode::Moor,
        ..*reg
    };
    theta_grid
        .iter()
        .map(|&theta| {
            let mut w = probe.penalty_weights(None, 1)[0];
            let mut iterations = 0;
            let mut converged = false;
            while iterations < PROBE_MAX_ITER {
                iterations += 1;
                let next = probe.penalty_weights(Some(&[theta]), 1)[0];
                let done = (next - w).abs() <= PROBE_TOL * next.abs().max(1.0);
                w = next;
                if done {
                    converged = true;
                    break;
                }
            }
            RealizedPoint {
                theta,
                target: reg.target_value(&[theta]),
                realized: w * theta * theta,
                modulus: 2.0 * w,
                iterations,
                converged,
            }
        })
        .collect()
}

/// Monte-Carlo estimate of the quadratic term `l''(0)/2 sum_i (e~_i theta)^2`
/// at weight `w`, returned as (mean, standard error) over `reps` draws.
pub fn realized_overlay<R: Rng + ?Sized>(
    w: f64,
    theta: f64,
    n_e: usize,
    lpp0: f64,
    reps: usize,
    rng: &mut R,
) -> (f64, f64) {
    let v = 2.0 * w / (n_e as f64 * lpp0);
    let sd = v.sqrt();
    let half = n_e / 2;
    let draws: Vec<f64> = (0..reps.max(2))
        .map(|_| {
            let ss: f64 = (0..half)
                .map(|_| {
                    let e = sd * rng.sample::<f64, _>(StandardNormal);
                    e * e
                })
                .sum();
            0.5 * lpp0 * theta * theta * 2.0 * ss
        })
        .collect();
    (
        crate::stats::mean(&draws),
        crate::stats::std_dev(&draws) / (draws.len() as f64).sqrt(),
    )
}
