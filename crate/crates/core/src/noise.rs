//! DP noise mechanisms, the fixed DP rows `e*`, and the per-iteration
//! regularization rows `e~(t)` whose variance schedule realizes the target
//! penalty.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{NappError, Result};
use crate::glm::{dp_link_derivatives, LossFamily};

/// Coefficients below this magnitude are treated as zero when computing
/// adaptive weights `|theta_j|^-gamma`; it caps the regularization variance.
pub const THETA_FLOOR: f64 = 1e-4;

/// Pilot size for rejection sampling; zero acceptances in this many tries
/// means the acceptance rate is below roughly 1e-6.
const REJECTION_PILOT: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    /// Total budget; `f64::INFINITY` switches DP noise off.
    #[serde(with = "crate::serde_ext")]
    pub epsilon: f64,
    /// 0 for pure epsilon-DP.
    pub delta: f64,
    /// Fraction of `epsilon` spent on the noise-density ratio.
    pub r: f64,
    /// Budget retrieved so far out of `(1 - r) epsilon`.
    pub delta_eps: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64, r: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(NappError::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(NappError::InvalidParameter(format!(
                "delta must lie in [0, 1), got {delta}"
            )));
        }
        if !(r > 0.0 && r < 1.0) {
            return Err(NappError::InvalidParameter(format!(
                "r must lie in (0, 1), got {r}"
            )));
        }
        Ok(Self {
            epsilon,
            delta,
            r,
            delta_eps: 0.0,
        })
    }

    pub fn non_private() -> Self {
        Self {
            epsilon: f64::INFINITY,
            delta: 0.0,
            r: 0.5,
            delta_eps: 0.0,
        }
    }

    pub fn is_private(&self) -> bool {
        self.epsilon.is_finite()
    }

    /// Budget for the density ratio, `r * epsilon`.
    pub fn r_eps(&self) -> f64 {
        self.r * self.epsilon
    }

    /// Budget for the Jacobian ratio, `(1 - r) * epsilon`.
    pub fn jacobian_share(&self) -> f64 {
        (1.0 - self.r) * self.epsilon
    }

    /// Smallest admissible strong-convexity floor, `zeta3 / (2 (1 - r) epsilon)`.
    pub fn lambda0_floor(&self, zeta3: f64) -> f64 {
        if self.is_private() {
            zeta3 / (2.0 * self.jacobian_share())
        } else {
            0.0
        }
    }
}

/// DP noise law, as selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    #[serde(rename = "eps-laplace")]
    SphericalLaplace,
    #[serde(rename = "eps-delta-gaussian")]
    Gaussian,
    #[serde(rename = "vs-truncated-laplace")]
    TruncatedLaplace,
    #[serde(rename = "vs-truncated-gaussian")]
    TruncatedGaussian,
}

impl Mechanism {
    /// Untruncated law for `delta`; `delta = 0` means spherical Laplace.
    pub fn for_delta(delta: f64, truncated: bool) -> Self {
        match (delta > 0.0, truncated) {
            (false, false) => Mechanism::SphericalLaplace,
            (true, false) => Mechanism::Gaussian,
            (false, true) => Mechanism::TruncatedLaplace,
            (true, true) => Mechanism::TruncatedGaussian,
        }
    }

    pub fn is_gaussian(self) -> bool {
        matches!(self, Mechanism::Gaussian | Mechanism::TruncatedGaussian)
    }

    pub fn is_truncated(self) -> bool {
        matches!(
            self,
            Mechanism::TruncatedLaplace | Mechanism::TruncatedGaussian
        )
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::SphericalLaplace => "eps-laplace",
            Mechanism::Gaussian => "eps-delta-gaussian",
            Mechanism::TruncatedLaplace => "vs-truncated-laplace",
            Mechanism::TruncatedGaussian => "vs-truncated-gaussian",
        })
    }
}

impl FromStr for Mechanism {
    type Err = NappError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eps-laplace" => Ok(Mechanism::SphericalLaplace),
            "eps-delta-gaussian" => Ok(Mechanism::Gaussian),
            "vs-truncated-laplace" => Ok(Mechanism::TruncatedLaplace),
            "vs-truncated-gaussian" => Ok(Mechanism::TruncatedGaussian),
            other => Err(NappError::InvalidParameter(format!(
                "unknown mechanism `{other}`"
            ))),
        }
    }
}

/// One draw of the DP noise vector `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDraw {
    pub b: Vec<f64>,
    pub mechanism: Mechanism,
    /// Truncation point `c`; `None` for the untruncated laws.
    #[serde(with = "crate::serde_ext::option", default)]
    pub truncation: Option<f64>,
    /// Radial scale `zeta1 zeta2 / (r eps)` for Laplace, per-coordinate sigma for Gaussian.
    pub scale: f64,
}

impl NoiseDraw {
    pub fn zero(p: usize) -> Self {
        Self {
            b: vec![0.0; p],
            mechanism: Mechanism::SphericalLaplace,
            truncation: None,
            scale: 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        self.b.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Multiplies `b` by `factor`, keeping the recorded scale consistent.
    pub fn rescaled(&self, factor: f64) -> Self {
        Self {
            b: self.b.iter().map(|v| v * factor).collect(),
            mechanism: self.mechanism,
            truncation: self.truncation,
            scale: self.scale * factor,
        }
    }
}

/// Inputs shared by every mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismParams {
    pub p: usize,
    /// `zeta1 * zeta2`.
    pub zeta12: f64,
    /// Budget on the density ratio, `r * epsilon` (plus any recycled amount).
    pub r_eps: f64,
    pub delta: f64,
}

fn check_common(p: usize, zeta12: f64, r_eps: f64) -> Result<()> {
    if p == 0 {
        return Err(NappError::InvalidParameter(
            "dimension p must be at least 1".into(),
        ));
    }
    if !(zeta12 > 0.0) || !(r_eps > 0.0) {
        return Err(NappError::InvalidParameter(format!(
            "zeta1*zeta2 and r*eps must be positive, got {zeta12} and {r_eps}"
        )));
    }
    Ok(())
}

/// Radial scale of the spherical Laplace law.
pub fn laplace_scale(zeta12: f64, r_eps: f64) -> f64 {
    zeta12 / r_eps
}

/// Per-coordinate variance `2 (r eps)^-2 zeta1^2 zeta2^2 (r eps - log delta)`.
pub fn gaussian_dp_variance(zeta12: f64, r_eps: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(NappError::GaussianNeedsDelta(delta));
    }
    Ok(2.0 * zeta12 * zeta12 * (r_eps - delta.ln()) / (r_eps * r_eps))
}

fn uniform_direction<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..p)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return z.into_iter().map(|v| v / norm).collect();
        }
    }
}

/// Density proportional to `exp(-(r eps) ||b|| / (zeta1 zeta2))`: the radius
/// is Gamma(shape p, scale zeta1 zeta2 / (r eps)) and the direction uniform.
pub fn sample_spherical_laplace<R: Rng + ?Sized>(
    p: usize,
    zeta12: f64,
    r_eps: f64,
    rng: &mut R,
) -> Result<NoiseDraw> {
    check_common(p, zeta12, r_eps)?;
    let scale = laplace_scale(zeta12, r_eps);
    let radial =
        Gamma::new(p as f64, scale).map_err(|e| NappError::InvalidParameter(e.to_string()))?;
    let radius = radial.sample(rng);
    let b = uniform_direction(p, rng)
        .into_iter()
        .map(|u| u * radius)
        .collect();
    Ok(NoiseDraw {
        b,
        mechanism: Mechanism::SphericalLaplace,
        truncation: None,
        scale,
    })
}

pub fn sample_gaussian_dp<R: Rng + ?Sized>(
    p: usize,
    zeta12: f64,
    r_eps: f64,
    delta: f64,
    rng: &mut R,
) -> Result<NoiseDraw> {
    check_common(p, zeta12, r_eps)?;
    let sigma = gaussian_dp_variance(zeta12, r_eps, delta)?.sqrt();
    let b = (0..p)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(NoiseDraw {
        b,
        mechanism: Mechanism::Gaussian,
        truncation: None,
        scale: sigma,
    })
}

/// Lower bound on the Gaussian sigma that yields (eps, delta)-DP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaLowerBound {
    /// `eps^-1 zeta1 zeta2 (sqrt(-2 log delta + eps) + sqrt(-2 log delta))`.
    pub exact: f64,
    /// `2 eps^-1 zeta1 zeta2 sqrt(-2 log delta + eps)`, valid when eps << -2 log delta.
    pub simplified: f64,
}

pub fn gaussian_sigma_lower_bound(epsilon: f64, delta: f64, zeta12: f64) -> SigmaLowerBound {
    let t = -2.0 * delta.ln();
    SigmaLowerBound {
        exact: zeta12 * ((t + epsilon).sqrt() + t.sqrt()) / epsilon,
        simplified: 2.0 * zeta12 * (t + epsilon).sqrt() / epsilon,
    }
}

/// Draws `b` from `mechanism`. Truncated laws are conditioned on `b_j > c`
/// for every coordinate; `c = -inf` gives back the untruncated law.
pub fn sample_mechanism<R: Rng + ?Sized>(
    mechanism: Mechanism,
    params: &MechanismParams,
    truncation: Option<f64>,
    rng: &mut R,
) -> Result<NoiseDraw> {
    let base = |rng: &mut R| -> Result<NoiseDraw> {
        if mechanism.is_gaussian() {
            sample_gaussian_dp(params.p, params.zeta12, params.r_eps, params.delta, rng)
        } else {
            sample_spherical_laplace(params.p, params.zeta12, params.r_eps, rng)
        }
    };
    if !mechanism.is_truncated() {
        return base(rng);
    }
    let c = truncation.unwrap_or(0.0);
    sample_truncated(mechanism, c, params, rng)
}

/// Left-truncated spherical Laplace or Gaussian conditioned on `{b_j > c for all j}`.
///
/// At `c = 0` both base laws are invariant under coordinate sign flips, so
/// the orthant-conditioned law is that of `|b|` and is sampled exactly
/// without rejection. For `c < 0` the Gaussian coordinates are independent
/// and rejected one at a time; the spherical Laplace is rejected as a whole
/// vector.
pub fn sample_truncated<R: Rng + ?Sized>(
    mechanism: Mechanism,
    c: f64,
    params: &MechanismParams,
    rng: &mut R,
) -> Result<NoiseDraw> {
    if !(c <= 0.0) {
        return Err(NappError::InvalidParameter(format!(
            "truncation point must be <= 0, got {c}"
        )));
    }
    let gaussian = mechanism.is_gaussian();
    let draw = |rng: &mut R| -> Result<NoiseDraw> {
        if gaussian {
            sample_gaussian_dp(params.p, params.zeta12, params.r_eps, params.delta, rng)
        } else {
            sample_spherical_laplace(params.p, params.zeta12, params.r_eps, rng)
        }
    };
    let label = if gaussian {
        Mechanism::TruncatedGaussian
    } else {
        Mechanism::TruncatedLaplace
    };

    if c == f64::NEG_INFINITY {
        let d = draw(rng)?;
        return Ok(NoiseDraw {
            mechanism: label,
            truncation: Some(c),
            ..d
        });
    }
    if c == 0.0 {
        let d = draw(rng)?;
        let b = d.b.iter().map(|v| v.abs()).collect();
        return Ok(NoiseDraw {
            b,
            mechanism: label,
            truncation: Some(c),
            scale: d.scale,
        });
    }
    if gaussian {
        let sigma = gaussian_dp_variance(params.zeta12, params.r_eps, params.delta)?.sqrt();
        let mut b = Vec::with_capacity(params.p);
        for _ in 0..params.p {
            let mut tries = 0;
            loop {
                let v = sigma * rng.sample::<f64, _>(StandardNormal);
                if v > c {
                    b.push(v);
                    break;
                }
                tries += 1;
                if tries >= REJECTION_PILOT {
                    return Err(NappError::InfeasibleTruncation { c, p: params.p });
                }
            }
        }
        return Ok(NoiseDraw {
            b,
            mechanism: label,
            truncation: Some(c),
            scale: sigma,
        });
    }
    for _ in 0..REJECTION_PILOT {
        let d = draw(rng)?;
        if d.b.iter().all(|&v| v > c) {
            return Ok(NoiseDraw {
                mechanism: label,
                truncation: Some(c),
                ..d
            });
        }
    }
    Err(NappError::InfeasibleTruncation { c, p: params.p })
}

/// The DP component shared by every noise row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpRows {
    /// `b / (n_e l'(0; e_y))`.
    pub e_star: Vec<f64>,
    pub e_y: f64,
    pub lp0: f64,
}

pub fn build_dp_rows(b: &NoiseDraw, n_e: usize, family: LossFamily, e_y: f64) -> Result<DpRows> {
    if n_e == 0 {
        return Err(NappError::InvalidParameter("n_e must be positive".into()));
    }
    let (lp0, _) = dp_link_derivatives(family, e_y)?;
    let denom = n_e as f64 * lp0;
    Ok(DpRows {
        e_star: b.b.iter().map(|v| v / denom).collect(),
        e_y,
        lp0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Penalty {
    Ridge,
    /// `l_{2-gamma}`; lasso is `gamma = 1`.
    Bridge {
        gamma: f64,
    },
    ElasticNet {
        kappa: f64,
    },
}

impl Penalty {
    pub fn lasso() -> Self {
        Penalty::Bridge { gamma: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Penalty::Ridge => Ok(()),
            Penalty::Bridge { gamma } if (0.0..2.0).contains(&gamma) => Ok(()),
            Penalty::Bridge { gamma } => Err(NappError::InvalidParameter(format!(
                "gamma must lie in [0, 2), got {gamma}"
            ))),
            Penalty::ElasticNet { kappa } if kappa > 0.0 && kappa < 1.0 => Ok(()),
            Penalty::ElasticNet { kappa } => Err(NappError::InvalidParameter(format!(
                "kappa must lie in (0, 1), got {kappa}"
            ))),
        }
    }
}

impl FromStr for Penalty {
    type Err = NappError;

    /// `ridge`, `lasso`, `bridge:G` or `enet:K`.
    fn from_str(s: &str) -> Result<Self> {
        let parse = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| NappError::InvalidParameter(format!("bad penalty parameter `{v}`")))
        };
        let pen = match s.split_once(':') {
            None if s == "ridge" => Penalty::Ridge,
            None if s == "lasso" => Penalty::lasso(),
            Some(("bridge", g)) => Penalty::Bridge { gamma: parse(g)? },
            Some(("enet", k)) => Penalty::ElasticNet { kappa: parse(k)? },
            _ => {
                return Err(NappError::InvalidParameter(format!(
                    "unknown penalty `{s}`"
                )))
            }
        };
        pen.validate()?;
        Ok(pen)
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Penalty::Ridge => f.write_str("ridge"),
            Penalty::Bridge { gamma } if *gamma == 1.0 => f.write_str("lasso"),
            Penalty::Bridge { gamma } => write!(f, "bridge:{gamma}"),
            Penalty::ElasticNet { kappa } => write!(f, "enet:{kappa}"),
        }
    }
}

/// Target penalty, its tuning parameter and the strong-convexity floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerTarget {
    pub penalty: Penalty,
    pub lambda: f64,
    pub lambda0: f64,
    /// `true`: one weighted-l2 term with weight `max{target, lambda0}`.
    /// `false`: the legacy sum `target + lambda0` (ridge keeps the max).
    pub moor: bool,
}

impl RegularizerTarget {
    pub fn new(penalty: Penalty, lambda: f64, lambda0: f64, moor: bool) -> Result<Self> {
        penalty.validate()?;
        if !(lambda >= 0.0) || !(lambda0 >= 0.0) {
            return Err(NappError::InvalidParameter(format!(
                "lambda and lambda0 must be non-negative, got {lambda} and {lambda0}"
            )));
        }
        Ok(Self {
            penalty,
            lambda,
            lambda0,
            moor,
        })
    }

    /// Weight of the target term for coordinate value `theta_prev`
    /// (`None` in the first iteration).
    fn target_weight(&self, theta_prev: Option<f64>) -> f64 {
        match (self.penalty, theta_prev) {
            (Penalty::Ridge, _) => self.lambda,
            (Penalty::Bridge { .. }, None) => 0.0,
            (Penalty::Bridge { gamma }, Some(th)) => {
                self.lambda * th.abs().max(THETA_FLOOR).powf(-gamma)
            }
            (Penalty::ElasticNet { kappa }, None) => self.lambda * kappa,
            (Penalty::ElasticNet { kappa }, Some(th)) => {
                self.lambda / th.abs().max(THETA_FLOOR) + self.lambda * kappa
            }
        }
    }

    /// Quadratic weights `w_j` such that the realized penalty is `sum_j w_j theta_j^2`.
    pub fn penalty_weights(&self, theta_prev: Option<&[f64]>, p: usize) -> Vec<f64> {
        (0..p)
            .map(|j| {
                let target = self.target_weight(theta_prev.map(|th| th[j]));
                if self.moor || self.penalty == Penalty::Ridge {
                    target.max(self.lambda0)
                } else {
                    target + self.lambda0
                }
            })
            .collect()
    }

    /// Value of the target penalty `Lambda * R(theta)`.
    pub fn target_value(&self, theta: &[f64]) -> f64 {
        match self.penalty {
            Penalty::Ridge => self.lambda * theta.iter().map(|v| v * v).sum::<f64>(),
            Penalty::Bridge { gamma } => {
                self.lambda * theta.iter().map(|v| v.abs().powf(2.0 - gamma)).sum::<f64>()
            }
            Penalty::ElasticNet { kappa } => {
                self.lambda * theta.iter().map(|v| v.abs() + kappa * v * v).sum::<f64>()
            }
        }
    }
}

/// Variance schedule of the regularization noise for iteration `t >= 1`:
/// `V_j = 2 w_j / (n_e l''(0))` with `w_j` from [`RegularizerTarget::penalty_weights`].
pub fn regularization_variance(
    reg: &RegularizerTarget,
    theta_prev: Option<&[f64]>,
    t: usize,
    p: usize,
    lpp0: f64,
    n_e: usize,
) -> Result<Vec<f64>> {
    reg.penalty.validate()?;
    if t == 0 {
        return Err(NappError::InvalidParameter(
            "iterations are numbered from 1".into(),
        ));
    }
    if !(lpp0 > 0.0) || n_e == 0 {
        return Err(NappError::InvalidParameter(
            "l''(0) and n_e must be positive".into(),
        ));
    }
    let prev = if t == 1 { None } else { theta_prev };
    if t >= 2 && prev.is_none() && reg.penalty != Penalty::Ridge {
        return Err(NappError::InvalidParameter(
            "previous estimate required for t >= 2".into(),
        ));
    }
    if let Some(th) = prev {
        if th.len() != p {
            return Err(NappError::DimensionMismatch(format!(
                "previous estimate has {} entries, p = {p}",
                th.len()
            )));
        }
    }
    let prefactor = 2.0 / (n_e as f64 * lpp0);
    Ok(reg
        .penalty_weights(prev, p)
        .into_iter()
        .map(|w| prefactor * w)
        .collect())
}

/// `n_e x p` antithetic Gaussian rows: the first half i.i.d. `N(0, diag(V))`,
/// the second half their exact negations.
pub fn sample_regularization_noise<R: Rng + ?Sized>(
    variance: &[f64],
    n_e: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if n_e % 2 != 0 {
        return Err(NappError::OddNoiseRows(n_e));
    }
    if let Some(v) = variance.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(NappError::InvalidParameter(format!(
            "variance {v} is not a finite non-negative number"
        )));
    }
    let p = variance.len();
    let half = n_e / 2;
    let sds: Vec<f64> = variance.iter().map(|v| v.sqrt()).collect();
    let mut m = DMatrix::zeros(n_e, p);
    for i in 0..half {
        for (j, sd) in sds.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            let v = sd * z;
            m[(i, j)] = v;
            m[(i + half, j)] = -v;
        }
    }
    Ok(m)
}

/// The noise rows appended to the data in one iteration.
#[derive(Debug, Clone)]
pub struct AugmentedBlock {
    pub e_star: DVector<f64>,
    pub e_tilde: DMatrix<f64>,
    pub e_y: DVector<f64>,
    pub variance: Vec<f64>,
}

impl AugmentedBlock {
    pub fn new(
        e_star: &[f64],
        e_tilde: DMatrix<f64>,
        e_y: f64,
        variance: Vec<f64>,
    ) -> Result<Self> {
        let n_e = e_tilde.nrows();
        if n_e % 2 != 0 {
            return Err(NappError::OddNoiseRows(n_e));
        }
        if e_star.len() != e_tilde.ncols() || variance.len() != e_tilde.ncols() {
            return Err(NappError::DimensionMismatch(
                "e* / e~ / V widths differ".into(),
            ));
        }
        Ok(Self {
            e_star: DVector::from_column_slice(e_star),
            e_tilde,
            e_y: DVector::from_element(n_e, e_y),
            variance,
        })
    }

    pub fn n_e(&self) -> usize {
        self.e_tilde.nrows()
    }

    /// Rows fed to the solver: `e~_i + e*`.
    pub fn design(&self) -> DMatrix<f64> {
        let mut m = self.e_tilde.clone();
        for (j, s) in self.e_star.iter().enumerate() {
            if *s != 0.0 {
                m.column_mut(j).add_scalar_mut(*s);
            }
        }
        m
    }
}
