//! Loss families, their derivatives in the linear predictor, bound
//! certification and row-norm preprocessing.
//!
//! All losses are written per row as functions of `eta = x'theta` and the
//! outcome `y`:
//!
//! | family   | l(eta; y)            | l'             | l''         |
//! |----------|----------------------|----------------|-------------|
//! | linear   | (y - eta)^2 / 2      | eta - y        | 1           |
//! | logistic | log(1 + e^eta) - y eta | sigma(eta) - y | sigma(1-sigma) |
//! | poisson  | e^eta - y eta        | e^eta - y      | e^eta       |

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{NappError, Result};

/// Largest linear predictor accepted by the Poisson family before `exp` is
/// considered out of the certified range.
pub const POISSON_ETA_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossFamily {
    Linear,
    Logistic,
    Poisson,
}

impl LossFamily {
    pub const ALL: [LossFamily; 3] = [
        LossFamily::Linear,
        LossFamily::Logistic,
        LossFamily::Poisson,
    ];

    #[inline]
    pub fn loss(self, eta: f64, y: f64) -> f64 {
        match self {
            LossFamily::Linear => 0.5 * (y - eta) * (y - eta),
            LossFamily::Logistic => softplus(eta) - y * eta,
            LossFamily::Poisson => eta.exp() - y * eta,
        }
    }

    /// First derivative of the loss in `eta`.
    #[inline]
    pub fn d1(self, eta: f64, y: f64) -> f64 {
        match self {
            LossFamily::Linear => eta - y,
            LossFamily::Logistic => sigmoid(eta) - y,
            LossFamily::Poisson => eta.exp() - y,
        }
    }

    /// Second derivative of the loss in `eta`; never depends on `y`.
    #[inline]
    pub fn d2(self, eta: f64) -> f64 {
        match self {
            LossFamily::Linear => 1.0,
            LossFamily::Logistic => {
                let s = sigmoid(eta);
                s * (1.0 - s)
            }
            LossFamily::Poisson => eta.exp(),
        }
    }

    /// True when the Hessian does not depend on `theta`.
    pub fn has_constant_curvature(self) -> bool {
        matches!(self, LossFamily::Linear)
    }

    /// Pseudo-outcome carried by the noise rows. Chosen so that `l'(0) != 0`,
    /// which the DP rows need to reproduce the linear term `b'theta`.
    pub fn noise_pseudo_outcome(self) -> f64 {
        match self {
            LossFamily::Linear => -1.0,
            LossFamily::Logistic | LossFamily::Poisson => 0.0,
        }
    }

    pub fn check_outcome(self, y: f64) -> bool {
        match self {
            LossFamily::Linear => y.is_finite(),
            LossFamily::Logistic => y == 0.0 || y == 1.0,
            LossFamily::Poisson => y >= 0.0 && y.fract() == 0.0 && y.is_finite(),
        }
    }

    /// Conditional mean of the outcome given the linear predictor.
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            LossFamily::Linear => eta,
            LossFamily::Logistic => sigmoid(eta),
            LossFamily::Poisson => eta.exp(),
        }
    }

    #[inline]
    fn check_eta(self, eta: f64) -> Result<()> {
        if !eta.is_finite() || (self == LossFamily::Poisson && eta > POISSON_ETA_LIMIT) {
            return Err(NappError::PredictorOutOfRange { eta });
        }
        Ok(())
    }
}

impl fmt::Display for LossFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossFamily::Linear => "linear",
            LossFamily::Logistic => "logistic",
            LossFamily::Poisson => "poisson",
        })
    }
}

impl FromStr for LossFamily {
    type Err = NappError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "gaussian" => Ok(LossFamily::Linear),
            "logistic" | "binomial" => Ok(LossFamily::Logistic),
            "poisson" => Ok(LossFamily::Poisson),
            other => Err(NappError::InvalidParameter(format!(
                "unknown family `{other}`"
            ))),
        }
    }
}

#[inline]
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Observed data: `n x p` design, outcome vector and loss family.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub family: LossFamily,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, family: LossFamily) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(NappError::DimensionMismatch(
                "dataset needs n >= 1 and p >= 1".into(),
            ));
        }
        if x.nrows() != y.len() {
            return Err(NappError::DimensionMismatch(format!(
                "{} rows in X but {} outcomes",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NappError::Data("non-finite feature value".into()));
        }
        if let Some(bad) = y.iter().find(|&&v| !family.check_outcome(v)) {
            return Err(NappError::Data(format!(
                "outcome {bad} outside the {family} domain"
            )));
        }
        Ok(Self { x, y, family })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.x.row(i).norm()
    }

    pub fn max_row_norm(&self) -> f64 {
        (0..self.n()).map(|i| self.row_norm(i)).fold(0.0, f64::max)
    }

    /// Rows `idx` as a new dataset.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let x = DMatrix::from_fn(idx.len(), self.p(), |i, j| self.x[(idx[i], j)]);
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i]));
        Self::new(x, y, self.family)
    }

    /// Reads a CSV with a header row; column `y` is the outcome and every
    /// other column is a numeric feature.
    pub fn from_csv(path: impl AsRef<Path>, family: LossFamily) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let y_col = headers
            .iter()
            .position(|h| h.trim() == "y")
            .ok_or_else(|| NappError::Data("no `y` column in header".into()))?;
        let p = headers.len() - 1;
        let mut features = Vec::new();
        let mut outcomes = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(NappError::Data(format!(
                    "row {} has {} fields",
                    line + 2,
                    record.len()
                )));
            }
            for (j, field) in record.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    NappError::Data(format!("row {}: `{field}` is not numeric", line + 2))
                })?;
                if j == y_col {
                    outcomes.push(v);
                } else {
                    features.push(v);
                }
            }
        }
        let n = outcomes.len();
        let x = DMatrix::from_row_slice(n, p, &features);
        Self::new(x, DVector::from_vec(outcomes), family)
    }

    /// Writes the CSV layout read by [`Dataset::from_csv`], features named `x1..xp`.
    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header = vec!["y".to_string()];
        header.extend((1..=self.p()).map(|j| format!("x{j}")));
        writer.write_record(&header)?;
        for i in 0..self.n() {
            let mut row = vec![self.y[i].to_string()];
            row.extend((0..self.p()).map(|j| self.x[(i, j)].to_string()));
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Loss value, gradient and Hessian summed over a set of rows.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl LossEval {
    pub fn zeros(p: usize) -> Self {
        Self {
            value: 0.0,
            grad: DVector::zeros(p),
            hess: DMatrix::zeros(p, p),
        }
    }

    pub fn add_assign(&mut self, other: &LossEval) {
        self.value += other.value;
        self.grad += &other.grad;
        self.hess += &other.hess;
    }
}

fn check_dims(theta: &DVector<f64>, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if theta.len() != x.ncols() || x.nrows() != y.len() {
        return Err(NappError::DimensionMismatch(format!(
            "theta has {} entries, X is {}x{}, y has {}",
            theta.len(),
            x.nrows(),
            x.ncols(),
            y.len()
        )));
    }
    Ok(())
}

/// `sum_i l(x_i'theta; y_i)` only.
pub fn loss_value(
    family: LossFamily,
    theta: &DVector<f64>,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<f64> {
    check_dims(theta, x, y)?;
    let eta = x * theta;
    let mut value = 0.0;
    for (e, yi) in eta.iter().zip(y.iter()) {
        family.check_eta(*e)?;
        value += family.loss(*e, *yi);
    }
    Ok(value)
}

/// Loss, exact gradient and Hessian of `sum_i l(x_i'theta; y_i)`.
pub fn evaluate_loss(
    family: LossFamily,
    theta: &DVector<f64>,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<LossEval> {
    let (value, grad, weights) = value_grad_weights(family, theta, x, y)?;
    let hess = weighted_gram(x, &weights);
    Ok(LossEval { value, grad, hess })
}

/// Value, gradient and the per-row curvature weights `l''(eta_i)`.
pub(crate) fn value_grad_weights(
    family: LossFamily,
    theta: &DVector<f64>,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<(f64, DVector<f64>, DVector<f64>)> {
    check_dims(theta, x, y)?;
    let eta = x * theta;
    let n = eta.len();
    let mut value = 0.0;
    let mut d1 = DVector::zeros(n);
    let mut d2 = DVector::zeros(n);
    for i in 0..n {
        let e = eta[i];
        family.check_eta(e)?;
        value += family.loss(e, y[i]);
        d1[i] = family.d1(e, y[i]);
        d2[i] = family.d2(e);
    }
    let grad = x.tr_mul(&d1);
    Ok((value, grad, d2))
}

/// `X' diag(w) X`, filled symmetrically from the upper triangle.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let p = x.ncols();
    let mut scaled = x.clone();
    for j in 0..p {
        scaled.column_mut(j).component_mul_assign(w);
    }
    let mut h = DMatrix::zeros(p, p);
    for j in 0..p {
        let cj = scaled.column(j);
        for k in j..p {
            let v = cj.dot(&x.column(k));
            h[(j, k)] = v;
            h[(k, j)] = v;
        }
    }
    h
}

/// Returns `(l'(0; e_y), l''(0))` for a pseudo-outcome `e_y`.
pub fn link_derivatives_at_zero(family: LossFamily, e_y: f64) -> Result<(f64, f64)> {
    if !family.check_outcome(e_y) && !(family == LossFamily::Logistic && (0.0..=1.0).contains(&e_y))
    {
        return Err(NappError::InvalidParameter(format!(
            "pseudo-outcome {e_y} outside the {family} domain"
        )));
    }
    Ok((family.d1(0.0, e_y), family.d2(0.0)))
}

/// Same as [`link_derivatives_at_zero`] but rejects `l'(0) = 0`, which
/// cannot carry DP noise.
pub fn dp_link_derivatives(family: LossFamily, e_y: f64) -> Result<(f64, f64)> {
    let (lp0, lpp0) = link_derivatives_at_zero(family, e_y)?;
    if lp0 == 0.0 {
        return Err(NappError::IncompatiblePseudoOutcome { e_y });
    }
    Ok((lp0, lpp0))
}

/// Caller-declared ranges needed when the raw loss is not globally Lipschitz.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeBounds {
    /// Linear: bound on `|y - eta|`.
    pub residual: Option<f64>,
    /// Poisson: largest admissible count.
    pub y_max: Option<f64>,
    /// Poisson: bound on `|eta|`.
    pub eta_max: Option<f64>,
}

/// Feature-norm, gradient-norm and Hessian-eigenvalue bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsCerts {
    pub zeta1: f64,
    pub zeta2: f64,
    pub zeta3: f64,
}

impl BoundsCerts {
    pub fn zeta12(&self) -> f64 {
        self.zeta1 * self.zeta2
    }
}

fn positive(name: &str, v: Option<f64>) -> Result<f64> {
    match v {
        Some(v) if v > 0.0 && v.is_finite() => Ok(v),
        Some(v) => Err(NappError::NotCertifiable(format!(
            "{name} must be positive and finite, got {v}"
        ))),
        None => Err(NappError::NotCertifiable(format!(
            "{name} must be declared"
        ))),
    }
}

pub fn certify_bounds(data: &Dataset, declared: &OutcomeBounds) -> Result<BoundsCerts> {
    let zeta1 = data.max_row_norm();
    if zeta1 <= 0.0 {
        return Err(NappError::NotCertifiable(
            "all feature rows are zero".into(),
        ));
    }
    let (zeta2, zeta3) = match data.family {
        LossFamily::Logistic => (zeta1, zeta1 * zeta1 / 4.0),
        LossFamily::Linear => {
            let rho = positive("residual bound", declared.residual)?;
            (zeta1 * rho, zeta1 * zeta1)
        }
        LossFamily::Poisson => {
            let y_max = positive("y_max", declared.y_max)?;
            let eta_max = positive("eta_max", declared.eta_max)?;
            if let Some(y) = data.y.iter().find(|&&y| y > y_max) {
                return Err(NappError::NotCertifiable(format!(
                    "count {y} exceeds declared y_max {y_max}"
                )));
            }
            let e = eta_max.exp();
            (zeta1 * e.max(y_max), zeta1 * zeta1 * e)
        }
    };
    Ok(BoundsCerts {
        zeta1,
        zeta2,
        zeta3,
    })
}

/// Per-row clipping factors applied by [`scale_features`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub target_zeta1: f64,
    pub row_factors: Vec<f64>,
}

/// Clips every row to norm at most `target_zeta1`; rows already inside are untouched.
pub fn scale_features(data: &Dataset, target_zeta1: f64) -> Result<(Dataset, ScalingRecord)> {
    if !(target_zeta1 > 0.0) {
        return Err(NappError::InvalidParameter(format!(
            "target zeta1 must be positive, got {target_zeta1}"
        )));
    }
    let mut x = data.x.clone();
    let mut row_factors = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let norm = data.row_norm(i);
        let f = if norm > target_zeta1 {
            target_zeta1 / norm
        } else {
            1.0
        };
        if f != 1.0 {
            x.row_mut(i).scale_mut(f);
        }
        row_factors.push(f);
    }
    let scaled = Dataset {
        x,
        y: data.y.clone(),
        family: data.family,
    };
    Ok((
        scaled,
        ScalingRecord {
            target_zeta1,
            row_factors,
        },
    ))
}
