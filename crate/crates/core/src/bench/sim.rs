//! Data generators for the benchmark designs.
//!
//! | family   | x_ij             | nonzero theta (8 of 16) | y                                   |
//! |----------|------------------|-------------------------|-------------------------------------|
//! | linear   | U(-0.25, 0.25)   | 1 - 0.8k/7              | x'theta + tN(0, 0.25^2, -0.5, 0.5)  |
//! | poisson  | U(-0.25, 0.25)   | 4 - 0.5k/7              | Poisson(exp(x'theta))               |
//! | logistic | U(-0.5, 0.5)     | 4 - 0.5k/7              | Bern(1 / (1 + exp(x'theta)))        |
//!
//! The logistic outcome has `P(y = 1)` decreasing in `x'theta`, so a fit
//! with the usual logit link recovers `-theta`.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{NappError, Result};
use crate::glm::{Dataset, LossFamily};
use crate::rng::StreamSeed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncNormal {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncNormal {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let v = self.mean + self.sd * rng.sample::<f64, _>(StandardNormal);
            if v >= self.lo && v <= self.hi {
                return v;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub family: LossFamily,
    pub n: usize,
    pub theta_true: Vec<f64>,
    pub feature_lo: f64,
    pub feature_hi: f64,
    /// Linear family only.
    pub noise: Option<TruncNormal>,
    pub seed: u64,
}

/// Eight decreasing nonzero coefficients followed by eight zeros.
pub fn benchmark_theta(family: LossFamily) -> Vec<f64> {
    let (a, b) = match family {
        LossFamily::Linear => (1.0, 0.8),
        LossFamily::Poisson | LossFamily::Logistic => (4.0, 0.5),
    };
    let mut theta: Vec<f64> = (0..8).map(|k| a - b * k as f64 / 7.0).collect();
    theta.extend([0.0; 8]);
    theta
}

impl SimSpec {
    pub fn benchmark(family: LossFamily, n: usize, seed: u64) -> Self {
        let half = match family {
            LossFamily::Logistic => 0.5,
            _ => 0.25,
        };
        let noise = (family == LossFamily::Linear).then_some(TruncNormal {
            mean: 0.0,
            sd: 0.25,
            lo: -0.5,
            hi: 0.5,
        });
        Self {
            family,
            n,
            theta_true: benchmark_theta(family),
            feature_lo: -half,
            feature_hi: half,
            noise,
            seed,
        }
    }

    /// Same design with every coefficient zero.
    pub fn null(family: LossFamily, n: usize, seed: u64) -> Self {
        let mut spec = Self::benchmark(family, n, seed);
        spec.theta_true = vec![0.0; spec.theta_true.len()];
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.theta_true.is_empty() {
            return Err(NappError::InvalidParameter(
                "n and p must be positive".into(),
            ));
        }
        if !(self.feature_lo < self.feature_hi) {
            return Err(NappError::InvalidParameter(
                "feature_lo must be below feature_hi".into(),
            ));
        }
        if let Some(t) = &self.noise {
            if !(t.lo < t.hi) || !(t.sd > 0.0) {
                return Err(NappError::InvalidParameter(
                    "truncated normal needs lo < hi and sd > 0".into(),
                ));
            }
        }
        Ok(())
    }
}

pub fn simulate_dataset(spec: &SimSpec) -> Result<Dataset> {
    spec.validate()?;
    let p = spec.theta_true.len();
    let mut rng = StreamSeed::new(spec.seed, 0).rng();
    let width = spec.feature_hi - spec.feature_lo;
    let x = DMatrix::from_fn(spec.n, p, |_, _| {
        spec.feature_lo + width * rng.random::<f64>()
    });
    let theta = DVector::from_column_slice(&spec.theta_true);
    let eta = &x * &theta;
    let y = match spec.family {
        LossFamily::Linear => {
            let noise = spec.noise.unwrap_or(TruncNormal {
                mean: 0.0,
                sd: 0.25,
                lo: -0.5,
                hi: 0.5,
            });
            eta.map(|e| e + noise.sample(&mut rng))
        }
        LossFamily::Poisson => eta.map(|e| {
            let lambda = e.exp();
            Poisson::new(lambda)
                .map(|d| d.sample(&mut rng))
                .unwrap_or(0.0)
        }),
        LossFamily::Logistic => eta.map(|e| {
            let p1 = 1.0 / (1.0 + e.exp());
            if rng.random::<f64>() < p1 {
                1.0
            } else {
                0.0
            }
        }),
    };
    Dataset::new(x, y, spec.family)
}

/// `napp simulate` configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub family: LossFamily,
    pub n: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Overrides the benchmark coefficients.
    pub theta: Option<Vec<f64>>,
    #[serde(default)]
    pub null: bool,
}

impl SimConfig {
    pub fn spec(&self) -> SimSpec {
        let mut spec = if self.null {
            SimSpec::null(self.family, self.n, self.seed)
        } else {
            SimSpec::benchmark(self.family, self.n, self.seed)
        };
        if let Some(theta) = &self.theta {
            spec.theta_true = theta.clone();
        }
        spec
    }
}
