//! Reference implementations shared by the integration tests. Everything
//! here is written from the textbook formulas, without calling the
//! library's loss or solver code.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use napp::bench::{simulate_dataset, SimSpec};
use napp::{Dataset, LossFamily};
use statrs::distribution::ContinuousCDF;

pub fn benchmark_data(family: LossFamily, n: usize, seed: u64) -> Dataset {
    simulate_dataset(&SimSpec::benchmark(family, n, seed)).unwrap()
}

pub fn null_data(family: LossFamily, n: usize, seed: u64) -> Dataset {
    simulate_dataset(&SimSpec::null(family, n, seed)).unwrap()
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

pub fn sd(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Per-row loss, derivative and curvature in eta.
pub fn row_loss(family: LossFamily, eta: f64, y: f64) -> (f64, f64, f64) {
    match family {
        LossFamily::Linear => (0.5 * (y - eta).powi(2), eta - y, 1.0),
        LossFamily::Logistic => {
            let p = 1.0 / (1.0 + (-eta).exp());
            let sp = if eta > 0.0 {
                eta + (-eta).exp().ln_1p()
            } else {
                eta.exp().ln_1p()
            };
            (sp - y * eta, p - y, p * (1.0 - p))
        }
        LossFamily::Poisson => {
            let m = eta.exp();
            (m - y * eta, m - y, m)
        }
    }
}

pub fn objective(data: &Dataset, theta: &DVector<f64>) -> f64 {
    let eta = &data.x * theta;
    (0..data.n())
        .map(|i| row_loss(data.family, eta[i], data.y[i]).0)
        .sum()
}

/// `(X'X + 2 mu I)^-1 X'y`, the minimizer of `1/2 ||y - X theta||^2 + mu ||theta||^2`.
pub fn ridge_closed_form(data: &Dataset, mu: f64) -> Vec<f64> {
    let p = data.p();
    let a = data.x.transpose() * &data.x + DMatrix::identity(p, p) * (2.0 * mu);
    let rhs = data.x.transpose() * &data.y;
    a.lu().solve(&rhs).unwrap().iter().copied().collect()
}

/// Iteratively reweighted least squares for `sum l + mu ||theta||^2`.
pub fn irls(data: &Dataset, mu: f64) -> Vec<f64> {
    let (n, p) = (data.n(), data.p());
    let mut theta = DVector::zeros(p);
    for _ in 0..200 {
        let eta = &data.x * &theta;
        let mut w = DVector::zeros(n);
        let mut z = DVector::zeros(n);
        for i in 0..n {
            let (_, d1, d2) = row_loss(data.family, eta[i], data.y[i]);
            w[i] = d2;
            z[i] = eta[i] - d1 / d2;
        }
        let mut xtw = data.x.transpose();
        for i in 0..n {
            xtw.column_mut(i).scale_mut(w[i]);
        }
        let a = &xtw * &data.x + DMatrix::identity(p, p) * (2.0 * mu);
        let next = a.lu().solve(&(&xtw * z)).unwrap();
        let change = (&next - &theta).norm();
        theta = next;
        if change < 1e-13 * (1.0 + theta.norm()) {
            break;
        }
    }
    theta.iter().copied().collect()
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent on `1/2 sum_i w_i (z_i - x_i'theta)^2 + lambda ||theta||_1`,
/// starting from `theta`.
fn weighted_cd(
    x: &DMatrix<f64>,
    z: &DVector<f64>,
    w: &DVector<f64>,
    lambda: f64,
    theta: &mut DVector<f64>,
) {
    let (n, p) = x.shape();
    let col_w: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| w[i] * x[(i, j)] * x[(i, j)]).sum())
        .collect();
    let mut resid = z - x * &*theta;
    for _ in 0..10_000 {
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            let old = theta[j];
            let rho: f64 =
                (0..n).map(|i| w[i] * x[(i, j)] * resid[i]).sum::<f64>() + col_w[j] * old;
            let new = soft(rho, lambda) / col_w[j];
            if new != old {
                for i in 0..n {
                    resid[i] -= x[(i, j)] * (new - old);
                }
                theta[j] = new;
                max_delta = max_delta.max((new - old).abs());
            }
        }
        if max_delta < 1e-13 {
            break;
        }
    }
}

/// Lasso `sum l + lambda ||theta||_1` by proximal Newton: a weighted
/// least-squares model solved by coordinate descent, then a backtracking step.
pub fn cd_lasso(data: &Dataset, lambda: f64) -> Vec<f64> {
    let (n, p) = (data.n(), data.p());
    let pen = |t: &DVector<f64>| lambda * t.iter().map(|v| v.abs()).sum::<f64>();
    let mut theta = DVector::zeros(p);
    let mut f = objective(data, &theta) + pen(&theta);
    for _ in 0..200 {
        let eta = &data.x * &theta;
        let mut w = DVector::zeros(n);
        let mut z = DVector::zeros(n);
        for i in 0..n {
            let (_, d1, d2) = row_loss(data.family, eta[i], data.y[i]);
            let d2 = d2.max(1e-12);
            w[i] = d2;
            z[i] = eta[i] - d1 / d2;
        }
        let mut cand = theta.clone();
        weighted_cd(&data.x, &z, &w, lambda, &mut cand);
        let dir = &cand - &theta;
        let mut s = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let trial = &theta + &dir * s;
            let ft = objective(data, &trial) + pen(&trial);
            if ft <= f {
                let done = f - ft <= 1e-14 * f.abs().max(1.0);
                theta = trial;
                f = ft;
                moved = !done;
                break;
            }
            s *= 0.5;
        }
        if !moved {
            break;
        }
    }
    theta.iter().copied().collect()
}

/// Central-difference gradient of `f` at `x`.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    for j in 0..x.len() {
        let mut up = x.clone();
        let mut dn = x.clone();
        up[j] += h;
        dn[j] -= h;
        g[j] = (f(&up) - f(&dn)) / (2.0 * h);
    }
    g
}

/// One-sample Kolmogorov-Smirnov test; returns (D, asymptotic p-value).
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    (d, kolmogorov_p(d, n))
}

/// Two-sample Kolmogorov-Smirnov test; returns (D, asymptotic p-value).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    (d, kolmogorov_p(d, ne))
}

fn kolmogorov_p(d: f64, n: f64) -> f64 {
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

pub fn gamma_cdf(shape: f64, scale: f64) -> impl Fn(f64) -> f64 {
    let g = statrs::distribution::Gamma::new(shape, 1.0 / scale).unwrap();
    move |x| g.cdf(x)
}

pub fn normal_cdf(sd: f64) -> impl Fn(f64) -> f64 {
    let g = statrs::distribution::Normal::new(0.0, sd).unwrap();
    move |x| g.cdf(x)
}
