//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's numerical routines.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller, kept separate from the library's sampler.
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn white_noise(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| gaussian(&mut r)).collect()
}

/// AR recursion with `burn` discarded warm-up steps.
pub fn ar_path(phi: &[f64], sigma: f64, n: usize, seed: u64) -> Vec<f64> {
    let burn = 500;
    let mut r = rng(seed);
    let mut x: Vec<f64> = Vec::with_capacity(n + burn);
    for t in 0..n + burn {
        let mut v = sigma * gaussian(&mut r);
        for (j, f) in phi.iter().enumerate() {
            if t > j {
                v += f * x[t - j - 1];
            }
        }
        x.push(v);
    }
    x.split_off(burn)
}

/// Two AR segments joined so the second recursion continues from the first.
pub fn ar_splice(
    phi1: &[f64],
    phi2: &[f64],
    sigma: f64,
    n: usize,
    k: usize,
    seed: u64,
) -> Vec<f64> {
    let burn = 500;
    let mut r = rng(seed);
    let mut x: Vec<f64> = Vec::with_capacity(n + burn);
    for t in 0..n + burn {
        let phi = if t < burn + k { phi1 } else { phi2 };
        let mut v = sigma * gaussian(&mut r);
        for (j, f) in phi.iter().enumerate() {
            if t > j {
                v += f * x[t - j - 1];
            }
        }
        x.push(v);
    }
    x.split_off(burn)
}

pub fn naive_acv(x: &[f64], p: usize) -> Vec<f64> {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    (0..=p)
        .map(|k| {
            let mut s = 0.0;
            for t in 0..n - k {
                s += (x[t] - m) * (x[t + k] - m);
            }
            s / n as f64
        })
        .collect()
}

pub fn toeplitz(gamma: &[f64], p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| gamma[i.abs_diff(j)])
}

/// Dense Yule-Walker solve: returns `(phi, sigma2)`.
pub fn dense_yule_walker(gamma: &[f64], p: usize) -> (Vec<f64>, f64) {
    if p == 0 {
        return (Vec::new(), gamma[0]);
    }
    let a = toeplitz(gamma, p);
    let b = DVector::from_iterator(p, gamma[1..=p].iter().copied());
    let phi = a.lu().solve(&b).expect("non-singular Toeplitz system");
    let s2 = gamma[0] - phi.dot(&b);
    (phi.iter().copied().collect(), s2)
}

pub fn min_eigenvalue(gamma: &[f64], p: usize) -> f64 {
    let m = toeplitz(gamma, p + 1);
    m.symmetric_eigenvalues().min()
}

/// Residual sum of squares over `t in from..to` with an explicit double loop.
pub fn naive_sse(x: &[f64], phi: &[f64], from: usize, to: usize) -> f64 {
    let mut total = 0.0;
    for t in from..to {
        let mut pred = 0.0;
        for j in 0..phi.len() {
            pred += phi[j] * x[t - 1 - j];
        }
        total += (x[t] - pred) * (x[t] - pred);
    }
    total
}

/// Stage-1 loss refitted from scratch with dense solves.
pub fn naive_stage1(x: &[f64], k: usize, p1: usize, p2: usize) -> f64 {
    let n = x.len();
    let (phi1, _) = dense_yule_walker(&naive_acv(&x[..k], p1), p1);
    let (phi2, _) = dense_yule_walker(&naive_acv(&x[k..], p2), p2);
    naive_sse(x, &phi1, p1, k) + naive_sse(x, &phi2, k + p2, n)
}

/// Literal two-loop evaluation of the stage-2 criterion; returns the first
/// minimiser over `p+1..=T-1`.
pub fn brute_stage2(x: &[f64], phi1: &[f64], phi2: &[f64], p: usize) -> usize {
    let n = x.len();
    let mut best = (0, f64::INFINITY);
    for k in p + 1..n {
        let q = (naive_sse(x, phi1, p, k) + naive_sse(x, phi2, k, n)) / (n - p + 1) as f64;
        if q < best.1 {
            best = (k, q);
        }
    }
    best.0
}

pub fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let g = naive_acv(x, 1);
    g[1] / g[0]
}

/// Random coefficient vector whose AR polynomial has all roots outside the
/// unit circle, built from reflection coefficients in (-0.95, 0.95).
pub fn random_stationary_phi(p: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::new();
    for m in 0..p {
        let kappa: f64 = rng.random_range(-0.95..0.95);
        let prev = phi.clone();
        phi.push(kappa);
        for j in 0..m {
            phi[j] = prev[j] - kappa * prev[m - 1 - j];
        }
    }
    phi
}

/// Population autocovariances of a causal AR model, from the psi weights.
pub fn ar_gamma0(phi: &[f64], sigma2: f64) -> f64 {
    let mut psi = vec![1.0];
    let mut total = 1.0;
    for i in 1..20_000 {
        let mut v = 0.0;
        for (j, f) in phi.iter().enumerate() {
            if i > j {
                v += f * psi[i - j - 1];
            }
        }
        psi.push(v);
        total += v * v;
        if i > 200 && v.abs() < 1e-18 {
            break;
        }
    }
    sigma2 * total
}

/// Trapezoid rule for `f` sampled on an even grid over `[a, b]`.
pub fn trapezoid(values: &[f64], a: f64, b: f64) -> f64 {
    let h = (b - a) / (values.len() - 1) as f64;
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    h * (inner + 0.5 * (values[0] + values[values.len() - 1]))
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
