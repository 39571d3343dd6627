//! Autoregressive building blocks: biased sample autocovariances,
//! Yule-Walker fits through the Levinson-Durbin recursion, AIC order
//! selection, AR spectral densities and regression residuals.

use std::f64::consts::PI;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::mean;

/// Sample autocovariances `gamma[0..=p]` of one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocovarianceVector {
    pub gamma: Vec<f64>,
    pub segment_len: usize,
}

impl AutocovarianceVector {
    pub fn max_lag(&self) -> usize {
        self.gamma.len().saturating_sub(1)
    }
}

/// A fitted AR(p) model `X_t = phi_1 X_{t-1} + ... + phi_p X_{t-p} + e_t`
/// with innovation variance `sigma2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub phi: Vec<f64>,
    pub sigma2: f64,
}

impl ArModel {
    pub fn new(phi: Vec<f64>, sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidInput(format!(
                "innovation variance must be finite and >= 0, got {sigma2}"
            )));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite AR coefficient".into()));
        }
        Ok(Self { phi, sigma2 })
    }

    pub fn white_noise(sigma2: f64) -> Result<Self> {
        Self::new(Vec::new(), sigma2)
    }

    /// Lag order.
    pub fn order(&self) -> usize {
        self.phi.len()
    }

    /// Coefficients zero-padded to `p` lags. `p` must be at least the order.
    pub fn padded(&self, p: usize) -> Self {
        assert!(
            p >= self.order(),
            "cannot pad order {} down to {p}",
            self.order()
        );
        let mut phi = self.phi.clone();
        phi.resize(p, 0.0);
        Self {
            phi,
            sigma2: self.sigma2,
        }
    }

    /// One-step prediction error `x[t] - sum_j phi_j x[t-j]`. Requires `t >= p`.
    #[inline]
    pub fn residual_at(&self, x: &[f64], t: usize) -> f64 {
        let mut pred = 0.0;
        for (j, phi) in self.phi.iter().enumerate() {
            pred += phi * x[t - j - 1];
        }
        x[t] - pred
    }
}

/// Biased sample autocovariances of `x` for lags `0..=max_lag`.
///
/// The segment is centred by its own mean and every lag is divided by the
/// full segment length, so the implied Toeplitz matrix is positive
/// semidefinite.
pub fn sample_autocovariance(x: &[f64], max_lag: usize) -> Result<AutocovarianceVector> {
    let n = x.len();
    if n < max_lag + 2 {
        return Err(Error::OrderTooLarge {
            order: max_lag,
            len: n,
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in segment".into()));
    }
    let m = mean(x);
    let centred: Vec<f64> = x.iter().map(|v| v - m).collect();
    let gamma = (0..=max_lag)
        .map(|k| {
            centred[..n - k]
                .iter()
                .zip(&centred[k..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect();
    Ok(AutocovarianceVector {
        gamma,
        segment_len: n,
    })
}

/// Output of the Levinson-Durbin recursion run up to some order.
#[derive(Debug, Clone)]
pub(crate) struct LevinsonPath {
    /// Coefficients of the highest order reached.
    pub phi: Vec<f64>,
    /// Innovation variance for every order `0..=reached`.
    pub sigma2: Vec<f64>,
    /// Set when the recursion stopped early on a non-admissible reflection coefficient.
    pub failure: Option<(usize, f64)>,
}

pub(crate) fn levinson_durbin(gamma: &[f64], p: usize) -> Result<LevinsonPath> {
    let g0 = gamma[0];
    if !(g0 > 0.0) {
        return Err(Error::DegenerateSeries { gamma0: g0 });
    }
    let mut phi: Vec<f64> = Vec::with_capacity(p);
    let mut sigma2 = Vec::with_capacity(p + 1);
    let mut err = g0;
    sigma2.push(err);
    let mut scratch = Vec::with_capacity(p);
    for m in 1..=p {
        let acc = gamma[m]
            - phi
                .iter()
                .enumerate()
                .map(|(j, f)| f * gamma[m - j - 1])
                .sum::<f64>();
        let kappa = acc / err;
        if !(kappa.abs() < 1.0) {
            return Ok(LevinsonPath {
                phi,
                sigma2,
                failure: Some((m, kappa)),
            });
        }
        scratch.clear();
        scratch.extend((0..m - 1).map(|j| phi[j] - kappa * phi[m - 2 - j]));
        scratch.push(kappa);
        std::mem::swap(&mut phi, &mut scratch);
        err *= 1.0 - kappa * kappa;
        sigma2.push(err);
    }
    Ok(LevinsonPath {
        phi,
        sigma2,
        failure: None,
    })
}

/// Solves the order-`p` Yule-Walker equations by Levinson-Durbin.
///
/// `sigma2` is the final prediction-error variance of the recursion, which
/// equals `gamma_0 - phi' gamma(1:p)`.
pub fn yule_walker(acv: &AutocovarianceVector, p: usize) -> Result<ArModel> {
    if acv.gamma.len() < p + 1 {
        return Err(Error::InvalidInput(format!(
            "autocovariance has lags 0..={} but order {p} was requested",
            acv.max_lag()
        )));
    }
    let path = levinson_durbin(&acv.gamma, p)?;
    if let Some((order, kappa)) = path.failure {
        return Err(Error::SingularSystem { order, kappa });
    }
    Ok(ArModel {
        phi: path.phi,
        sigma2: path.sigma2[p],
    })
}

/// Default cap on the AR order for a segment of length `n`:
/// `min(floor(10 log10 n), floor(n / 10))`.
pub fn default_max_lag(n: usize) -> usize {
    if n < 2 {
        return 0;
    }
    let by_log = (10.0 * (n as f64).log10()).floor() as usize;
    by_log.min(n / 10)
}

/// AIC value per candidate order; `None` marks orders that were skipped
/// because the fit was infeasible (non-positive variance or a
/// non-admissible reflection coefficient).
#[derive(Debug, Clone, PartialEq)]
pub struct AicTable {
    pub criteria: Vec<Option<f64>>,
}

impl AicTable {
    /// Order with the smallest criterion, ties to the smaller order.
    pub fn best(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (p, c) in self.criteria.iter().enumerate() {
            if let Some(c) = *c {
                if best.is_none_or(|(_, b)| c < b) {
                    best = Some((p, c));
                }
            }
        }
        best.map(|(p, _)| p)
    }

    pub fn skipped(&self) -> impl Iterator<Item = usize> + '_ {
        self.criteria
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_none())
            .map(|(p, _)| p)
    }
}

/// `n ln(sigma2_p) + 2p` for every `p` in `0..=p_max`.
pub fn aic_table(x: &[f64], p_max: usize) -> Result<AicTable> {
    let acv = sample_autocovariance(x, p_max)?;
    let path = levinson_durbin(&acv.gamma, p_max)?;
    let n = x.len() as f64;
    let criteria = (0..=p_max)
        .map(|p| {
            path.sigma2
                .get(p)
                .filter(|s| **s > 0.0)
                .map(|s| n * s.ln() + 2.0 * p as f64)
        })
        .collect();
    Ok(AicTable { criteria })
}

/// AIC-selected lag order in `0..=p_max`.
pub fn select_lag_aic(x: &[f64], p_max: usize) -> Result<usize> {
    let table = aic_table(x, p_max)?;
    // Order 0 always has a positive variance here because gamma_0 > 0.
    Ok(table.best().unwrap_or(0))
}

/// Evaluates `sigma2 / (2 pi |1 - sum_j phi_j e^{-i j lambda}|^2)` at each
/// frequency.
pub fn ar_spectral_density(model: &ArModel, lambdas: &[f64]) -> Result<Vec<f64>> {
    let tol = f64::EPSILON * (1.0 + model.phi.iter().map(|p| p.abs()).sum::<f64>());
    lambdas
        .iter()
        .map(|&lambda| {
            let mut re = 1.0;
            let mut im = 0.0;
            for (j, phi) in model.phi.iter().enumerate() {
                let arg = (j + 1) as f64 * lambda;
                re -= phi * arg.cos();
                im += phi * arg.sin();
            }
            let mag2 = re * re + im * im;
            if mag2.sqrt() <= tol {
                return Err(Error::SpectralPole { lambda });
            }
            Ok(model.sigma2 / (2.0 * PI * mag2))
        })
        .collect()
}

/// Residuals `x[t] - phi' (x[t-1], ..., x[t-p])` for `t` in `range`
/// (0-based, half-open).
pub fn residuals(x: &[f64], model: &ArModel, range: Range<usize>) -> Result<Vec<f64>> {
    let p = model.order();
    if range.start < p {
        return Err(Error::InsufficientHistory {
            start: range.start,
            order: p,
        });
    }
    if range.end > x.len() || range.start > range.end {
        return Err(Error::InvalidInput(format!(
            "range {range:?} outside series of length {}",
            x.len()
        )));
    }
    Ok(range.map(|t| model.residual_at(x, t)).collect())
}

/// Evenly spaced frequencies from 0 to pi inclusive.
pub fn frequency_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let last = points - 1;
            (0..points)
                .map(|i| {
                    if i == last {
                        PI
                    } else {
                        PI * i as f64 / last as f64
                    }
                })
                .collect()
        }
    }
}
