//! Confidence intervals for the change location.
//!
//! The scaled estimation error `(k_tilde - k*) / c` with
//! `c = sigma1*^2 / (sigma1^4 xi2^2)` is approximated by the argmax of the
//! two-sided drifted Brownian motion
//!
//! ```text
//! Z(r) = 2 W1(-r) + r                                      r < 0
//! Z(r) = (2 sigma2*/sigma1*) W2(r) - (sigma2^2/sigma1^2) r  r > 0
//! ```
//!
//! whose quantiles are tabulated by Monte Carlo on a grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ar::ArModel;
use crate::detection::DetectionResult;
use crate::error::{Error, Result};
use crate::series::TimeSeries;

pub const QUANTILE_SCHEMA_VERSION: u32 = 1;

/// Probabilities every table carries unless the caller asks for more.
pub const DEFAULT_PROBS: [f64; 11] = [
    0.005, 0.025, 0.05, 0.10, 0.15, 0.5, 0.85, 0.90, 0.95, 0.975, 0.995,
];

const PROB_MATCH_TOL: f64 = 1e-9;
const TRUNCATION_LIMIT: f64 = 0.01;

/// How the noise-interaction variances `sigma_j*^2` are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseInteraction {
    /// `xi2^-2 mean(e_t^2 (eta' Z_t)^2)`.
    #[default]
    Robust,
    /// `resid_var_j * sigma_j^2`, exact when innovations are independent of the past.
    Factorized,
}

/// Plug-in estimates of the quantities governing the limiting process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceEstimates {
    /// `phi_pre - phi_post` over the common lag.
    pub eta: Vec<f64>,
    pub xi2: f64,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub sigma1_star_sq: f64,
    pub sigma2_star_sq: f64,
    pub resid_var_pre: f64,
    pub resid_var_post: f64,
}

impl NuisanceEstimates {
    pub fn argmax_params(&self) -> ArgmaxParams {
        ArgmaxParams {
            sigma1: self.sigma1_sq.sqrt(),
            sigma2: self.sigma2_sq.sqrt(),
            sigma1_star: self.sigma1_star_sq.sqrt(),
            sigma2_star: self.sigma2_star_sq.sqrt(),
        }
    }

    /// Index units per unit of `r`: `sigma1*^2 / (sigma1^4 xi2^2)`.
    pub fn index_scale(&self) -> f64 {
        self.sigma1_star_sq / (self.sigma1_sq * self.sigma1_sq * self.xi2 * self.xi2)
    }
}

struct SegmentMoments {
    n: usize,
    proj_sq: f64,
    weighted: f64,
    resid_sq: f64,
}

fn segment_moments(
    x: &[f64],
    eta: &[f64],
    model: &ArModel,
    start: usize,
    end: usize,
) -> SegmentMoments {
    let p = eta.len();
    let mut m = SegmentMoments {
        n: 0,
        proj_sq: 0.0,
        weighted: 0.0,
        resid_sq: 0.0,
    };
    for t in start + p..end {
        let proj: f64 = eta.iter().enumerate().map(|(j, e)| e * x[t - j - 1]).sum();
        let r = model.residual_at(x, t);
        m.n += 1;
        m.proj_sq += proj * proj;
        m.weighted += r * r * proj * proj;
        m.resid_sq += r * r;
    }
    m
}

/// Robust plug-in nuisance estimates at split `k_tilde`.
pub fn nuisance_estimates(
    x: &TimeSeries,
    k_tilde: usize,
    model_pre: &ArModel,
    model_post: &ArModel,
    p_common: usize,
) -> Result<NuisanceEstimates> {
    nuisance_estimates_with(
        x,
        k_tilde,
        model_pre,
        model_post,
        p_common,
        NoiseInteraction::Robust,
    )
}

pub fn nuisance_estimates_with(
    x: &TimeSeries,
    k_tilde: usize,
    model_pre: &ArModel,
    model_post: &ArModel,
    p_common: usize,
    mode: NoiseInteraction,
) -> Result<NuisanceEstimates> {
    let x = x.values();
    let t_len = x.len();
    let p = p_common;
    if model_pre.order() > p || model_post.order() > p {
        return Err(Error::InvalidInput(format!(
            "model orders ({}, {}) exceed common lag {p}",
            model_pre.order(),
            model_post.order()
        )));
    }
    let pre = model_pre.padded(p);
    let post = model_post.padded(p);
    let eta: Vec<f64> = pre.phi.iter().zip(&post.phi).map(|(a, b)| a - b).collect();
    let xi2 = eta.iter().map(|e| e * e).sum::<f64>().sqrt();
    if !(xi2 > 0.0) {
        return Err(Error::NoJump);
    }
    if k_tilde < p + 2 || t_len < k_tilde + p + 2 {
        return Err(Error::InvalidInput(format!(
            "split {k_tilde} leaves a segment shorter than p + 2 = {}",
            p + 2
        )));
    }
    let xi_sq = xi2 * xi2;
    let m1 = segment_moments(x, &eta, &pre, 0, k_tilde);
    let m2 = segment_moments(x, &eta, &post, k_tilde, t_len);
    let (n1, n2) = (m1.n as f64, m2.n as f64);
    let sigma1_sq = m1.proj_sq / n1 / xi_sq;
    let sigma2_sq = m2.proj_sq / n2 / xi_sq;
    let resid_var_pre = m1.resid_sq / n1;
    let resid_var_post = m2.resid_sq / n2;
    let (sigma1_star_sq, sigma2_star_sq) = match mode {
        NoiseInteraction::Robust => (m1.weighted / n1 / xi_sq, m2.weighted / n2 / xi_sq),
        NoiseInteraction::Factorized => (resid_var_pre * sigma1_sq, resid_var_post * sigma2_sq),
    };
    Ok(NuisanceEstimates {
        eta,
        xi2,
        sigma1_sq,
        sigma2_sq,
        sigma1_star_sq,
        sigma2_star_sq,
        resid_var_pre,
        resid_var_post,
    })
}

/// Standard deviations `(sigma1, sigma2, sigma1*, sigma2*)` of the limiting process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArgmaxParams {
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma1_star: f64,
    pub sigma2_star: f64,
}

impl ArgmaxParams {
    pub fn symmetric() -> Self {
        Self {
            sigma1: 1.0,
            sigma2: 1.0,
            sigma1_star: 1.0,
            sigma2_star: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.sigma1, self.sigma2, self.sigma1_star, self.sigma2_star];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "all four scale parameters must be finite and > 0, got {all:?}"
            )))
        }
    }
}

/// Grid and replication settings for the argmax simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    /// Grid half-width `R`.
    pub half_width: f64,
    /// Grid step `delta`.
    pub step: f64,
    /// Number of simulated paths `M`.
    pub reps: usize,
    pub seed: u64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            half_width: 200.0,
            step: 0.05,
            reps: 50_000,
            seed: 0,
        }
    }
}

impl McSettings {
    pub fn validate(&self) -> Result<()> {
        let r = self.half_width;
        let d = self.step;
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidParams(format!(
                "grid half-width must be > 0, got {r}"
            )));
        }
        if !(d > 0.0 && d <= r / 100.0) {
            return Err(Error::InvalidParams(format!(
                "grid step must lie in (0, R/100] = (0, {}], got {d}",
                r / 100.0
            )));
        }
        if self.reps < 1000 {
            return Err(Error::InvalidParams(format!(
                "need at least 1000 replications, got {}",
                self.reps
            )));
        }
        Ok(())
    }

    fn grid_steps(&self) -> usize {
        (self.half_width / self.step).round() as usize
    }
}

/// Empirical quantiles of `argmax_r Z(r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub schema_version: u32,
    pub params: ArgmaxParams,
    pub settings: McSettings,
    pub probs: Vec<f64>,
    pub quants: Vec<f64>,
    /// Fraction of paths whose argmax landed on the grid edge.
    pub truncation_fraction: f64,
    /// Set when more than 1% of paths were truncated (grid too small).
    pub truncation_warning: bool,
}

impl QuantileTable {
    /// Quantile for `prob`, which must be one of the tabulated probabilities.
    pub fn quantile(&self, prob: f64) -> Result<f64> {
        self.probs
            .iter()
            .position(|p| (p - prob).abs() <= PROB_MATCH_TOL)
            .map(|i| self.quants[i])
            .ok_or(Error::TableIncomplete { prob })
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let table: Self =
            serde_json::from_str(s).map_err(|e| Error::InvalidInput(e.to_string()))?;
        if table.schema_version != QUANTILE_SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported quantile table schema version {}",
                table.schema_version
            )));
        }
        if table.probs.len() != table.quants.len() {
            return Err(Error::InvalidInput(
                "probs and quants differ in length".into(),
            ));
        }
        Ok(table)
    }
}

/// Default probabilities plus both tails of each requested level.
pub fn probs_for_levels(levels: &[f64]) -> Vec<f64> {
    let mut probs: Vec<f64> = DEFAULT_PROBS.to_vec();
    for &l in levels {
        probs.push((1.0 - l) / 2.0);
        probs.push((1.0 + l) / 2.0);
    }
    normalize_probs(probs)
}

fn normalize_probs(mut probs: Vec<f64>) -> Vec<f64> {
    probs.sort_by(|a, b| a.total_cmp(b));
    probs.dedup_by(|a, b| (*a - *b).abs() <= PROB_MATCH_TOL);
    probs
}

/// A drifted Brownian motion `s W(r) - m r` that is `gap` below its running
/// maximum ever climbs back with probability `exp(-2 m gap / s^2)`. Each
/// side of a path stops once that bound drops below `exp(-STOP_LOG_PROB)`.
const STOP_LOG_PROB: f64 = 30.0;

/// Running maximum of `scale * W(r) - drift * r` over the positive grid, as
/// `(max, grid index)`; index 0 is `r = 0`.
fn one_sided_max(
    rng: &mut ChaCha8Rng,
    steps: usize,
    step: f64,
    scale: f64,
    drift: f64,
) -> (f64, usize) {
    let sd = scale * step.sqrt();
    let inc = drift * step;
    let stop_gap = STOP_LOG_PROB * scale * scale / (2.0 * drift);
    let (mut best, mut at) = (0.0f64, 0usize);
    let mut v = 0.0;
    for i in 1..=steps {
        let z: f64 = rng.sample(StandardNormal);
        v += sd * z - inc;
        if v > best {
            best = v;
            at = i;
        } else if best - v > stop_gap {
            break;
        }
    }
    (best, at)
}

/// Argmax of one simulated path as `(grid index, truncated)`. Negative
/// indices are on the `r < 0` side.
fn simulate_path(
    rng: &mut ChaCha8Rng,
    steps: usize,
    step: f64,
    right_scale: f64,
    right_drift: f64,
) -> (i64, bool) {
    let (best_left, at_left) = one_sided_max(rng, steps, step, 2.0, 1.0);
    let (best_right, at_right) = one_sided_max(rng, steps, step, right_scale, right_drift);
    // Ties go to the smaller |r|, then to the negative side.
    let left_wins = best_left > best_right || (best_left == best_right && at_left <= at_right);
    if left_wins {
        (-(at_left as i64), at_left == steps)
    } else {
        (at_right as i64, at_right == steps)
    }
}

/// Type-7 (linear interpolation) empirical quantile of sorted data.
pub(crate) fn empirical_quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Monte Carlo quantiles of `argmax_r Z(r)` on the grid
/// `{-R, ..., -delta, 0, delta, ..., R}`.
///
/// Path `i` draws from its own ChaCha stream `(seed, i)`, so the table does
/// not depend on how paths are scheduled across threads.
pub fn simulate_argmax_quantiles(
    params: ArgmaxParams,
    settings: McSettings,
    probs: &[f64],
) -> Result<QuantileTable> {
    params.validate()?;
    settings.validate()?;
    if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::InvalidParams(format!(
            "probability {p} outside (0, 1)"
        )));
    }
    let probs = if probs.is_empty() {
        DEFAULT_PROBS.to_vec()
    } else {
        normalize_probs(probs.to_vec())
    };
    let steps = settings.grid_steps();
    let step = settings.step;
    let right_scale = 2.0 * params.sigma2_star / params.sigma1_star;
    let right_drift = (params.sigma2 * params.sigma2) / (params.sigma1 * params.sigma1);
    let draws: Vec<(i64, bool)> = (0..settings.reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
            rng.set_stream(i as u64);
            simulate_path(&mut rng, steps, step, right_scale, right_drift)
        })
        .collect();
    let truncated = draws.iter().filter(|(_, t)| *t).count();
    let mut locs: Vec<f64> = draws.iter().map(|(i, _)| *i as f64 * step).collect();
    locs.sort_by(|a, b| a.total_cmp(b));
    let quants = probs
        .iter()
        .map(|p| empirical_quantile(&locs, *p))
        .collect();
    let truncation_fraction = truncated as f64 / settings.reps as f64;
    Ok(QuantileTable {
        schema_version: QUANTILE_SCHEMA_VERSION,
        params,
        settings,
        probs,
        quants,
        truncation_fraction,
        truncation_warning: truncation_fraction > TRUNCATION_LIMIT,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub level: f64,
    /// 1-based inclusive bounds on the change index.
    pub lower: usize,
    pub upper: usize,
    /// Index units per unit of `r`.
    pub scale_c: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, k: usize) -> bool {
        self.lower <= k && k <= self.upper
    }

    pub fn length(&self) -> usize {
        self.upper - self.lower
    }
}

/// Interval `[k - c q_{(1+level)/2}, k - c q_{(1-level)/2}]`, rounded
/// outward, clipped to `[1, T]` and widened if needed to contain `k_tilde`.
pub fn confidence_interval(
    k_tilde: usize,
    t_len: usize,
    nuis: &NuisanceEstimates,
    table: &QuantileTable,
    level: f64,
) -> Result<ConfidenceInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "level {level} outside (0, 1)"
        )));
    }
    if !(nuis.xi2 > 0.0) {
        return Err(Error::NoJump);
    }
    let c = nuis.index_scale();
    if !c.is_finite() {
        return Err(Error::InvalidParams(format!(
            "index scale is not finite (sigma1^2 = {})",
            nuis.sigma1_sq
        )));
    }
    let q_hi = table.quantile((1.0 + level) / 2.0)?;
    let q_lo = table.quantile((1.0 - level) / 2.0)?;
    let k = k_tilde as f64;
    let t_max = t_len.max(1) as f64;
    let lower = (k - c * q_hi).floor().clamp(1.0, t_max) as usize;
    let upper = (k - c * q_lo).ceil().clamp(1.0, t_max) as usize;
    Ok(ConfidenceInterval {
        level,
        lower: lower.min(k_tilde.max(1)),
        upper: upper.max(k_tilde.min(t_len)),
        scale_c: c,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceSettings {
    pub levels: Vec<f64>,
    pub mc: McSettings,
    pub noise: NoiseInteraction,
}

impl Default for InferenceSettings {
    fn default() -> Self {
        Self {
            levels: vec![0.90, 0.95, 0.99],
            mc: McSettings::default(),
            noise: NoiseInteraction::Robust,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub nuisance: NuisanceEstimates,
    pub table: QuantileTable,
    pub intervals: Vec<ConfidenceInterval>,
}

/// Nuisance estimates, quantile table and one interval per level for a
/// finished detection run on `x`.
pub fn infer(
    x: &TimeSeries,
    result: &DetectionResult,
    settings: &InferenceSettings,
) -> Result<Inference> {
    let prepared;
    let x = if result.demeaned && !x.is_demeaned() {
        prepared = x.demeaned();
        &prepared
    } else {
        x
    };
    let nuisance = nuisance_estimates_with(
        x,
        result.k_tilde,
        &result.model_pre,
        &result.model_post,
        result.p_common,
        settings.noise,
    )?;
    let table = simulate_argmax_quantiles(
        nuisance.argmax_params(),
        settings.mc,
        &probs_for_levels(&settings.levels),
    )?;
    let intervals = settings
        .levels
        .iter()
        .map(|&l| confidence_interval(result.k_tilde, result.t_len, &nuisance, &table, l))
        .collect::<Result<_>>()?;
    Ok(Inference {
        nuisance,
        table,
        intervals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_with(probs: Vec<f64>, quants: Vec<f64>) -> QuantileTable {
        QuantileTable {
            schema_version: QUANTILE_SCHEMA_VERSION,
            params: ArgmaxParams::symmetric(),
            settings: McSettings::default(),
            probs,
            quants,
            truncation_fraction: 0.0,
            truncation_warning: false,
        }
    }

    fn nuis(xi2: f64, s1: f64, s1star: f64) -> NuisanceEstimates {
        NuisanceEstimates {
            eta: vec![xi2],
            xi2,
            sigma1_sq: s1,
            sigma2_sq: s1,
            sigma1_star_sq: s1star,
            sigma2_star_sq: s1star,
            resid_var_pre: 1.0,
            resid_var_post: 1.0,
        }
    }

    #[test]
    fn symmetric_quantiles_give_symmetric_interval() {
        let t = table_with(vec![0.025, 0.975], vec![-8.0, 8.0]);
        // c = 1 / (1 * 0.25) = 4 -> half width 32.
        let ci = confidence_interval(250, 500, &nuis(0.5, 1.0, 1.0), &t, 0.95).unwrap();
        assert_eq!((ci.lower, ci.upper), (218, 282));
        assert_eq!(ci.scale_c, 4.0);
    }

    #[test]
    fn huge_jump_collapses_interval() {
        let t = table_with(vec![0.025, 0.975], vec![-8.0, 8.0]);
        let ci = confidence_interval(250, 500, &nuis(1e9, 1.0, 1.0), &t, 0.95).unwrap();
        assert_eq!((ci.lower, ci.upper), (250, 250));
    }

    #[test]
    fn interval_is_clipped_to_series() {
        let t = table_with(vec![0.05, 0.95], vec![-100.0, 100.0]);
        let ci = confidence_interval(10, 40, &nuis(0.5, 1.0, 1.0), &t, 0.90).unwrap();
        assert_eq!((ci.lower, ci.upper), (1, 40));
    }

    #[test]
    fn missing_probability_is_reported() {
        let t = table_with(vec![0.05, 0.95], vec![-1.0, 1.0]);
        assert_eq!(
            confidence_interval(10, 40, &nuis(0.5, 1.0, 1.0), &t, 0.99),
            Err(Error::TableIncomplete { prob: 0.995 })
        );
    }

    #[test]
    fn settings_validation() {
        let base = McSettings::default();
        assert!(base.validate().is_ok());
        assert!(McSettings { step: 3.0, ..base }.validate().is_err());
        assert!(McSettings { reps: 10, ..base }.validate().is_err());
        assert!(McSettings {
            half_width: 0.0,
            ..base
        }
        .validate()
        .is_err());
        let bad = ArgmaxParams {
            sigma1: 0.0,
            ..ArgmaxParams::symmetric()
        };
        assert!(matches!(
            simulate_argmax_quantiles(bad, base, &[]),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn probs_for_levels_include_tails() {
        let p = probs_for_levels(&[0.8, 0.95]);
        assert!(p.iter().any(|v| (v - 0.1).abs() < 1e-12));
        assert!(p.iter().any(|v| (v - 0.975).abs() < 1e-12));
        assert!(p.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn quantile_interpolation() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(empirical_quantile(&xs, 0.5), 1.5);
        assert_eq!(empirical_quantile(&xs, 0.0), 0.0);
        assert_eq!(empirical_quantile(&xs, 1.0), 3.0);
    }

    #[test]
    fn table_json_round_trip() {
        let t = table_with(vec![0.05, 0.95], vec![-1.5, 2.25]);
        let back = QuantileTable::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
        let bumped = t
            .to_json()
            .unwrap()
            .replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(QuantileTable::from_json(&bumped).is_err());
    }
}
