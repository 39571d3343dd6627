//! Two-stage single change point estimator.
//!
//! Stage 1 sweeps candidate split points `k` (number of pre-change
//! observations), fits an AR model to each side by Yule-Walker and keeps
//! the split minimising the two-segment residual sum of squares. Stage 2
//! refits both models at that split, freezes them, and re-optimises the
//! split over every admissible index with a single cumulative pass.

use serde::{Deserialize, Serialize};

use crate::ar::{
    default_max_lag, residuals, sample_autocovariance, select_lag_aic, yule_walker, ArModel,
    AutocovarianceVector,
};
use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// How the AR order of each segment is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagMode {
    Fixed(usize),
    /// AIC over `0..=p_max`; `None` uses [`default_max_lag`] of half the series.
    Aic {
        p_max: Option<usize>,
    },
}

impl Default for LagMode {
    fn default() -> Self {
        LagMode::Aic { p_max: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub lag_mode: LagMode,
    /// Smallest admissible segment length; `None` means `max(2 * p_max, 20)`.
    pub min_segment: Option<usize>,
    pub sweep_stride: usize,
    /// Subtract the global mean before anything else.
    pub demean: bool,
    /// Re-select lags by AIC on the two segments at the stage-1 estimate.
    pub refit_lags: bool,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            lag_mode: LagMode::default(),
            min_segment: None,
            sweep_stride: 1,
            demean: false,
            refit_lags: true,
        }
    }
}

impl DetectionConfig {
    pub fn fixed(p: usize) -> Self {
        Self {
            lag_mode: LagMode::Fixed(p),
            ..Self::default()
        }
    }

    /// Largest lag the configuration can fit on a series of length `t_len`.
    pub fn max_lag(&self, t_len: usize) -> usize {
        match self.lag_mode {
            LagMode::Fixed(p) => p,
            LagMode::Aic { p_max } => p_max.unwrap_or_else(|| default_max_lag(t_len / 2)),
        }
    }

    /// Validates the configuration against a series length and fills in defaults.
    pub fn resolve(&self, t_len: usize) -> Result<ResolvedConfig> {
        if self.sweep_stride == 0 {
            return Err(Error::InvalidConfig("sweep_stride must be >= 1".into()));
        }
        let p_max = self.max_lag(t_len);
        let min_segment = self.min_segment.unwrap_or((2 * p_max).max(20));
        if t_len < 2 * min_segment {
            return Err(Error::SeriesTooShort {
                len: t_len,
                required: 2 * min_segment,
            });
        }
        let floor = (p_max + 2).max(10);
        if min_segment < floor {
            return Err(Error::InvalidConfig(format!(
                "min_segment {min_segment} is below max(p_max + 2, 10) = {floor}"
            )));
        }
        Ok(ResolvedConfig {
            p_max,
            min_segment,
            stride: self.sweep_stride,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub p_max: usize,
    pub min_segment: usize,
    pub stride: usize,
}

/// Lag orders used on each side of a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentLags {
    pub pre: usize,
    pub post: usize,
}

impl SegmentLags {
    pub fn common(&self) -> usize {
        self.pre.max(self.post)
    }
}

/// Stage-1 loss at one split together with the two fitted models.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitFit {
    pub loss: f64,
    pub model_pre: ArModel,
    pub model_post: ArModel,
}

/// Models refitted at a split, padded to a common lag for stage 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refit {
    pub model_pre: ArModel,
    pub model_post: ArModel,
    pub lags: SegmentLags,
    pub p_common: usize,
}

impl Refit {
    pub fn padded_pre(&self) -> ArModel {
        self.model_pre.padded(self.p_common)
    }

    pub fn padded_post(&self) -> ArModel {
        self.model_post.padded(self.p_common)
    }
}

/// Stage-2 argmin and the full `Q(k)` curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearOptimalEstimate {
    pub k_hat: usize,
    /// Lags held fixed during the sweep.
    pub lags: SegmentLags,
    pub curve: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalEstimate {
    pub k_tilde: usize,
    pub curve: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub t_len: usize,
    /// Stage-1 (near-optimal) estimate: number of observations before the change.
    pub k_hat: usize,
    /// Stage-2 (refitted least squares) estimate.
    pub k_tilde: usize,
    pub stage1_lags: SegmentLags,
    /// Models refitted at `k_hat`, at their own orders.
    pub model_pre: ArModel,
    pub model_post: ArModel,
    pub refit_lags: SegmentLags,
    pub p_common: usize,
    pub min_segment: usize,
    pub demeaned: bool,
    pub loss_curve_stage1: Vec<(usize, f64)>,
    pub loss_curve_stage2: Vec<(usize, f64)>,
}

impl DetectionResult {
    pub fn padded_pre(&self) -> ArModel {
        self.model_pre.padded(self.p_common)
    }

    pub fn padded_post(&self) -> ArModel {
        self.model_post.padded(self.p_common)
    }
}

fn prepared(x: &TimeSeries, config: &DetectionConfig) -> TimeSeries {
    if config.demean && !x.is_demeaned() {
        x.demeaned()
    } else {
        x.clone()
    }
}

/// Stage-1 lags: fixed, or AIC-selected once on each half of the series.
pub fn stage1_lags(x: &TimeSeries, config: &DetectionConfig) -> Result<SegmentLags> {
    let x = prepared(x, config);
    let resolved = config.resolve(x.len())?;
    lags_on_halves(x.values(), config.lag_mode, resolved.p_max)
}

fn lags_on_halves(x: &[f64], mode: LagMode, p_max: usize) -> Result<SegmentLags> {
    match mode {
        LagMode::Fixed(p) => Ok(SegmentLags { pre: p, post: p }),
        LagMode::Aic { .. } => {
            let half = x.len() / 2;
            let (a, b) = x.split_at(half);
            Ok(SegmentLags {
                pre: select_lag_aic(a, p_max).map_err(|e| segment_error(e, 0, half))?,
                post: select_lag_aic(b, p_max).map_err(|e| segment_error(e, half, x.len()))?,
            })
        }
    }
}

fn segment_error(e: Error, start: usize, end: usize) -> Error {
    match e {
        Error::DegenerateSeries { .. } => Error::DegenerateSegment { start, end },
        other => other,
    }
}

fn fit_segment(x: &[f64], start: usize, end: usize, p: usize) -> Result<ArModel> {
    let acv = sample_autocovariance(&x[start..end], p)?;
    yule_walker(&acv, p).map_err(|e| segment_error(e, start, end))
}

fn sse(x: &[f64], model: &ArModel, start: usize, end: usize) -> Result<f64> {
    let from = start + model.order();
    Ok(residuals(x, model, from..end)?.iter().map(|r| r * r).sum())
}

fn check_split(t_len: usize, k: usize, min_segment: usize) -> Result<()> {
    if k < min_segment || k + min_segment > t_len {
        return Err(Error::InvalidInput(format!(
            "split {k} outside admissible range [{min_segment}, {}]",
            t_len.saturating_sub(min_segment)
        )));
    }
    Ok(())
}

/// Stage-1 loss at split `k`, computed directly from the two segments.
///
/// Each side's residual sum starts `p` observations into the segment so
/// that regressors never straddle the split.
pub fn stage1_loss(x: &TimeSeries, k: usize, config: &DetectionConfig) -> Result<SplitFit> {
    let x = prepared(x, config);
    let resolved = config.resolve(x.len())?;
    check_split(x.len(), k, resolved.min_segment)?;
    let lags = lags_on_halves(x.values(), config.lag_mode, resolved.p_max)?;
    split_fit(x.values(), k, lags)
}

fn split_fit(x: &[f64], k: usize, lags: SegmentLags) -> Result<SplitFit> {
    let t_len = x.len();
    let model_pre = fit_segment(x, 0, k, lags.pre)?;
    let model_post = fit_segment(x, k, t_len, lags.post)?;
    let loss = sse(x, &model_pre, 0, k)? + sse(x, &model_post, k, t_len)?;
    Ok(SplitFit {
        loss,
        model_pre,
        model_post,
    })
}

/// Running sums that give any segment's autocovariances and residual sum of
/// squares in `O(p^2)` time.
struct PrefixStats {
    /// Prefix sums of the globally centred series (for autocovariances).
    centred_sum: Vec<f64>,
    /// `centred_lag[j][t] = sum_{u < t} c_u c_{u+j}`.
    centred_lag: Vec<Vec<f64>>,
    /// Same lag products on the raw values (for residual sums).
    raw_lag: Vec<Vec<f64>>,
}

impl PrefixStats {
    fn new(x: &[f64], max_lag: usize) -> Self {
        let n = x.len();
        let m = x.iter().sum::<f64>() / n as f64;
        let c: Vec<f64> = x.iter().map(|v| v - m).collect();
        let mut centred_sum = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        centred_sum.push(0.0);
        for v in &c {
            acc += v;
            centred_sum.push(acc);
        }
        let lag_prefix = |v: &[f64], j: usize| {
            let mut out = Vec::with_capacity(n - j + 1);
            let mut acc = 0.0;
            out.push(0.0);
            for u in 0..n - j {
                acc += v[u] * v[u + j];
                out.push(acc);
            }
            out
        };
        let lags = max_lag.min(n - 1);
        Self {
            centred_sum,
            centred_lag: (0..=lags).map(|j| lag_prefix(&c, j)).collect(),
            raw_lag: (0..=lags).map(|j| lag_prefix(x, j)).collect(),
        }
    }

    fn autocovariance(&self, start: usize, end: usize, p: usize) -> AutocovarianceVector {
        let n = end - start;
        let nf = n as f64;
        let s = &self.centred_sum;
        let m = (s[end] - s[start]) / nf;
        let gamma = (0..=p)
            .map(|j| {
                let cross = self.centred_lag[j][end - j] - self.centred_lag[j][start];
                let head = s[end - j] - s[start];
                let tail = s[end] - s[start + j];
                (cross - m * (head + tail) + (n - j) as f64 * m * m) / nf
            })
            .collect();
        AutocovarianceVector {
            gamma,
            segment_len: n,
        }
    }

    /// `sum_{u=lo}^{hi-1} x_u x_{u+d}` on raw values.
    #[inline]
    fn raw(&self, d: usize, lo: usize, hi: usize) -> f64 {
        self.raw_lag[d][hi] - self.raw_lag[d][lo]
    }

    /// Residual sum of squares of `model` over `t` in `[start + p, end)`.
    fn sse(&self, model: &ArModel, start: usize, end: usize) -> f64 {
        let p = model.order();
        let from = start + p;
        if from >= end {
            return 0.0;
        }
        let phi = &model.phi;
        let mut total = self.raw(0, from, end);
        for i in 1..=p {
            total -= 2.0 * phi[i - 1] * self.raw(i, from - i, end - i);
        }
        for i in 1..=p {
            for l in i..=p {
                let term = phi[i - 1] * phi[l - 1] * self.raw(l - i, from - l, end - l);
                total += if i == l { term } else { 2.0 * term };
            }
        }
        total
    }

    fn split_loss(&self, t_len: usize, k: usize, lags: SegmentLags) -> Result<f64> {
        let fit = |start: usize, end: usize, p: usize| -> Result<ArModel> {
            let acv = self.autocovariance(start, end, p);
            if !(acv.gamma[0] > f64::EPSILON * self.raw(0, start, end).abs()) {
                return Err(Error::DegenerateSegment { start, end });
            }
            yule_walker(&acv, p).map_err(|e| segment_error(e, start, end))
        };
        let pre = fit(0, k, lags.pre)?;
        let post = fit(k, t_len, lags.post)?;
        Ok(self.sse(&pre, 0, k) + self.sse(&post, k, t_len))
    }
}

fn argmin_first(curve: &[(usize, f64)]) -> Option<(usize, f64)> {
    curve.iter().copied().fold(None, |best, (k, l)| match best {
        Some((_, b)) if l >= b => best,
        _ => Some((k, l)),
    })
}

/// Stage-1 loss curve over the candidate grid using prefix statistics.
/// Candidates whose fits are infeasible are left out of the curve.
fn sweep(x: &[f64], resolved: &ResolvedConfig, lags: SegmentLags) -> Result<Vec<(usize, f64)>> {
    let t_len = x.len();
    let stats = PrefixStats::new(x, lags.common());
    let lo = resolved.min_segment;
    let hi = t_len - resolved.min_segment;
    let mut first_err = None;
    let mut eval = |ks: &mut dyn Iterator<Item = usize>, out: &mut Vec<(usize, f64)>| {
        for k in ks {
            match stats.split_loss(t_len, k, lags) {
                Ok(l) => out.push((k, l)),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
    };
    let mut curve = Vec::new();
    eval(&mut (lo..=hi).step_by(resolved.stride), &mut curve);
    if resolved.stride > 1 {
        if let Some((kc, _)) = argmin_first(&curve) {
            let w = 2 * resolved.stride;
            let from = kc.saturating_sub(w).max(lo);
            let to = (kc + w).min(hi);
            let mut fine = Vec::new();
            eval(
                &mut (from..=to).filter(|k| !(k - lo).is_multiple_of(resolved.stride)),
                &mut fine,
            );
            curve.extend(fine);
            curve.sort_by_key(|(k, _)| *k);
        }
    }
    if curve.is_empty() {
        return Err(first_err.unwrap_or(Error::SeriesTooShort {
            len: t_len,
            required: 2 * resolved.min_segment,
        }));
    }
    Ok(curve)
}

/// Stage-1 estimate `k_hat` and its loss curve.
pub fn near_optimal_estimate(
    x: &TimeSeries,
    config: &DetectionConfig,
) -> Result<NearOptimalEstimate> {
    let x = prepared(x, config);
    let resolved = config.resolve(x.len())?;
    let lags = lags_on_halves(x.values(), config.lag_mode, resolved.p_max)?;
    let curve = sweep(x.values(), &resolved, lags)?;
    let (k_hat, _) = argmin_first(&curve).expect("non-empty curve");
    Ok(NearOptimalEstimate { k_hat, lags, curve })
}

/// Refits both segments at split `k`. With AIC lags and `refit_lags` set,
/// each side's order is re-selected on its own segment.
pub fn refit_models(x: &TimeSeries, k: usize, config: &DetectionConfig) -> Result<Refit> {
    let x = prepared(x, config);
    let resolved = config.resolve(x.len())?;
    check_split(x.len(), k, resolved.min_segment)?;
    let stage1 = lags_on_halves(x.values(), config.lag_mode, resolved.p_max)?;
    refit_at(x.values(), k, config, &resolved, stage1)
}

fn refit_at(
    x: &[f64],
    k: usize,
    config: &DetectionConfig,
    resolved: &ResolvedConfig,
    stage1: SegmentLags,
) -> Result<Refit> {
    let t_len = x.len();
    let lags = match config.lag_mode {
        LagMode::Aic { .. } if config.refit_lags => SegmentLags {
            pre: select_lag_aic(&x[..k], resolved.p_max).map_err(|e| segment_error(e, 0, k))?,
            post: select_lag_aic(&x[k..], resolved.p_max)
                .map_err(|e| segment_error(e, k, t_len))?,
        },
        _ => stage1,
    };
    let model_pre = fit_segment(x, 0, k, lags.pre)?;
    let model_post = fit_segment(x, k, t_len, lags.post)?;
    Ok(Refit {
        model_pre,
        model_post,
        lags,
        p_common: lags.common(),
    })
}

/// Stage-2 estimate: with both models frozen, minimises
/// `Q(k) = [sum_{t=p}^{k-1} r1_t^2 + sum_{t=k}^{T-1} r2_t^2] / (T - p + 1)`
/// (0-based `t`) over `k` in `p+1..=T-1` with one cumulative pass.
pub fn optimal_estimate(
    x: &TimeSeries,
    model_pre: &ArModel,
    model_post: &ArModel,
    p_common: usize,
) -> Result<OptimalEstimate> {
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
    if t_len < p + 2 {
        return Err(Error::SeriesTooShort {
            len: t_len,
            required: p + 2,
        });
    }
    let pre = model_pre.padded(p);
    let post = model_post.padded(p);
    let mut diff = Vec::with_capacity(t_len - p);
    let mut post_total = 0.0;
    for t in p..t_len {
        let r1 = pre.residual_at(x, t);
        let r2 = post.residual_at(x, t);
        post_total += r2 * r2;
        diff.push(r1 * r1 - r2 * r2);
    }
    let denom = (t_len - p + 1) as f64;
    let mut curve = Vec::with_capacity(t_len - p - 1);
    let mut running = 0.0;
    // diff[i] belongs to t = p + i; candidate k includes t < k on the pre side.
    for (i, d) in diff.iter().take(t_len - p - 1).enumerate() {
        running += d;
        curve.push((p + 1 + i, (post_total + running) / denom));
    }
    let (k_tilde, _) = argmin_first(&curve).expect("T >= p + 2 gives a candidate");
    Ok(OptimalEstimate { k_tilde, curve })
}

/// Full pipeline: stage-1 sweep, refit at `k_hat`, stage-2 refinement.
pub fn detect(x: &TimeSeries, config: &DetectionConfig) -> Result<DetectionResult> {
    let x = prepared(x, config);
    let resolved = config.resolve(x.len())?;
    let stage1 = lags_on_halves(x.values(), config.lag_mode, resolved.p_max)?;
    let curve = sweep(x.values(), &resolved, stage1)?;
    let (k_hat, _) = argmin_first(&curve).expect("non-empty curve");
    let refit = refit_at(x.values(), k_hat, config, &resolved, stage1)?;
    let stage2 = optimal_estimate(&x, &refit.model_pre, &refit.model_post, refit.p_common)?;
    Ok(DetectionResult {
        t_len: x.len(),
        k_hat,
        k_tilde: stage2.k_tilde,
        stage1_lags: stage1,
        model_pre: refit.model_pre,
        model_post: refit.model_post,
        refit_lags: refit.lags,
        p_common: refit.p_common,
        min_segment: resolved.min_segment,
        demeaned: x.is_demeaned(),
        loss_curve_stage1: curve,
        loss_curve_stage2: stage2.curve,
    })
}
