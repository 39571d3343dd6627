//! Simulation scenarios with a single spectral change and a replication
//! harness that reports localisation error and interval coverage.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ar::{ar_spectral_density, sample_autocovariance, yule_walker, ArModel};
use crate::detection::{detect, DetectionConfig};
use crate::error::{Error, Result};
use crate::inference::{infer, ConfidenceInterval, InferenceSettings};
use crate::series::TimeSeries;

/// Coefficients of the AR(3) process used by scenarios III, IV and V.
pub const AR3_COEFFS: [f64; 3] = [0.9, -0.5, 0.3];

const SIEVE_ORDER: usize = 30;
const SIEVE_LEN: usize = 100_000;
const SIEVE_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    I,
    II,
    III,
    IV,
    V,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scenario::I => "I",
            Scenario::II => "II",
            Scenario::III => "III",
            Scenario::IV => "IV",
            Scenario::V => "V",
        };
        f.write_str(s)
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Scenario::I),
            "II" | "2" => Ok(Scenario::II),
            "III" | "3" => Ok(Scenario::III),
            "IV" | "4" => Ok(Scenario::IV),
            "V" | "5" => Ok(Scenario::V),
            other => Err(Error::InvalidSpec(format!("unknown scenario {other:?}"))),
        }
    }
}

/// A data-generating process for one side of the change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    /// `X_t = e_t + theta e_{t-1}`.
    Ma1 { theta: f64 },
    /// `X_t = sum_j phi_j X_{t-j} + e_t`.
    Ar { phi: Vec<f64> },
    /// `X_t = phi |X_{t-1}| + e_t`.
    AbsAr1 { phi: f64 },
}

impl Process {
    #[inline]
    fn next(&self, history: &[f64], prev_eps: f64, eps: f64) -> f64 {
        let lag = |j: usize| history.len().checked_sub(j).map_or(0.0, |i| history[i]);
        match self {
            Process::Ma1 { theta } => eps + theta * prev_eps,
            Process::Ar { phi } => {
                eps + phi
                    .iter()
                    .enumerate()
                    .map(|(j, f)| f * lag(j + 1))
                    .sum::<f64>()
            }
            Process::AbsAr1 { phi } => phi * lag(1).abs() + eps,
        }
    }

    /// Population spectral density, or `None` when no closed form exists.
    pub fn spectral_density(&self, sigma: f64, lambdas: &[f64]) -> Option<Result<Vec<f64>>> {
        let s2 = sigma * sigma;
        match self {
            Process::Ma1 { theta } => Some(Ok(lambdas
                .iter()
                .map(|l| {
                    s2 * (1.0 + theta * theta + 2.0 * theta * l.cos())
                        / (2.0 * std::f64::consts::PI)
                })
                .collect())),
            Process::Ar { phi } => {
                Some(ArModel::new(phi.clone(), s2).and_then(|m| ar_spectral_density(&m, lambdas)))
            }
            Process::AbsAr1 { .. } => None,
        }
    }
}

/// How the post-change recursion is started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splice {
    /// Continue from the last pre-change values.
    #[default]
    Continuous,
    /// Start the post-change process from zero with its own burn-in.
    Restart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub theta: Option<f64>,
    pub phi: Option<f64>,
    pub sigma: f64,
    pub t_len: usize,
    /// Number of observations before the change.
    pub k_star: usize,
    pub burn_in: usize,
    pub splice: Splice,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, t_len: usize, k_star: usize) -> Self {
        Self {
            scenario,
            theta: None,
            phi: None,
            sigma: 1.0,
            t_len,
            k_star,
            burn_in: 500,
            splice: Splice::Continuous,
        }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = Some(theta);
        self
    }

    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi = Some(phi);
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    fn need(&self, name: &str, v: Option<f64>) -> Result<f64> {
        match v {
            Some(v) if v.is_finite() => Ok(v),
            Some(v) => Err(Error::InvalidSpec(format!(
                "{name} must be finite, got {v}"
            ))),
            None => Err(Error::InvalidSpec(format!(
                "scenario {} requires {name}",
                self.scenario
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.processes().map(|_| ())
    }

    /// Pre- and post-change processes.
    pub fn processes(&self) -> Result<(Process, Process)> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if self.k_star < 20 || self.t_len < self.k_star + 20 {
            return Err(Error::InvalidSpec(format!(
                "k_star = {} must leave at least 20 observations on each side of T = {}",
                self.k_star, self.t_len
            )));
        }
        let ar3 = || Process::Ar {
            phi: AR3_COEFFS.to_vec(),
        };
        Ok(match self.scenario {
            Scenario::I => (
                Process::Ma1 {
                    theta: self.need("theta", self.theta)?,
                },
                Process::AbsAr1 {
                    phi: self.need("phi", self.phi)?,
                },
            ),
            Scenario::II => (
                Process::Ma1 {
                    theta: self.need("theta", self.theta)?,
                },
                Process::Ar {
                    phi: vec![self.need("phi", self.phi)?],
                },
            ),
            Scenario::III => (
                ar3(),
                Process::Ar {
                    phi: vec![self.need("phi", self.phi)?],
                },
            ),
            Scenario::IV => (
                Process::Ma1 {
                    theta: self.need("theta", self.theta)?,
                },
                ar3(),
            ),
            Scenario::V => (
                ar3(),
                Process::AbsAr1 {
                    phi: self.need("phi", self.phi)?,
                },
            ),
        })
    }
}

struct Generator<'a> {
    rng: ChaCha8Rng,
    sigma: f64,
    process: &'a Process,
}

impl Generator<'_> {
    fn draw(&mut self) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        self.sigma * z
    }

    /// Appends `n` values to `out`, continuing from its current contents.
    fn run(&mut self, out: &mut Vec<f64>, prev_eps: &mut f64, n: usize) {
        for _ in 0..n {
            let eps = self.draw();
            let x = self.process.next(out, *prev_eps, eps);
            *prev_eps = eps;
            out.push(x);
        }
    }
}

/// Draws one series for `spec`; deterministic in `(spec, seed)`.
pub fn generate_scenario(spec: &ScenarioSpec, seed: u64) -> Result<TimeSeries> {
    let (pre, post) = spec.processes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = Vec::with_capacity(spec.burn_in + spec.t_len);
    let mut prev_eps = 0.0;
    let mut g = Generator {
        rng: rng.clone(),
        sigma: spec.sigma,
        process: &pre,
    };
    g.run(&mut buf, &mut prev_eps, spec.burn_in + spec.k_star);
    rng = g.rng;
    let mut out = buf.split_off(spec.burn_in);
    let n_post = spec.t_len - spec.k_star;
    let mut g = Generator {
        rng,
        sigma: spec.sigma,
        process: &post,
    };
    match spec.splice {
        Splice::Continuous => {
            if matches!(post, Process::Ma1 { .. }) {
                prev_eps = g.draw();
            }
            g.run(&mut out, &mut prev_eps, n_post);
        }
        Splice::Restart => {
            let mut fresh = Vec::with_capacity(spec.burn_in + n_post);
            let mut eps = 0.0;
            g.run(&mut fresh, &mut eps, spec.burn_in + n_post);
            out.extend_from_slice(&fresh[spec.burn_in..]);
        }
    }
    TimeSeries::new(out)
}

fn sieve_density(process: &Process, sigma: f64, lambdas: &[f64]) -> Result<Vec<f64>> {
    let mut g = Generator {
        rng: ChaCha8Rng::seed_from_u64(SIEVE_SEED),
        sigma,
        process,
    };
    let mut path = Vec::with_capacity(SIEVE_LEN + 500);
    let mut eps = 0.0;
    g.run(&mut path, &mut eps, SIEVE_LEN + 500);
    let acv = sample_autocovariance(&path[500..], SIEVE_ORDER)?;
    let model = yule_walker(&acv, SIEVE_ORDER)?;
    ar_spectral_density(&model, lambdas)
}

/// Population spectral densities before and after the change. The
/// nonlinear process has no closed form and is approximated by an AR(30)
/// fitted to a long simulated path.
pub fn true_spectral_curves(spec: &ScenarioSpec, lambdas: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (pre, post) = spec.processes()?;
    let eval = |p: &Process| {
        p.spectral_density(spec.sigma, lambdas)
            .unwrap_or_else(|| sieve_density(p, spec.sigma, lambdas))
    };
    Ok((eval(&pre)?, eval(&post)?))
}

/// Estimates produced for one simulated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub k_hat: usize,
    pub k_tilde: usize,
    pub intervals: Vec<ConfidenceInterval>,
}

/// Anything that can turn a simulated series into estimates; lets the
/// harness be exercised with stand-in estimators.
pub trait ReplicateEstimator: Sync {
    fn estimate(&self, x: &TimeSeries, replicate_seed: u64) -> Result<ReplicateOutcome>;
}

/// Detection followed by interval construction at each configured level.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TwoStageEstimator {
    pub detection: DetectionConfig,
    pub inference: InferenceSettings,
}

impl ReplicateEstimator for TwoStageEstimator {
    fn estimate(&self, x: &TimeSeries, replicate_seed: u64) -> Result<ReplicateOutcome> {
        let det = detect(x, &self.detection)?;
        let intervals = if self.inference.levels.is_empty() {
            Vec::new()
        } else {
            let mut settings = self.inference.clone();
            // Keep the Monte Carlo streams disjoint from the data streams.
            settings.mc.seed = settings
                .mc
                .seed
                .wrapping_add(replicate_seed ^ 0x9e37_79b9_7f4a_7c15);
            infer(x, &det, &settings)?.intervals
        };
        Ok(ReplicateOutcome {
            k_hat: det.k_hat,
            k_tilde: det.k_tilde,
            intervals,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: f64,
    pub coverage: f64,
    pub mean_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub replicate: usize,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub spec: ScenarioSpec,
    pub reps: usize,
    pub successes: usize,
    pub ab_hat: f64,
    pub ab_tilde: f64,
    pub rmse_hat: f64,
    pub rmse_tilde: f64,
    pub levels: Vec<LevelSummary>,
    pub failures: Vec<Failure>,
}

impl ReplicationReport {
    pub fn coverage(&self, level: f64) -> Option<f64> {
        self.levels
            .iter()
            .find(|l| (l.level - level).abs() < 1e-9)
            .map(|l| l.coverage)
    }

    pub fn mean_length(&self, level: f64) -> Option<f64> {
        self.levels
            .iter()
            .find(|l| (l.level - level).abs() < 1e-9)
            .map(|l| l.mean_length)
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec![
            "Truth".to_string(),
            "AB(k_hat)".into(),
            "AB(k_tilde)".into(),
            "RMSE(k_hat)".into(),
            "RMSE(k_tilde)".into(),
        ];
        cols.extend(
            self.levels
                .iter()
                .map(|l| format!("CP{}", level_label(l.level))),
        );
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            self.spec.k_star.to_string(),
            format!("{:.3}", self.ab_hat),
            format!("{:.3}", self.ab_tilde),
            format!("{:.3}", self.rmse_hat),
            format!("{:.3}", self.rmse_tilde),
        ];
        cols.extend(self.levels.iter().map(|l| format!("{:.3}", l.coverage)));
        cols.join(",")
    }
}

fn level_label(level: f64) -> String {
    let pct = level * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}", pct.round() as i64)
    } else {
        format!("{pct}")
    }
}

/// Runs `reps` replicates of the full two-stage procedure.
pub fn run_replications(
    spec: &ScenarioSpec,
    estimator: &TwoStageEstimator,
    reps: usize,
    seed: u64,
) -> Result<ReplicationReport> {
    let levels = estimator.inference.levels.clone();
    run_replications_with(spec, estimator, &levels, reps, seed)
}

/// Replicate `r` uses seed `seed + r`. Failed replicates are recorded and
/// left out of every aggregate.
pub fn run_replications_with<E: ReplicateEstimator>(
    spec: &ScenarioSpec,
    estimator: &E,
    levels: &[f64],
    reps: usize,
    seed: u64,
) -> Result<ReplicationReport> {
    spec.validate()?;
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be >= 1".into()));
    }
    let outcomes: Vec<std::result::Result<ReplicateOutcome, String>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let s = seed.wrapping_add(r as u64);
            generate_scenario(spec, s)
                .and_then(|x| estimator.estimate(&x, s))
                .map_err(|e| e.to_string())
        })
        .collect();

    let mut failures = Vec::new();
    let mut ok = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(o) => ok.push(o),
            Err(reason) => failures.push(Failure {
                replicate: r,
                seed: seed.wrapping_add(r as u64),
                reason,
            }),
        }
    }
    let n = ok.len() as f64;
    let k_star = spec.k_star as f64;
    let err = |k: usize| k as f64 - k_star;
    let mean = |f: &dyn Fn(&ReplicateOutcome) -> f64| ok.iter().map(f).sum::<f64>() / n;
    let ab_hat = mean(&|o| err(o.k_hat).abs());
    let ab_tilde = mean(&|o| err(o.k_tilde).abs());
    let rmse_hat = mean(&|o| err(o.k_hat).powi(2)).sqrt();
    let rmse_tilde = mean(&|o| err(o.k_tilde).powi(2)).sqrt();
    let levels = levels
        .iter()
        .map(|&level| {
            let pick = |o: &ReplicateOutcome| {
                o.intervals
                    .iter()
                    .find(|ci| (ci.level - level).abs() < 1e-9)
                    .copied()
            };
            let covered = ok
                .iter()
                .filter(|o| pick(o).is_some_and(|ci| ci.contains(spec.k_star)))
                .count();
            let mean_length = mean(&|o| pick(o).map_or(f64::NAN, |ci| ci.length() as f64));
            LevelSummary {
                level,
                coverage: covered as f64 / n,
                mean_length,
            }
        })
        .collect();
    Ok(ReplicationReport {
        spec: spec.clone(),
        reps,
        successes: ok.len(),
        ab_hat,
        ab_tilde,
        rmse_hat,
        rmse_tilde,
        levels,
        failures,
    })
}
