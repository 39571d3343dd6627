//! Versioned JSON documents emitted by the subcommands.

use serde::Serialize;
use wold_cp::{
    ArModel, ConfidenceInterval, DetectionResult, Error, Inference, NuisanceEstimates,
    QuantileTable, ReplicationReport, SegmentLags,
};

use crate::{CliError, SCHEMA_VERSION};

#[derive(Serialize)]
pub struct DetectReport<'a> {
    pub schema_version: u32,
    pub command: &'static str,
    pub t_len: usize,
    pub k_hat: usize,
    pub k_tilde: usize,
    pub demeaned: bool,
    pub min_segment: usize,
    pub stage1_lags: SegmentLags,
    pub refit_lags: SegmentLags,
    pub p_common: usize,
    pub model_pre: &'a ArModel,
    pub model_post: &'a ArModel,
    pub xi2: Option<f64>,
    pub nuisance: Option<&'a NuisanceEstimates>,
    pub intervals: Vec<ConfidenceInterval>,
    pub truncation_fraction: Option<f64>,
    pub truncation_warning: bool,
    pub loss_curve_stage1: &'a [(usize, f64)],
    pub loss_curve_stage2: &'a [(usize, f64)],
}

impl<'a> DetectReport<'a> {
    pub fn new(d: &'a DetectionResult, inf: Option<&'a Inference>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: "detect",
            t_len: d.t_len,
            k_hat: d.k_hat,
            k_tilde: d.k_tilde,
            demeaned: d.demeaned,
            min_segment: d.min_segment,
            stage1_lags: d.stage1_lags,
            refit_lags: d.refit_lags,
            p_common: d.p_common,
            model_pre: &d.model_pre,
            model_post: &d.model_post,
            xi2: inf.map(|i| i.nuisance.xi2),
            nuisance: inf.map(|i| &i.nuisance),
            intervals: inf.map(|i| i.intervals.clone()).unwrap_or_default(),
            truncation_fraction: inf.map(|i| i.table.truncation_fraction),
            truncation_warning: inf.is_some_and(|i| i.table.truncation_warning),
            loss_curve_stage1: &d.loss_curve_stage1,
            loss_curve_stage2: &d.loss_curve_stage2,
        }
    }
}

/// One row per interval level, or a single row without interval columns
/// filled when no levels were requested.
pub fn detect_csv(doc: &DetectReport) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Input(e.to_string());
    w.write_record([
        "k_hat", "k_tilde", "p_common", "xi2", "level", "lower", "upper",
    ])
    .map_err(err)?;
    let head = [
        doc.k_hat.to_string(),
        doc.k_tilde.to_string(),
        doc.p_common.to_string(),
        doc.xi2.map(|v| v.to_string()).unwrap_or_default(),
    ];
    if doc.intervals.is_empty() {
        w.write_record(
            head.iter()
                .cloned()
                .chain(["".into(), "".into(), "".into()]),
        )
        .map_err(err)?;
    }
    for ci in &doc.intervals {
        let tail = [
            ci.level.to_string(),
            ci.lower.to_string(),
            ci.upper.to_string(),
        ];
        w.write_record(head.iter().chain(tail.iter()))
            .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Input(e.to_string()))
}

/// Written alongside exit status 3 when inference is undefined.
#[derive(Serialize)]
pub struct Diagnostic<'a> {
    pub schema_version: u32,
    pub command: &'static str,
    pub error: &'static str,
    pub message: String,
    pub k_hat: usize,
    pub k_tilde: usize,
    pub p_common: usize,
    pub model_pre: &'a ArModel,
    pub model_post: &'a ArModel,
}

impl<'a> Diagnostic<'a> {
    pub fn new(e: &Error, d: &'a DetectionResult) -> Self {
        let kind = match e {
            Error::NoJump => "no_jump",
            Error::DegenerateSegment { .. } | Error::DegenerateSeries { .. } => {
                "degenerate_segment"
            }
            Error::SingularSystem { .. } => "singular_system",
            _ => "degenerate",
        };
        Self {
            schema_version: SCHEMA_VERSION,
            command: "detect",
            error: kind,
            message: e.to_string(),
            k_hat: d.k_hat,
            k_tilde: d.k_tilde,
            p_common: d.p_common,
            model_pre: &d.model_pre,
            model_post: &d.model_post,
        }
    }
}

#[derive(Serialize)]
pub struct SpectrumReport<'a> {
    pub schema_version: u32,
    pub command: &'static str,
    pub k: usize,
    pub model_pre: &'a ArModel,
    pub model_post: &'a ArModel,
    pub points: usize,
    pub files: Vec<String>,
}

#[derive(Serialize)]
pub struct SimulateReport<'a> {
    pub schema_version: u32,
    pub command: &'static str,
    #[serde(flatten)]
    pub report: &'a ReplicationReport,
}

impl<'a> SimulateReport<'a> {
    pub fn new(report: &'a ReplicationReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: "simulate",
            report,
        }
    }
}

#[derive(Serialize)]
pub struct QuantileReport<'a> {
    pub command: &'static str,
    pub median: Option<f64>,
    #[serde(flatten)]
    pub table: &'a QuantileTable,
}

impl<'a> QuantileReport<'a> {
    pub fn new(table: &'a QuantileTable) -> Self {
        Self {
            command: "quantiles",
            median: table.quantile(0.5).ok(),
            table,
        }
    }
}
