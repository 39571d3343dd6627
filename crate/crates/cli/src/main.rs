use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use wold_cp::{
    ar_spectral_density, detect, frequency_grid, infer, refit_models, run_replications,
    simulate_argmax_quantiles, ArModel, ArgmaxParams, DetectionConfig, DetectionResult,
    InferenceSettings, LagMode, McSettings, Scenario, ScenarioSpec, Splice, TimeSeries,
    TwoStageEstimator,
};

mod input;
mod report;

use input::Column;

pub const SCHEMA_VERSION: u32 = 1;
const SPECTRUM_POINTS: usize = 512;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable input, bad arguments or an invalid configuration.
    Input(String),
    /// The data admit no statistical answer (no jump, constant segment).
    Degenerate(String),
}

impl From<wold_cp::Error> for CliError {
    fn from(e: wold_cp::Error) -> Self {
        if e.is_degeneracy() {
            CliError::Degenerate(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(
    name = "wold-cp",
    version,
    about = "Change point detection in the spectral density of a time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Locate the change point and build confidence intervals.
    Detect {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        detection: DetectionArgs,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write fitted spectral densities before and after the change.
    Spectrum {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        detection: DetectionArgs,
        /// Split index (number of pre-change observations); defaults to the detected one.
        #[arg(long)]
        k: Option<usize>,
        /// Prefix for `<prefix>_pre.csv` and `<prefix>_post.csv`.
        #[arg(long, default_value = "spectrum")]
        output: PathBuf,
    },
    /// Run a simulation study for one scenario.
    Simulate {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long, allow_negative_numbers = true)]
        theta: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        phi: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long = "T")]
        t_len: usize,
        #[arg(long)]
        kstar: usize,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, value_enum, default_value_t = SpliceArg::Continuous)]
        splice: SpliceArg,
        #[command(flatten)]
        detection: DetectionArgs,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Tabulate quantiles of the limiting argmax distribution.
    Quantiles {
        #[arg(long, default_value_t = 1.0)]
        sigma1: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        #[arg(long = "sigma1-star", default_value_t = 1.0)]
        sigma1_star: f64,
        #[arg(long = "sigma2-star", default_value_t = 1.0)]
        sigma2_star: f64,
        /// Probabilities to tabulate; defaults to the standard set.
        #[arg(long, value_delimiter = ',')]
        probs: Vec<f64>,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    /// Header name or 0-based column index.
    #[arg(long, default_value = "0")]
    column: Column,
}

#[derive(Args)]
struct DetectionArgs {
    /// Subtract the series mean before fitting.
    #[arg(long)]
    demean: bool,
    /// `aic`, `aic:PMAX` or `fixed:P`.
    #[arg(long, default_value = "aic", value_parser = parse_lag)]
    lag: LagMode,
    #[arg(long = "min-segment")]
    min_segment: Option<usize>,
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

#[derive(Args)]
struct McArgs {
    /// Confidence levels.
    #[arg(long, value_delimiter = ',', default_value = "0.90,0.95,0.99")]
    levels: Vec<f64>,
    #[arg(long = "mc-R", default_value_t = 200.0)]
    mc_r: f64,
    #[arg(long = "mc-delta", default_value_t = 0.05)]
    mc_delta: f64,
    #[arg(long = "mc-reps", default_value_t = 50_000)]
    mc_reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Destination file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpliceArg {
    Continuous,
    Restart,
}

fn parse_lag(s: &str) -> Result<LagMode, String> {
    let (kind, value) = match s.split_once(':') {
        Some((k, v)) => (k, Some(v)),
        None => (s, None),
    };
    let order = |v: &str| {
        v.parse::<usize>()
            .map_err(|_| format!("invalid lag order {v:?}"))
    };
    match (kind, value) {
        ("aic", None) => Ok(LagMode::Aic { p_max: None }),
        ("aic", Some(v)) => Ok(LagMode::Aic {
            p_max: Some(order(v)?),
        }),
        ("fixed", Some(v)) => Ok(LagMode::Fixed(order(v)?)),
        _ => Err(format!("expected aic, aic:PMAX or fixed:P, got {s:?}")),
    }
}

impl DetectionArgs {
    fn config(&self) -> DetectionConfig {
        DetectionConfig {
            lag_mode: self.lag,
            min_segment: self.min_segment,
            sweep_stride: self.stride,
            demean: self.demean,
            ..DetectionConfig::default()
        }
    }
}

impl McArgs {
    fn settings(&self) -> McSettings {
        McSettings {
            half_width: self.mc_r,
            step: self.mc_delta,
            reps: self.mc_reps,
            seed: self.seed,
        }
    }

    fn inference(&self) -> Result<InferenceSettings, CliError> {
        if let Some(l) = self.levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return Err(CliError::Input(format!("level {l} outside (0, 1)")));
        }
        let mc = self.settings();
        mc.validate()?;
        Ok(InferenceSettings {
            levels: self.levels.clone(),
            mc,
            ..InferenceSettings::default()
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Degenerate(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("CPD_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| format!("CPD_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Detect {
            input,
            detection,
            mc,
            output,
        } => cmd_detect(&input, &detection, &mc, &output),
        Command::Spectrum {
            input,
            detection,
            k,
            output,
        } => cmd_spectrum(&input, &detection, k, &output),
        Command::Simulate {
            scenario,
            theta,
            phi,
            sigma,
            t_len,
            kstar,
            reps,
            splice,
            detection,
            mc,
            output,
        } => {
            let mut spec = ScenarioSpec::new(scenario, t_len, kstar).with_sigma(sigma);
            spec.theta = theta;
            spec.phi = phi;
            spec.splice = match splice {
                SpliceArg::Continuous => Splice::Continuous,
                SpliceArg::Restart => Splice::Restart,
            };
            cmd_simulate(&spec, reps, &detection, &mc, &output)
        }
        Command::Quantiles {
            sigma1,
            sigma2,
            sigma1_star,
            sigma2_star,
            probs,
            mc,
            output,
        } => {
            let params = ArgmaxParams {
                sigma1,
                sigma2,
                sigma1_star,
                sigma2_star,
            };
            cmd_quantiles(params, &probs, &mc, &output)
        }
    }
}

fn load(input: &InputArgs) -> Result<TimeSeries, CliError> {
    let values = input::read_column(&input.input, &input.column)?;
    Ok(TimeSeries::new(values)?)
}

fn cmd_detect(
    input: &InputArgs,
    det: &DetectionArgs,
    mc: &McArgs,
    out: &OutputArgs,
) -> Result<(), CliError> {
    let x = load(input)?;
    let settings = mc.inference()?;
    let result = detect(&x, &det.config())?;
    let inference = if settings.levels.is_empty() {
        Ok(None)
    } else {
        infer(&x, &result, &settings).map(Some)
    };
    match inference {
        Ok(inf) => {
            let doc = report::DetectReport::new(&result, inf.as_ref());
            match out.format {
                Format::Json => emit(out, &json(&doc)?),
                Format::Csv => emit(out, &report::detect_csv(&doc)?),
            }
        }
        Err(e) if e.is_degeneracy() => {
            let doc = report::Diagnostic::new(&e, &result);
            emit(out, &json(&doc)?)?;
            Err(CliError::Degenerate(e.to_string()))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_spectrum(
    input: &InputArgs,
    det: &DetectionArgs,
    k: Option<usize>,
    prefix: &Path,
) -> Result<(), CliError> {
    let x = load(input)?;
    let config = det.config();
    let (k, pre, post) = match k {
        Some(k) => {
            let refit = refit_models(&x, k, &config)?;
            (k, refit.model_pre, refit.model_post)
        }
        None => {
            let d: DetectionResult = detect(&x, &config)?;
            (d.k_tilde, d.model_pre, d.model_post)
        }
    };
    let grid = frequency_grid(SPECTRUM_POINTS);
    let mut files = Vec::new();
    for (side, model) in [("pre", &pre), ("post", &post)] {
        let path = suffixed(prefix, side);
        write_curve(&path, &grid, model)?;
        files.push(path.display().to_string());
    }
    let doc = report::SpectrumReport {
        schema_version: SCHEMA_VERSION,
        command: "spectrum",
        k,
        model_pre: &pre,
        model_post: &post,
        points: SPECTRUM_POINTS,
        files,
    };
    print_stdout(&json(&doc)?)
}

fn suffixed(prefix: &Path, side: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(format!("_{side}.csv"));
    PathBuf::from(name)
}

fn write_curve(path: &Path, grid: &[f64], model: &ArModel) -> Result<(), CliError> {
    let density = ar_spectral_density(model, grid)?;
    let io = |e: csv::Error| CliError::Input(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["lambda", "density"]).map_err(io)?;
    for (l, f) in grid.iter().zip(&density) {
        w.write_record([l.to_string(), f.to_string()]).map_err(io)?;
    }
    w.flush()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn cmd_simulate(
    spec: &ScenarioSpec,
    reps: usize,
    det: &DetectionArgs,
    mc: &McArgs,
    out: &OutputArgs,
) -> Result<(), CliError> {
    spec.validate()?;
    let estimator = TwoStageEstimator {
        detection: det.config(),
        inference: mc.inference()?,
    };
    let report = run_replications(spec, &estimator, reps, mc.seed)?;
    match out.format {
        Format::Json => emit(out, &json(&report::SimulateReport::new(&report))?),
        Format::Csv => emit(
            out,
            &format!("{}\n{}\n", report.csv_header(), report.csv_row()),
        ),
    }
}

fn cmd_quantiles(
    params: ArgmaxParams,
    probs: &[f64],
    mc: &McArgs,
    out: &OutputArgs,
) -> Result<(), CliError> {
    let table = simulate_argmax_quantiles(params, mc.settings(), probs)?;
    if table.truncation_warning {
        eprintln!(
            "warning: {:.2}% of paths peaked at the grid edge; increase --mc-R",
            100.0 * table.truncation_fraction
        );
    }
    match out.format {
        Format::Json => emit(out, &json(&report::QuantileReport::new(&table))?),
        Format::Csv => {
            let mut s = String::from("prob,quantile\n");
            for (p, q) in table.probs.iter().zip(&table.quants) {
                s.push_str(&format!("{p},{q}\n"));
            }
            emit(out, &s)
        }
    }
}

fn json<T: Serialize>(doc: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(doc)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Input(e.to_string()))
}

fn emit(out: &OutputArgs, text: &str) -> Result<(), CliError> {
    match &out.output {
        Some(path) => {
            fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
        }
        None => print_stdout(text),
    }
}

fn print_stdout(text: &str) -> Result<(), CliError> {
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(text.as_bytes())
        .and_then(|_| stdout.flush())
        .map_err(|e| CliError::Input(e.to_string()))
}
