//! Run configuration, `records.csv` and `summary.json`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::adaptivity::{
    self, AdaptiveError, AdaptiveOptions, AdaptiveRecord, MarkError, RecordField, RunOutput, StopCriteria,
};
use crate::discretization;
use crate::dual::DualMesh;
use crate::problem::{self, ProblemError, ProblemSpec};

/// Column order of `records.csv`.
pub const CSV_HEADER: [&str; 14] = [
    "level",
    "n_elements",
    "n_nodes",
    "eta",
    "osc",
    "energy_error",
    "fem_energy_error",
    "ratio_card",
    "osc_fraction_eta",
    "sigma",
    "solve_iters",
    "wall_ms_solve",
    "wall_ms_estimate",
    "wall_ms_refine",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no records to write")]
    Empty,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: unexpected header {found:?}")]
    Header { path: PathBuf, found: Vec<String> },
}

/// Shortest decimal that parses back to the same value; `nan` for NaN.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:?}")
    }
}

fn record_fields(r: &AdaptiveRecord) -> [String; 14] {
    [
        r.level.to_string(),
        r.n_elements.to_string(),
        r.n_nodes.to_string(),
        format_float(r.eta),
        format_float(r.osc),
        format_float(r.energy_error),
        format_float(r.fem_energy_error),
        format_float(r.ratio_card),
        format_float(r.osc_fraction_eta),
        format_float(r.sigma),
        r.solve_iters.to_string(),
        format_float(r.wall_ms_solve),
        format_float(r.wall_ms_estimate),
        format_float(r.wall_ms_refine),
    ]
}

/// Writes the records as UTF-8 CSV with LF line endings.
pub fn write_records_csv(records: &[AdaptiveRecord], path: &Path) -> Result<(), ReportError> {
    if records.is_empty() {
        return Err(ReportError::Empty);
    }
    let csv_err = |source| ReportError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record(record_fields(r)).map_err(csv_err)?;
    }
    w.flush().map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
}

pub fn read_records_csv(path: &Path) -> Result<Vec<AdaptiveRecord>, ReportError> {
    let csv_err = |source| ReportError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(ReportError::Header { path: path.to_path_buf(), found: header });
    }
    r.deserialize().collect::<Result<Vec<AdaptiveRecord>, _>>().map_err(csv_err)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Adaptive,
    Uniform,
}

/// Everything that determines one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Builtin name or path to a JSON problem config.
    pub problem: String,
    pub theta: f64,
    pub theta_prime: f64,
    pub mode: Mode,
    pub max_elements: usize,
    /// Number of levels; required for uniform runs.
    pub levels: Option<usize>,
    pub eta_tol: f64,
    pub out: PathBuf,
    /// Defaults to "on when an exact solution exists".
    pub fem_compare: Option<bool>,
    pub matrix_dump: bool,
    /// Write measured wall times; zeros make `records.csv` reproducible byte for byte.
    pub timings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "square-smooth".to_string(),
            theta: 0.5,
            theta_prime: 0.5,
            mode: Mode::Adaptive,
            max_elements: 3_000_000,
            levels: None,
            eta_tol: 0.0,
            out: PathBuf::from("out"),
            fem_compare: None,
            matrix_dump: false,
            timings: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("theta must lie in (0,1]")]
    Theta,
    #[error("theta-prime must lie in (0,theta]")]
    ThetaPrime,
    #[error("eta-tol must be a finite nonnegative number")]
    EtaTol,
    #[error("max-elements must be positive")]
    MaxElements,
    #[error("uniform mode requires --levels")]
    MissingLevels,
    #[error("levels must be positive")]
    Levels,
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(ConfigError::Theta);
        }
        if !(self.theta_prime > 0.0 && self.theta_prime <= self.theta) {
            return Err(ConfigError::ThetaPrime);
        }
        if !(self.eta_tol.is_finite() && self.eta_tol >= 0.0) {
            return Err(ConfigError::EtaTol);
        }
        if self.max_elements == 0 {
            return Err(ConfigError::MaxElements);
        }
        match (self.mode, self.levels) {
            (_, Some(0)) => Err(ConfigError::Levels),
            (Mode::Uniform, None) => Err(ConfigError::MissingLevels),
            _ => Ok(()),
        }
    }

    /// Resolves the problem selector: a builtin name, else a config file.
    pub fn load_problem(&self) -> Result<ProblemSpec, ConfigError> {
        if problem::BUILTIN_NAMES.contains(&self.problem.as_str()) {
            return Ok(problem::builtin(&self.problem)?);
        }
        if !Path::new(&self.problem).exists() {
            return Err(ProblemError::UnknownBuiltin(self.problem.clone()).into());
        }
        Ok(problem::problem_from_json(&self.problem)?)
    }

    fn options(&self, problem: &ProblemSpec) -> AdaptiveOptions {
        AdaptiveOptions {
            theta: self.theta,
            theta_prime: self.theta_prime,
            stop: StopCriteria {
                max_elements: self.max_elements,
                max_levels: self.levels.unwrap_or(usize::MAX),
                eta_tol: self.eta_tol,
            },
            fem_compare: self.fem_compare.unwrap_or(problem.exact.is_some()),
            ..Default::default()
        }
    }
}

/// One pass/fail comparison written to `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: Option<f64>,
    /// Human-readable acceptance condition, e.g. `"in [-0.60, -0.45]"`.
    pub threshold: String,
    pub pass: bool,
}

impl Check {
    fn new(name: &str, value: Option<f64>, threshold: String, ok: impl Fn(f64) -> bool) -> Self {
        Self {
            name: name.to_string(),
            value,
            pass: value.is_some_and(|v| v.is_finite() && ok(v)),
            threshold,
        }
    }

    fn range(name: &str, value: Option<f64>, lo: f64, hi: f64) -> Self {
        Self::new(name, value, format!("in [{lo:.2}, {hi:.2}]"), |v| v >= lo && v <= hi)
    }

    fn at_most(name: &str, value: Option<f64>, hi: f64) -> Self {
        Self::new(name, value, format!("<= {hi}"), |v| v <= hi)
    }

    fn at_least(name: &str, value: Option<f64>, lo: f64) -> Self {
        Self::new(name, value, format!(">= {lo}"), |v| v >= lo)
    }
}

/// Expected fitted slope range of one column.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateExpectation {
    pub field: RecordField,
    pub lo: f64,
    pub hi: f64,
}

/// Slope windows checked for a run: optimal rates for adaptive runs, and for
/// uniform runs of the builtin problems the rate their regularity allows.
pub fn default_expectations(problem_label: &str, mode: Mode) -> Vec<RateExpectation> {
    let r = |field, lo, hi| RateExpectation { field, lo, hi };
    match (mode, problem_label) {
        (Mode::Adaptive, _) => vec![
            r(RecordField::Eta, -0.60, -0.45),
            r(RecordField::EnergyError, -0.60, -0.45),
            r(RecordField::Osc, f64::NEG_INFINITY, -0.80),
        ],
        (Mode::Uniform, "lshape-singular") => vec![r(RecordField::EnergyError, -0.38, -0.29)],
        (Mode::Uniform, "square-smooth") => vec![r(RecordField::Eta, -0.60, -0.45)],
        _ => Vec::new(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rates {
    /// Number of trailing levels in the fit.
    pub window: usize,
    pub eta: Option<f64>,
    pub osc: Option<f64>,
    pub energy_error: Option<f64>,
    pub fem_energy_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Constants {
    /// `max E_ℓ / η_ℓ`.
    pub reliability_max: Option<f64>,
    /// `max η_ℓ / (E_ℓ² + osc_ℓ²)^{1/2}`.
    pub efficiency_max: Option<f64>,
    /// Largest deviation factor of `E_ℓ / η_ℓ` from its level-5 value, levels ≥ 5.
    pub reliability_drift: Option<f64>,
    pub efficiency_drift: Option<f64>,
    pub ratio_card_max: Option<f64>,
    pub osc_fraction_eta_min: Option<f64>,
    /// Geometric mean of `η_{ℓ+1} / η_ℓ` over levels 3 to the end.
    pub eta_reduction_geomean: Option<f64>,
    /// Largest observed quasi-Galerkin defect constant over levels 2 to 10.
    pub defect_constant_max: Option<f64>,
    /// Largest deviation factor of the defect constant on levels 5 to 10 from level 4.
    pub defect_drift: Option<f64>,
    pub max_relative_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoefficientSample {
    pub grid: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub declared: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub problem: String,
    pub mode: Mode,
    pub theta: f64,
    pub theta_prime: f64,
    pub levels: usize,
    pub final_elements: usize,
    pub rates: Rates,
    pub constants: Constants,
    pub coefficient: CoefficientSample,
    pub checks: Vec<Check>,
}

/// Largest factor by which `values[k]`, `k > base`, deviates from `values[base]`.
fn drift(values: &[Option<f64>], base: usize, last: usize) -> Option<f64> {
    let b = (*values.get(base)?)?;
    let mut worst: Option<f64> = None;
    for v in values.iter().take(last + 1).skip(base + 1) {
        let v = (*v)?;
        let f = (v / b).max(b / v);
        worst = Some(worst.map_or(f, |w: f64| w.max(f)));
    }
    worst
}

fn max_of(it: impl Iterator<Item = f64>) -> Option<f64> {
    it.filter(|v| !v.is_nan()).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
}

/// Collects rates, observed constants and checks of a finished run.
pub fn summarize(
    problem: &ProblemSpec,
    config: &RunConfig,
    output: &RunOutput,
    expectations: &[RateExpectation],
) -> Summary {
    let records = &output.records;
    let window = records.len().min(8);
    let rate = |f| adaptivity::fit_rate(records, f, window).ok();
    let rates = Rates {
        window,
        eta: rate(RecordField::Eta),
        osc: rate(RecordField::Osc),
        energy_error: rate(RecordField::EnergyError),
        fem_energy_error: rate(RecordField::FemEnergyError),
    };

    let rel: Vec<Option<f64>> = records
        .iter()
        .map(|r| (r.energy_error.is_finite() && r.eta > 0.0).then(|| r.energy_error / r.eta))
        .collect();
    let eff: Vec<Option<f64>> = records
        .iter()
        .map(|r| {
            let d = (r.energy_error * r.energy_error + r.osc * r.osc).sqrt();
            (d.is_finite() && d > 0.0).then(|| r.eta / d)
        })
        .collect();
    let last = records.len().saturating_sub(1);
    let defect: Vec<Option<f64>> = output.diagnostics.iter().map(|d| d.defect_constant).collect();
    let eta_reduction_geomean = (records.len() > 4).then(|| {
        let (a, b) = (records[3].eta, records[last].eta);
        (b / a).powf(1.0 / (last - 3) as f64)
    });
    let constants = Constants {
        reliability_max: max_of(rel.iter().flatten().copied()),
        efficiency_max: max_of(eff.iter().flatten().copied()),
        reliability_drift: drift(&rel, 5, last),
        efficiency_drift: drift(&eff, 5, last),
        ratio_card_max: max_of(records.iter().map(|r| r.ratio_card)),
        osc_fraction_eta_min: max_of(records.iter().map(|r| -r.osc_fraction_eta)).map(|v| -v),
        eta_reduction_geomean,
        defect_constant_max: max_of(defect.iter().take(11).skip(2).flatten().copied()),
        defect_drift: drift(&defect, 4, 10.min(last)),
        max_relative_residual: max_of(output.diagnostics.iter().map(|d| d.relative_residual)).unwrap_or(0.0),
    };

    let grid = 401;
    let sample = problem.sampled_eigenvalue_range(grid);
    let coefficient = CoefficientSample {
        grid,
        lambda_min: sample.min_lower,
        lambda_max: sample.max_upper,
        declared: problem.lambda_bounds,
    };

    let mut checks = Vec::new();
    if let Some((lo, hi)) = problem.lambda_bounds {
        checks.push(Check::new(
            "lambda_min_matches_declared",
            Some(sample.min_lower),
            format!("within 1e-3 of {lo}"),
            |v| (v - lo).abs() <= 1e-3,
        ));
        checks.push(Check::new(
            "lambda_max_matches_declared",
            Some(sample.max_upper),
            format!("within 1e-3 of {hi}"),
            |v| (v - hi).abs() <= 1e-3,
        ));
    }
    for e in expectations {
        let v = rate(e.field);
        let name = format!("rate_{}", e.field.name());
        checks.push(if e.lo == f64::NEG_INFINITY {
            Check::at_most(&name, v, e.hi)
        } else {
            Check::range(&name, v, e.lo, e.hi)
        });
    }
    if config.mode == Mode::Adaptive {
        checks.push(Check::at_most("ratio_card_max", constants.ratio_card_max, 2.0));
        checks.push(Check::at_least("osc_fraction_eta_min", constants.osc_fraction_eta_min, 0.02));
        checks.push(Check::at_most("eta_reduction_geomean", constants.eta_reduction_geomean, 0.98));
    }
    // drift checks need levels beyond the reference level
    if constants.reliability_drift.is_some() {
        checks.push(Check::at_most("reliability_drift", constants.reliability_drift, 3.0));
    }
    if constants.efficiency_drift.is_some() {
        checks.push(Check::at_most("efficiency_drift", constants.efficiency_drift, 3.0));
    }
    if constants.defect_drift.is_some() {
        checks.push(Check::at_most("defect_drift", constants.defect_drift, 2.0));
    }
    checks.push(Check::at_most("max_relative_residual", Some(constants.max_relative_residual), 1e-10));

    Summary {
        problem: problem.label.clone(),
        mode: config.mode,
        theta: config.theta,
        theta_prime: config.theta_prime,
        levels: records.len(),
        final_elements: records.last().map_or(0, |r| r.n_elements),
        rates,
        constants,
        coefficient,
        checks,
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] AdaptiveError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl ExperimentError {
    /// Whether the failure is a bad configuration rather than a numerical one.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            ExperimentError::Config(_)
                | ExperimentError::Run(AdaptiveError::Mark(
                    MarkError::InvalidTheta(_) | MarkError::InvalidThetaPrime { .. }
                ))
        )
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub records_path: PathBuf,
    pub summary_path: PathBuf,
    pub summary: Summary,
    pub run: RunOutput,
}

/// Validates the configuration, runs it, and writes `records.csv` and
/// `summary.json` (plus `fvm_matrix.txt` with `matrix_dump`) into `out`.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentOutput, ExperimentError> {
    config.validate()?;
    let problem = config.load_problem()?;
    let opts = config.options(&problem);
    let mut run = match config.mode {
        Mode::Adaptive => adaptivity::run_adaptive(&problem, &opts)?,
        Mode::Uniform => adaptivity::run_uniform(&problem, config.levels.unwrap_or(1), &opts)?,
    };
    if !config.timings {
        for r in &mut run.records {
            r.wall_ms_solve = 0.0;
            r.wall_ms_estimate = 0.0;
            r.wall_ms_refine = 0.0;
        }
    }
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    };
    fs::create_dir_all(&config.out).map_err(io_err(&config.out))?;
    let records_path = config.out.join("records.csv");
    write_records_csv(&run.records, &records_path)?;

    let summary = summarize(&problem, config, &run, &default_expectations(&problem.label, config.mode));
    let summary_path = config.out.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&summary_path, text + "\n").map_err(io_err(&summary_path))?;

    if config.matrix_dump {
        let dual = DualMesh::build(&run.final_mesh);
        let system = discretization::assemble_fvm(&dual, &problem);
        let path = config.out.join("fvm_matrix.txt");
        fs::write(&path, system.matrix.to_coordinate_string()).map_err(io_err(&path))?;
    }
    Ok(ExperimentOutput { records_path, summary_path, summary, run })
}
