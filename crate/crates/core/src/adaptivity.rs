//! Dörfler marking and the SOLVE, ESTIMATE, MARK, REFINE loop.

use std::cmp::Ordering;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretization::{self, DiscretizationError};
use crate::dual::DualMesh;
use crate::estimator::{self, EstimatorError, EstimatorOutput};
use crate::mesh::Triangulation;
use crate::nvb::{self, RefineError};
use crate::problem::ProblemSpec;
use crate::sparse::SolveOptions;

#[derive(Debug, Error, PartialEq)]
pub enum MarkError {
    #[error("theta must lie in (0,1], got {0}")]
    InvalidTheta(f64),
    #[error("theta_prime must lie in (0,theta], got {theta_prime} with theta = {theta}")]
    InvalidThetaPrime { theta: f64, theta_prime: f64 },
    #[error("indicator {index} is negative or not finite ({value})")]
    InvalidIndicator { index: usize, value: f64 },
    #[error("expected {expected} oscillation indicators, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("all indicators vanish")]
    AllZeroIndicators,
}

/// Checks `0 < theta_prime <= theta <= 1`.
pub fn validate_parameters(theta: f64, theta_prime: f64) -> Result<(), MarkError> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(MarkError::InvalidTheta(theta));
    }
    if !(theta_prime > 0.0 && theta_prime <= theta) {
        return Err(MarkError::InvalidThetaPrime { theta, theta_prime });
    }
    Ok(())
}

fn check_indicators(values: &[f64]) -> Result<(), MarkError> {
    match values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        Some(index) => Err(MarkError::InvalidIndicator { index, value: values[index] }),
        None => Ok(()),
    }
}

/// Element ids sorted by decreasing value, ties by increasing id.
fn sorted_desc(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| match values[b].partial_cmp(&values[a]) {
        Some(Ordering::Equal) | None => a.cmp(&b),
        Some(o) => o,
    });
    order
}

/// Smallest set `M` with `theta * Σ_T ind(T) <= Σ_{T ∈ M} ind(T)`: the
/// shortest prefix of the indicators sorted by decreasing value, with ties
/// broken by lower element id. Returned in increasing id order.
pub fn doerfler_mark(indicators_sq: &[f64], theta: f64) -> Result<Vec<usize>, MarkError> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(MarkError::InvalidTheta(theta));
    }
    check_indicators(indicators_sq)?;
    let order = sorted_desc(indicators_sq);
    // summing in the same order as the prefix makes theta = 1 reachable exactly
    let total: f64 = order.iter().map(|&t| indicators_sq[t]).sum();
    if total == 0.0 {
        return Err(MarkError::AllZeroIndicators);
    }
    let goal = theta * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for &t in &order {
        if acc >= goal {
            break;
        }
        acc += indicators_sq[t];
        marked.push(t);
    }
    marked.sort_unstable();
    Ok(marked)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkResult {
    /// Dörfler set for the estimator.
    pub marked_eta: Vec<usize>,
    /// Superset of `marked_eta` that also satisfies the oscillation criterion.
    pub marked: Vec<usize>,
    /// `#marked / #marked_eta`.
    pub ratio_card: f64,
    /// `osc(marked_eta)² / osc²`; 1 when `osc = 0`.
    pub osc_fraction_eta: f64,
    /// `osc(marked)² / osc²`; 1 when `osc = 0`.
    pub osc_fraction: f64,
    /// `η(marked_eta)² / η²`.
    pub eta_fraction: f64,
}

/// Marks by the estimator, then extends the set by the largest remaining
/// oscillation indicators until `theta_prime * osc² <= osc(M)²`.
pub fn two_stage_mark(
    eta_sq: &[f64],
    osc_sq: &[f64],
    theta: f64,
    theta_prime: f64,
) -> Result<MarkResult, MarkError> {
    validate_parameters(theta, theta_prime)?;
    if osc_sq.len() != eta_sq.len() {
        return Err(MarkError::LengthMismatch { expected: eta_sq.len(), got: osc_sq.len() });
    }
    check_indicators(osc_sq)?;
    let marked_eta = doerfler_mark(eta_sq, theta)?;
    let eta_total: f64 = eta_sq.iter().sum();
    let eta_marked: f64 = marked_eta.iter().map(|&t| eta_sq[t]).sum();

    let order = sorted_desc(osc_sq);
    let osc_total: f64 = order.iter().map(|&t| osc_sq[t]).sum();
    let osc_eta: f64 = marked_eta.iter().map(|&t| osc_sq[t]).sum();
    let mut marked = marked_eta.clone();
    let mut osc_marked = osc_eta;
    if osc_total > 0.0 {
        let goal = theta_prime * osc_total;
        let mut in_set = vec![false; eta_sq.len()];
        for &t in &marked_eta {
            in_set[t] = true;
        }
        for &t in &order {
            if osc_marked >= goal {
                break;
            }
            if !in_set[t] {
                in_set[t] = true;
                marked.push(t);
                osc_marked += osc_sq[t];
            }
        }
        marked.sort_unstable();
    }
    let fraction = |x: f64| if osc_total > 0.0 { x / osc_total } else { 1.0 };
    Ok(MarkResult {
        ratio_card: marked.len() as f64 / marked_eta.len() as f64,
        osc_fraction_eta: fraction(osc_eta),
        osc_fraction: fraction(osc_marked),
        eta_fraction: eta_marked / eta_total,
        marked_eta,
        marked,
    })
}

/// When the loop stops; the first satisfied criterion wins.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopCriteria {
    /// Stop once a level has at least this many elements.
    pub max_elements: usize,
    /// Maximal number of levels (records).
    pub max_levels: usize,
    /// Stop once `η <= eta_tol`.
    pub eta_tol: f64,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self {
            max_elements: 3_000_000,
            max_levels: usize::MAX,
            eta_tol: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveOptions {
    pub theta: f64,
    pub theta_prime: f64,
    pub stop: StopCriteria,
    /// Also solve the finite element system on every level (needs an exact
    /// solution to report its error; the defect monitor works without).
    pub fem_compare: bool,
    pub solve: SolveOptions,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            theta: 0.5,
            theta_prime: 0.5,
            stop: StopCriteria::default(),
            fem_compare: true,
            solve: SolveOptions::default(),
        }
    }
}

/// One row of `records.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveRecord {
    pub level: usize,
    pub n_elements: usize,
    pub n_nodes: usize,
    pub eta: f64,
    pub osc: f64,
    /// `NaN` without an exact solution.
    pub energy_error: f64,
    /// `NaN` without an exact solution or finite element comparison.
    pub fem_energy_error: f64,
    pub ratio_card: f64,
    pub osc_fraction_eta: f64,
    /// Shape regularity `max_T diam(T)² / |T|`.
    pub sigma: f64,
    pub solve_iters: usize,
    /// Assembly and solve of the finite volume system.
    pub wall_ms_solve: f64,
    pub wall_ms_estimate: f64,
    /// Refinement of this level's mesh; zero on the last level.
    pub wall_ms_refine: f64,
}

/// Per-level quantities that do not go into the CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelDiagnostics {
    pub level: usize,
    pub solver: &'static str,
    pub relative_residual: f64,
    pub n_marked_eta: usize,
    pub n_marked: usize,
    pub eta_fraction: f64,
    pub osc_fraction: f64,
    /// `|A(u_fem - u_fvm, v)| / (|||v||| osc)` with `v = u_fem - u_fvm`.
    pub defect_constant: Option<f64>,
    /// `|||u_fem - u_fvm|||` in the discrete energy norm.
    pub fem_fvm_distance: Option<f64>,
    pub min_angle: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<AdaptiveRecord>,
    pub diagnostics: Vec<LevelDiagnostics>,
    pub final_mesh: Triangulation,
    /// Finite volume solution on `final_mesh`.
    pub final_solution: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum AdaptiveError {
    #[error("linear solve failed on level {level}: {source}")]
    SolverFailure {
        level: usize,
        source: DiscretizationError,
        /// Records of the completed levels.
        partial: Vec<AdaptiveRecord>,
    },
    #[error(transparent)]
    Mark(#[from] MarkError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Discretization(#[from] DiscretizationError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Adaptive,
    Uniform,
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Runs the adaptive algorithm from the problem's initial mesh.
pub fn run_adaptive(problem: &ProblemSpec, opts: &AdaptiveOptions) -> Result<RunOutput, AdaptiveError> {
    validate_parameters(opts.theta, opts.theta_prime)?;
    run(problem, opts, Mode::Adaptive)
}

/// Same measurements with uniform refinement (every element split into four)
/// for `n_levels` levels.
pub fn run_uniform(problem: &ProblemSpec, n_levels: usize, opts: &AdaptiveOptions) -> Result<RunOutput, AdaptiveError> {
    let mut opts = *opts;
    opts.stop.max_levels = opts.stop.max_levels.min(n_levels);
    run(problem, &opts, Mode::Uniform)
}

fn run(problem: &ProblemSpec, opts: &AdaptiveOptions, mode: Mode) -> Result<RunOutput, AdaptiveError> {
    let mut mesh = problem.initial_mesh.clone();
    let mut records: Vec<AdaptiveRecord> = Vec::new();
    let mut diagnostics = Vec::new();
    let has_exact = problem.exact.is_some();
    for level in 0.. {
        // SOLVE
        let start = Instant::now();
        let dual = DualMesh::build(&mesh);
        let system = discretization::assemble_fvm(&dual, problem);
        let (u, report) = match discretization::solve_system(&system, &opts.solve) {
            Ok(out) => out,
            Err(source) => {
                return Err(AdaptiveError::SolverFailure { level, source, partial: records });
            }
        };
        let wall_ms_solve = ms(start);

        // ESTIMATE
        let start = Instant::now();
        let est: EstimatorOutput = estimator::compute_estimator(&mesh, problem, &u)?;
        let wall_ms_estimate = ms(start);

        let energy_error = if has_exact {
            discretization::energy_error(&mesh, problem, &u)?
        } else {
            f64::NAN
        };
        let mut fem_energy_error = f64::NAN;
        let mut defect_constant = None;
        let mut fem_fvm_distance = None;
        if opts.fem_compare {
            let fem = discretization::assemble_fem(&mesh, problem);
            let (u_fem, _) = match discretization::solve_system(&fem, &opts.solve) {
                Ok(out) => out,
                Err(source) => {
                    return Err(AdaptiveError::SolverFailure { level, source, partial: records });
                }
            };
            if has_exact {
                fem_energy_error = discretization::energy_error(&mesh, problem, &u_fem)?;
            }
            let diff: Vec<f64> = u_fem.iter().zip(&u).map(|(a, b)| a - b).collect();
            let d = discretization::galerkin_defect(&fem, &u, &u_fem, &diff, est.osc())?;
            defect_constant = d.constant;
            fem_fvm_distance = Some(d.test_energy);
        }

        // MARK
        let marks = match mode {
            Mode::Adaptive => match two_stage_mark(&est.eta_sq, &est.osc_sq, opts.theta, opts.theta_prime) {
                Ok(m) => Some(m),
                Err(MarkError::AllZeroIndicators) => None,
                Err(e) => return Err(e.into()),
            },
            Mode::Uniform => {
                let all: Vec<usize> = (0..mesh.n_elements()).collect();
                Some(MarkResult {
                    marked_eta: all.clone(),
                    marked: all,
                    ratio_card: 1.0,
                    osc_fraction_eta: 1.0,
                    osc_fraction: 1.0,
                    eta_fraction: 1.0,
                })
            }
        };
        let (ratio_card, osc_fraction_eta) = marks
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |m| (m.ratio_card, m.osc_fraction_eta));

        records.push(AdaptiveRecord {
            level,
            n_elements: mesh.n_elements(),
            n_nodes: mesh.n_vertices(),
            eta: est.eta(),
            osc: est.osc(),
            energy_error,
            fem_energy_error,
            ratio_card,
            osc_fraction_eta,
            sigma: mesh.shape_regularity(),
            solve_iters: report.iterations,
            wall_ms_solve,
            wall_ms_estimate,
            wall_ms_refine: 0.0,
        });
        diagnostics.push(LevelDiagnostics {
            level,
            solver: report.method,
            relative_residual: report.relative_residual,
            n_marked_eta: marks.as_ref().map_or(0, |m| m.marked_eta.len()),
            n_marked: marks.as_ref().map_or(0, |m| m.marked.len()),
            eta_fraction: marks.as_ref().map_or(f64::NAN, |m| m.eta_fraction),
            osc_fraction: marks.as_ref().map_or(f64::NAN, |m| m.osc_fraction),
            defect_constant,
            fem_fvm_distance,
            min_angle: mesh.min_angle(),
        });

        let stop = marks.is_none()
            || est.eta() <= opts.stop.eta_tol
            || level + 1 >= opts.stop.max_levels
            || mesh.n_elements() >= opts.stop.max_elements;
        if stop {
            return Ok(RunOutput {
                records,
                diagnostics,
                final_mesh: mesh,
                final_solution: u,
            });
        }

        // REFINE
        let start = Instant::now();
        let marks = marks.expect("checked above");
        let refined = match mode {
            Mode::Adaptive => nvb::refine(&mesh, &marks.marked)?,
            Mode::Uniform => nvb::refine_uniform(&mesh)?,
        };
        mesh = refined.mesh;
        records.last_mut().expect("pushed above").wall_ms_refine = ms(start);
    }
    unreachable!("the level loop only exits by returning")
}

/// Columns of [`AdaptiveRecord`] that can be fitted against `n_elements`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordField {
    Eta,
    Osc,
    EnergyError,
    FemEnergyError,
}

impl RecordField {
    pub fn get(self, r: &AdaptiveRecord) -> f64 {
        match self {
            RecordField::Eta => r.eta,
            RecordField::Osc => r.osc,
            RecordField::EnergyError => r.energy_error,
            RecordField::FemEnergyError => r.fem_energy_error,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RecordField::Eta => "eta",
            RecordField::Osc => "osc",
            RecordField::EnergyError => "energy_error",
            RecordField::FemEnergyError => "fem_energy_error",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RateError {
    #[error("need at least 3 records in the window, have {have} (window {window})")]
    InsufficientData { have: usize, window: usize },
    #[error("{field} is not positive and finite on level {level}")]
    NonPositive { field: &'static str, level: usize },
}

/// Least-squares slope of `log(field)` against `log(n_elements)` over the
/// last `window` records.
pub fn fit_rate(records: &[AdaptiveRecord], field: RecordField, window: usize) -> Result<f64, RateError> {
    if window < 3 || records.len() < window {
        return Err(RateError::InsufficientData { have: records.len().min(window), window });
    }
    let tail = &records[records.len() - window..];
    let mut pts = Vec::with_capacity(window);
    for r in tail {
        let y = field.get(r);
        if !(y.is_finite() && y > 0.0) {
            return Err(RateError::NonPositive { field: field.name(), level: r.level });
        }
        pts.push(((r.n_elements as f64).ln(), y.ln()));
    }
    Ok(least_squares_slope(&pts))
}

/// Slope of the least-squares line through `(x, y)` pairs.
pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
