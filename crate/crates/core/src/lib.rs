//! Adaptive vertex-centered finite volume method for `-div(A ∇u) = f` on
//! polygonal domains in 2D, with Dirichlet boundary data.
//!
//! One level of the adaptive loop solves the box-method system on the
//! current triangulation, evaluates the weighted-residual estimator and the
//! data oscillations, marks elements by the two-stage Dörfler criterion and
//! refines by newest vertex bisection:
//!
//! ```no_run
//! use afvm_core::{problem, run_adaptive, AdaptiveOptions};
//!
//! let p = problem::square_smooth();
//! let mut opts = AdaptiveOptions::default();
//! opts.stop.max_elements = 10_000;
//! let out = run_adaptive(&p, &opts).unwrap();
//! for r in &out.records {
//!     println!("{} {} {:e}", r.level, r.n_elements, r.eta);
//! }
//! ```

#![allow(clippy::needless_range_loop)]

pub mod adaptivity;
pub mod discretization;
pub mod dual;
pub mod estimator;
pub mod expr;
pub mod geometry;
pub mod mesh;
pub mod nvb;
pub mod problem;
pub mod quadrature;
pub mod report;
pub mod sparse;

pub use adaptivity::{
    doerfler_mark, fit_rate, run_adaptive, run_uniform, two_stage_mark, AdaptiveError, AdaptiveOptions,
    AdaptiveRecord, LevelDiagnostics, MarkError, MarkResult, RecordField, RunOutput, StopCriteria,
};
pub use discretization::{assemble_fem, assemble_fvm, energy_error, solve_system, AssembledSystem};
pub use dual::DualMesh;
pub use estimator::{compute_estimator, EstimatorOutput};
pub use geometry::{Mat2, Point};
pub use mesh::{MeshError, MeshFile, Triangulation};
pub use nvb::{refine, refine_uniform, RefineError, RefinementResult};
pub use problem::{Coefficient, ProblemError, ProblemSpec};
pub use report::{read_records_csv, run_experiment, write_records_csv, ConfigError, Mode, RunConfig, Summary};
pub use sparse::{CsrMatrix, LinearSolveReport, SolveMethod, SolveOptions};
