use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};

use afvm_core::report::{self, ExperimentError, Mode, RunConfig};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Adaptive,
    Uniform,
}

/// Adaptive vertex-centered finite volume solver for -div(A grad u) = f.
///
/// Writes records.csv (one row per level) and summary.json (fitted rates,
/// observed constants and checks) into the output directory.
#[derive(Debug, Parser)]
#[command(name = "afvm", version)]
struct Args {
    /// Builtin problem (square-smooth, lshape-singular) or path to a JSON config.
    #[arg(long, default_value = "square-smooth")]
    problem: String,

    /// Dörfler parameter for the estimator, in (0, 1].
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    theta: f64,

    /// Dörfler parameter for the oscillations, in (0, theta].
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    theta_prime: f64,

    #[arg(long, value_enum, default_value = "adaptive")]
    mode: ModeArg,

    /// Stop once a level has at least this many elements.
    #[arg(long, default_value_t = 3_000_000)]
    max_elements: usize,

    /// Number of levels (required for uniform refinement).
    #[arg(long)]
    levels: Option<usize>,

    /// Stop once the estimator drops below this value.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    eta_tol: f64,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Also solve the finite element system on every level (default: when an
    /// exact solution is known).
    #[arg(long, overrides_with = "no_fem_compare")]
    fem_compare: bool,

    #[arg(long, overrides_with = "fem_compare")]
    no_fem_compare: bool,

    /// Write the finite volume matrix of the final level to fvm_matrix.txt.
    #[arg(long)]
    matrix_dump: bool,

    /// Write zeros instead of measured wall times, making records.csv reproducible.
    #[arg(long)]
    no_timings: bool,
}

impl Args {
    fn config(&self) -> RunConfig {
        RunConfig {
            problem: self.problem.clone(),
            theta: self.theta,
            theta_prime: self.theta_prime,
            mode: match self.mode {
                ModeArg::Adaptive => Mode::Adaptive,
                ModeArg::Uniform => Mode::Uniform,
            },
            max_elements: self.max_elements,
            levels: self.levels,
            eta_tol: self.eta_tol,
            out: self.out.clone(),
            fem_compare: match (self.fem_compare, self.no_fem_compare) {
                (true, _) => Some(true),
                (_, true) => Some(false),
                _ => None,
            },
            matrix_dump: self.matrix_dump,
            timings: !self.no_timings,
        }
    }
}

fn print_summary(out: &report::ExperimentOutput) -> anyhow::Result<()> {
    let s = &out.summary;
    let mode = match s.mode {
        Mode::Adaptive => "adaptive",
        Mode::Uniform => "uniform",
    };
    println!(
        "{} ({mode}): {} levels, {} elements on the last level",
        s.problem, s.levels, s.final_elements
    );
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    println!(
        "slopes over the last {} levels: eta {}, energy error {}, osc {}",
        s.rates.window,
        fmt(s.rates.eta),
        fmt(s.rates.energy_error),
        fmt(s.rates.osc)
    );
    for c in &s.checks {
        println!(
            "  [{}] {} = {} ({})",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            c.value.map_or("n/a".to_string(), |v| if v != 0.0 && v.abs() < 1e-3 {
                format!("{v:.3e}")
            } else {
                format!("{v:.6}")
            }),
            c.threshold
        );
    }
    let records = out.records_path.canonicalize().context("locating records.csv")?;
    println!("wrote {}", records.display());
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match report::run_experiment(&args.config()) {
        Ok(out) => match print_summary(&out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                _ if e.is_validation() => ExitCode::from(2),
                ExperimentError::Run(_) => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
