use std::sync::Arc;

use proptest::prelude::*;

use afvm_core::mesh::generators::diagonal_grid;
use afvm_core::problem::{self, Source};
use afvm_core::{
    compute_estimator, read_records_csv, refine, run_adaptive, run_uniform, two_stage_mark, write_records_csv,
    AdaptiveOptions, Coefficient, ProblemSpec, StopCriteria,
};

fn small(max_elements: usize) -> AdaptiveOptions {
    AdaptiveOptions {
        stop: StopCriteria {
            max_elements,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn adaptive_records_are_consistent() {
    let p = problem::lshape_singular();
    let out = run_adaptive(&p, &small(2_000)).unwrap();
    let recs = &out.records;
    assert_eq!(recs[0].n_elements, 12);
    for w in recs.windows(2) {
        assert!(w[1].n_elements > w[0].n_elements);
        assert_eq!(w[1].level, w[0].level + 1);
    }
    for r in recs {
        assert!(r.osc <= r.eta);
        assert!(r.ratio_card >= 1.0);
        assert!((0.0..=1.0).contains(&r.osc_fraction_eta));
        assert!(r.energy_error.is_finite() && r.fem_energy_error.is_finite());
        // the Galerkin solution is the energy-norm best approximation
        assert!(r.fem_energy_error <= r.energy_error * (1.0 + 1e-8));
    }
    assert!(recs.last().unwrap().n_elements >= 2_000);
    assert_eq!(out.final_mesh.n_elements(), recs.last().unwrap().n_elements);
    assert_eq!(out.final_solution.len(), out.final_mesh.n_vertices());
    for d in &out.diagnostics {
        assert!(d.relative_residual <= 1e-10, "level {}: {}", d.level, d.relative_residual);
    }
}

#[test]
fn adaptive_runs_are_deterministic() {
    let p = problem::square_smooth();
    let a = run_adaptive(&p, &small(500)).unwrap();
    let b = run_adaptive(&p, &small(500)).unwrap();
    let strip = |out: &afvm_core::RunOutput| {
        out.records
            .iter()
            .map(|r| (r.n_elements, r.eta.to_bits(), r.osc.to_bits(), r.energy_error.to_bits()))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn uniform_run_quadruples_elements() {
    let p = problem::square_smooth();
    let out = run_uniform(&p, 4, &AdaptiveOptions::default()).unwrap();
    let counts: Vec<usize> = out.records.iter().map(|r| r.n_elements).collect();
    assert_eq!(counts, vec![16, 64, 256, 1024]);
    assert!(out.records.iter().all(|r| r.ratio_card == 1.0));
}

#[test]
fn eta_tolerance_stops_the_loop() {
    let p = problem::square_smooth();
    let full = run_adaptive(&p, &small(1_000)).unwrap();
    let tol = full.records[4].eta * 1.000001;
    let mut opts = small(1_000_000);
    opts.stop.eta_tol = tol;
    let out = run_adaptive(&p, &opts).unwrap();
    assert_eq!(out.records.len(), 5);
    assert!(out.records.last().unwrap().eta <= tol);
}

#[test]
fn linear_exact_solution_is_reproduced() {
    // u = 1 + 2x - y with A constant: f = 0 and the discrete solution is exact
    let mesh = diagonal_grid(4, 3, [0.0, 0.0], [2.0, 1.0]).unwrap();
    let u = |x: [f64; 2]| 1.0 + 2.0 * x[0] - x[1];
    let p = ProblemSpec::new(
        "linear",
        mesh,
        Coefficient::constant([[3.0, 1.0], [1.0, 2.0]]),
        Source::constant(0.0),
        Arc::new(u),
        Some(problem::ExactSolution {
            u: Arc::new(u),
            grad: Some(Arc::new(|_| [2.0, -1.0])),
        }),
    )
    .unwrap();
    let out = run_adaptive(&p, &small(200)).unwrap();
    // only the algebraic error of the iterative solve remains
    for r in &out.records {
        assert!(r.energy_error < 1e-7, "level {}: {}", r.level, r.energy_error);
        assert!(r.eta < 1e-7, "level {}: eta {}", r.level, r.eta);
    }
}

#[test]
fn records_csv_round_trip() {
    let out = run_adaptive(&problem::lshape_singular(), &small(300)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.csv");
    write_records_csv(&out.records, &path).unwrap();
    let back = read_records_csv(&path).unwrap();
    assert_eq!(back.len(), out.records.len());
    for (a, b) in back.iter().zip(&out.records) {
        assert_eq!(a.n_elements, b.n_elements);
        assert_eq!(a.eta.to_bits(), b.eta.to_bits());
        assert_eq!(a.osc_fraction_eta.to_bits(), b.osc_fraction_eta.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // osc(T) <= eta(T) and the marking postconditions hold for arbitrary nodal values
    #[test]
    fn estimator_and_marking_invariants(
        values in proptest::collection::vec(-1.0f64..1.0, 41),
        marks in proptest::collection::vec(0usize..32, 1..6),
        theta in 0.05f64..1.0,
        ratio in 0.05f64..1.0,
    ) {
        let p = problem::square_smooth();
        let mesh = refine(&p.initial_mesh, &marks.iter().map(|m| m % 16).collect::<Vec<_>>()).unwrap().mesh;
        let nodal: Vec<f64> = (0..mesh.n_vertices()).map(|i| values[i % values.len()]).collect();
        let est = compute_estimator(&mesh, &p, &nodal).unwrap();
        for t in 0..mesh.n_elements() {
            prop_assert!(est.osc_sq[t] >= 0.0);
            prop_assert!(est.osc_sq[t] <= est.eta_sq[t] * (1.0 + 1e-12));
        }
        let theta_prime = theta * ratio;
        let m = two_stage_mark(&est.eta_sq, &est.osc_sq, theta, theta_prime).unwrap();
        let (eta_m, _) = est.subset_total(&m.marked_eta).unwrap();
        let (_, osc_m) = est.subset_total(&m.marked).unwrap();
        prop_assert!(eta_m >= theta * est.eta_sq_total * (1.0 - 1e-12));
        prop_assert!(osc_m >= theta_prime * est.osc_sq_total * (1.0 - 1e-12));
        prop_assert!(m.marked_eta.iter().all(|t| m.marked.contains(t)));
    }
}
