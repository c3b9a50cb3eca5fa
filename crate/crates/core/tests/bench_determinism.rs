use jadce::bench::{read_results, DetectionTemplate, OutputFormat};
use jadce::prelude::*;

fn spec() -> ExperimentSpec {
    ExperimentSpec::from_json(
        r#"{"N": 50, "L_values": [12], "M_values": [10], "K_values": [3, 6],
            "solvers": ["cl-sca", "cwo", "cl-mp", "msbl-em"], "trials": 8, "master_seed": 77}"#,
    )
    .unwrap()
}

fn metrics(rows: &[ResultRow]) -> Vec<(f64, f64, f64, f64, f64)> {
    rows.iter()
        .map(|r| {
            (
                r.p_md_mean,
                r.p_md_stderr,
                r.nmse_mean,
                r.nmse_stderr,
                r.mean_iterations,
            )
        })
        .collect()
}

#[test]
fn reruns_and_worker_counts_agree() {
    let a = run_experiment(&spec()).unwrap();
    let b = run_experiment(&ExperimentSpec {
        workers: Some(2),
        ..spec()
    })
    .unwrap();
    assert_eq!(a.len(), 8);
    assert_eq!(metrics(&a), metrics(&b));
}

#[test]
fn solvers_in_a_cell_see_the_same_scenarios() {
    let rows = run_experiment(&ExperimentSpec {
        k_values: vec![50],
        ..spec()
    })
    .unwrap();
    // with every device active nothing can be missed
    assert!(rows.iter().all(|r| r.p_md_mean == 0.0));
}

#[test]
fn seed_changes_results() {
    let a = run_experiment(&spec()).unwrap();
    let b = run_experiment(&ExperimentSpec {
        master_seed: 78,
        ..spec()
    })
    .unwrap();
    assert_ne!(metrics(&a), metrics(&b));
}

#[test]
fn threshold_detection_runs() {
    let rows = run_experiment(&ExperimentSpec {
        detection: DetectionTemplate::Threshold(0.01),
        solvers: vec![SolverKind::ClSca, SolverKind::ClMp],
        ..spec()
    })
    .unwrap();
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.p_md_mean)));
}

#[test]
fn results_roundtrip_through_files() {
    let rows = run_experiment(&spec()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for fmt in [OutputFormat::Csv, OutputFormat::Json] {
        let path = dir.path().join("rows");
        emit_results(&rows, &path, fmt).unwrap();
        let back = read_results(&path, fmt).unwrap();
        assert_eq!(back.len(), rows.len());
        for (x, y) in back.iter().zip(&rows) {
            assert_eq!((x.solver, x.l, x.m, x.k), (y.solver, y.l, y.m, y.k));
            assert!((x.nmse_mean - y.nmse_mean).abs() <= 1e-8 * y.nmse_mean);
        }
    }
}

#[test]
fn presets_parse_and_have_expected_size() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/presets");
    let cells = |name: &str| {
        ExperimentSpec::load(format!("{dir}/{name}"))
            .unwrap()
            .cells()
            .len()
    };
    assert_eq!(cells("fig1.json"), 3 * 7 * 3 * 4);
    assert_eq!(cells("fig2.json"), 2 * 3 * 4);
    assert_eq!(cells("fig3.json"), 7 * 3 * 2);
}
