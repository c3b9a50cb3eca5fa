use std::process::Command;

fn jadce(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_jadce"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

const TINY: &str = r#"{"N": 40, "L_values": [10], "M_values": [8, 16], "K_values": [4],
  "solvers": ["cl-sca", "cl-mp"], "trials": 5, "master_seed": 3}"#;

#[test]
fn simulate_reports_support_and_metrics() {
    let (code, out, _) = jadce(&[
        "simulate", "--N", "50", "--L", "12", "--M", "30", "--K", "4", "--seed", "2",
    ]);
    assert_eq!(code, 0);
    let line = |key: &str| {
        out.lines()
            .find(|l| l.starts_with(key))
            .unwrap_or_else(|| panic!("{key} in {out}"))
            .to_string()
    };
    let support = line("estimated support:");
    assert_eq!(support.matches(',').count(), 3, "{support}");
    let p_md: f64 = line("p_md:")["p_md:".len()..].trim().parse().unwrap();
    assert!((0.0..=1.0).contains(&p_md));
    assert!(
        line("nmse:")["nmse:".len()..]
            .trim()
            .parse::<f64>()
            .unwrap()
            > 0.0
    );
    assert!(out.contains("#time "));
}

#[test]
fn simulate_is_reproducible_apart_from_timing() {
    let strip = |s: String| {
        s.lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let args = [
        "simulate", "--N", "40", "--L", "10", "--M", "10", "--K", "3", "--solver", "cwo", "--seed",
        "5",
    ];
    assert_eq!(strip(jadce(&args).1), strip(jadce(&args).1));
}

#[test]
fn simulate_writes_json_and_channel_dump() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("run.json");
    let dump = dir.path().join("xhat.bin");
    let (code, _, err) = jadce(&[
        "simulate",
        "--N",
        "30",
        "--L",
        "8",
        "--M",
        "6",
        "--K",
        "2",
        "--json",
        json.to_str().unwrap(),
        "--xhat",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(summary["support"].as_array().unwrap().len(), 2);
    let x = jadce::jadce::load_channel_dump(&dump).unwrap();
    assert_eq!(x.shape(), (30, 6));
}

#[test]
fn bench_writes_csv_with_exact_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.json");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("out.csv");
    let (code, _, err) = jadce(&[
        "bench",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(err.contains("[4/4]"), "{err}");
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "solver,L,M,K,trials,p_md,p_md_se,nmse,nmse_se,time_s,iters"
    );
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("cl-sca,10,8,4,5,"));
}

#[test]
fn bench_overrides_and_json_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.json");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("out.json");
    let (code, _, err) = jadce(&[
        "bench",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--override",
        "M_values=[8]",
        "--override",
        "solvers=[\"cwo\"]",
    ]);
    assert_eq!(code, 0, "{err}");
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["solver"], "cwo");
    assert_eq!(rows[0]["trials"], 5);
}

#[test]
fn bench_rejects_malformed_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"L_values": [10], "M_values": [8], "K_values": [4], "solvers": ["cl-sca"], "trails": 3}"#).unwrap();
    let out = dir.path().join("out.csv");
    let (code, _, err) = jadce(&[
        "bench",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("trails"), "{err}");
    assert!(!out.exists());

    let (code, _, err) = jadce(&[
        "bench",
        "--config",
        "/nonexistent.json",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn unknown_solver_lists_valid_names() {
    let (code, _, err) = jadce(&["simulate", "--solver", "omp"]);
    assert_eq!(code, 2);
    for name in ["cl-sca", "cwo", "cl-mp", "msbl-em"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn verify_passes_and_filters() {
    let (code, out, _) = jadce(&["verify", "--seeds", "5"]);
    assert_eq!(code, 0, "{out}");
    assert_eq!(out.lines().count(), 5);
    assert!(out.lines().all(|l| l.contains("PASS")));
    let (code, out, _) = jadce(&["verify", "--seeds", "3", "--oracle", "gradient"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 1);
    assert!(out.starts_with("gradient"));
}
