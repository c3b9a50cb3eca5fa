//! Command-line front end: `simulate`, `bench` and `verify`.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bench::{
    emit_results, run_experiment_with, runtime_comparison, ExperimentSpec, OutputFormat,
};
use crate::jadce::{
    nmse, prob_missed_detection, run_jadce_with, save_channel_dump, DetectionRule, JadceInput,
    RunOptions,
};
use crate::model::{generate_scenario, Dims};
use crate::rng::{stream_rng, trial_stream};
use crate::solvers::{SolverConfig, SolverKind};
use crate::verify::{run_oracle, Oracle};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "jadce",
    version,
    about = "Joint activity detection and channel estimation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one trial and print the detected support and error metrics.
    Simulate(SimulateArgs),
    /// Run a Monte-Carlo sweep described by a JSON config.
    Bench(BenchArgs),
    /// Check the closed-form updates against independent numerical oracles.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long = "N", default_value_t = 300)]
    pub n: usize,
    #[arg(long = "L", default_value_t = 30)]
    pub l: usize,
    #[arg(long = "M", default_value_t = 40)]
    pub m: usize,
    #[arg(long = "K", default_value_t = 20)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long, value_enum, default_value_t = SolverKind::ClSca)]
    pub solver: SolverKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Detect by threshold on the estimated power instead of top-K.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Write support and powers as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write the channel estimate as a binary dump.
    #[arg(long)]
    pub xhat: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// `key=value` applied to the config before parsing; the value is JSON,
    /// or a plain string if it does not parse.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub output: PathBuf,
    /// Defaults to the output file extension.
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Replaces `master_seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run every trial on one thread for cleaner timings.
    #[arg(long)]
    pub serial: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 50)]
    pub seeds: u64,
    #[arg(long, value_enum)]
    pub oracle: Option<Oracle>,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code: 0 success, 1 numerical or check failure,
/// 2 usage or configuration error.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a, out),
        Command::Bench(a) => bench(&a, out, err),
        Command::Verify(a) => verify(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

fn list(xs: &[usize]) -> String {
    let items: Vec<String> = xs.iter().map(usize::to_string).collect();
    format!("[{}]", items.join(", "))
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let dims = Dims::new(a.n, a.l, a.m, a.k)?;
    if !(a.sigma2 > 0.0 && a.sigma2.is_finite()) {
        return Err(Error::Config(format!(
            "--sigma2 must be positive, got {}",
            a.sigma2
        )));
    }
    let rule = match a.threshold {
        Some(t) => DetectionRule::Threshold(t),
        None => DetectionRule::TopK(a.k),
    };
    let mut rng = stream_rng(a.seed, trial_stream(a.n, a.l, a.m, a.k, 0));
    let scenario = generate_scenario(dims, a.sigma2, &mut rng)?;
    let input = JadceInput::from_scenario(&scenario);
    let options = RunOptions {
        sparsity: Some(a.k),
        with_covariance: false,
    };
    let result = run_jadce_with(&input, a.solver, rule, &SolverConfig::default(), options)?;

    let truth = scenario.activity.support();
    writeln!(out, "solver: {}", a.solver)?;
    writeln!(
        out,
        "dims: N={} L={} M={} K={} sigma2={}",
        a.n, a.l, a.m, a.k, a.sigma2
    )?;
    writeln!(out, "true support: {}", list(truth))?;
    writeln!(out, "estimated support: {}", list(&result.support_hat))?;
    match prob_missed_detection(truth, &result.support_hat) {
        Ok(p) => writeln!(out, "p_md: {p}")?,
        Err(_) => writeln!(out, "p_md: n/a")?,
    }
    match nmse(&result.x_hat, &scenario.effective_channels) {
        Ok(e) => writeln!(out, "nmse: {e}")?,
        Err(_) => writeln!(out, "nmse: n/a")?,
    }
    let status = if result.solver.converged {
        "converged"
    } else {
        "not converged"
    };
    writeln!(out, "iterations: {} ({status})", result.solver.iterations)?;
    writeln!(out, "#time solver_s={:.6}", result.solver.wall_time)?;

    if let Some(path) = &a.json {
        std::fs::write(
            path,
            serde_json::to_string_pretty(&result.summary(a.solver))? + "\n",
        )?;
    }
    if let Some(path) = &a.xhat {
        save_channel_dump(path, &result.x_hat)?;
    }
    Ok(0)
}

/// Applies `key=value` overrides to a JSON object.
pub fn apply_overrides(config: &mut serde_json::Value, overrides: &[String]) -> Result<()> {
    let obj = config
        .as_object_mut()
        .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
    for item in overrides {
        let (key, value) = item.split_once('=').ok_or_else(|| {
            Error::Config(format!("override '{item}' is not of the form key=value"))
        })?;
        let value = serde_json::from_str(value)
            .unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        obj.insert(key.trim().to_string(), value);
    }
    Ok(())
}

pub fn load_spec(
    path: &std::path::Path,
    overrides: &[String],
    seed: Option<u64>,
) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)?;
    apply_overrides(&mut value, overrides)?;
    let mut spec: ExperimentSpec = serde_json::from_value(value)?;
    if let Some(s) = seed {
        spec.master_seed = s;
    }
    spec.validate()?;
    Ok(spec)
}

fn bench(a: &BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let spec = load_spec(&a.config, &a.overrides, a.seed)?;
    let format = a
        .format
        .unwrap_or_else(|| OutputFormat::from_path(&a.output));
    let total = spec.cells().len();
    let mut done = 0;
    let mut progress = |row: &crate::bench::ResultRow| {
        done += 1;
        let _ = writeln!(
            err,
            "[{done}/{total}] solver={} L={} M={} K={} p_md={:.5} nmse={:.5} iters={:.1}",
            row.solver, row.l, row.m, row.k, row.p_md_mean, row.nmse_mean, row.mean_iterations
        );
    };
    let rows = if a.serial {
        let serial = ExperimentSpec {
            workers: Some(1),
            ..spec
        };
        let rows = runtime_comparison(&serial)?;
        rows.iter().for_each(&mut progress);
        rows
    } else {
        run_experiment_with(&spec, &mut progress)?
    };
    for row in &rows {
        writeln!(
            out,
            "#time solver={} L={} M={} K={} time_s={:.6e}",
            row.solver, row.l, row.m, row.k, row.mean_solver_time_s
        )?;
    }
    emit_results(&rows, &a.output, format)?;
    writeln!(out, "wrote {} rows to {}", rows.len(), a.output.display())?;
    Ok(0)
}

fn verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    if a.seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    let oracles: Vec<Oracle> = match a.oracle {
        Some(o) => vec![o],
        None => Oracle::ALL.to_vec(),
    };
    let mut all_passed = true;
    for oracle in oracles {
        let report = run_oracle(oracle, a.seeds)?;
        all_passed &= report.passed;
        writeln!(out, "{report}")?;
    }
    Ok(if all_passed { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(
            std::iter::once("jadce").chain(args.iter().copied()),
            &mut o,
            &mut e,
        );
        (
            code,
            String::from_utf8(o).unwrap(),
            String::from_utf8(e).unwrap(),
        )
    }

    #[test]
    fn overrides_replace_and_add_keys() {
        let mut v = serde_json::json!({"trials": 1000, "solvers": ["cl-sca"]});
        apply_overrides(
            &mut v,
            &[
                "trials=5".into(),
                "solvers=[\"cwo\"]".into(),
                "detection=top_k".into(),
            ],
        )
        .unwrap();
        assert_eq!(v["trials"], 5);
        assert_eq!(v["solvers"][0], "cwo");
        assert_eq!(v["detection"], "top_k");
        assert!(apply_overrides(&mut v, &["novalue".into()]).is_err());
    }

    #[test]
    fn simulate_prints_report() {
        let (code, out, _) = run_capture(&[
            "simulate", "--N", "30", "--L", "10", "--M", "20", "--K", "3", "--solver", "cwo",
        ]);
        assert_eq!(code, 0);
        assert!(out.contains("estimated support: ["), "{out}");
        assert!(out.contains("p_md: "));
        assert!(out.contains("#time solver_s="));
    }

    #[test]
    fn simulate_with_no_active_devices_reports_na() {
        let (code, out, _) =
            run_capture(&["simulate", "--N", "20", "--L", "8", "--M", "4", "--K", "0"]);
        assert_eq!(code, 0);
        assert!(out.contains("nmse: n/a"), "{out}");
        assert!(out.contains("p_md: n/a"), "{out}");
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run_capture(&["simulate", "--N", "10", "--K", "11"]).0, 2);
        assert_eq!(run_capture(&["simulate", "--solver", "bogus"]).0, 2);
        assert_eq!(run_capture(&["simulate", "--sigma2", "-1"]).0, 2);
        assert_eq!(run_capture(&["frobnicate"]).0, 2);
        assert_eq!(run_capture(&["verify", "--seeds", "0"]).0, 2);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("simulate"));
    }
}
