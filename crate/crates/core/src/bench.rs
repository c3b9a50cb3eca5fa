//! Monte-Carlo sweeps over `(L, M, K, solver)` with per-cell aggregation of
//! missed-detection rate, NMSE and solver time.

use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::jadce::{
    nmse, prob_missed_detection, run_jadce_with, DetectionRule, JadceInput, RunOptions,
};
use crate::model::{
    generate_pilots, generate_scenario, generate_scenario_with_pilots, Dims, PilotMatrix,
};
use crate::rng::{pilot_stream, stream_rng, trial_stream};
use crate::solvers::{SolverConfig, SolverKind};
use crate::{Error, Result};

/// Detection rule applied in every cell.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionTemplate {
    /// Top-K with the cell's `K`.
    #[default]
    TopK,
    Threshold(f64),
}

impl DetectionTemplate {
    pub fn rule(self, k: usize) -> DetectionRule {
        match self {
            DetectionTemplate::TopK => DetectionRule::TopK(k),
            DetectionTemplate::Threshold(t) => DetectionRule::Threshold(t),
        }
    }
}

fn default_n() -> usize {
    300
}
fn default_trials() -> usize {
    1000
}
fn default_noise_var() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
    #[serde(rename = "L_values")]
    pub l_values: Vec<usize>,
    #[serde(rename = "M_values")]
    pub m_values: Vec<usize>,
    #[serde(rename = "K_values")]
    pub k_values: Vec<usize>,
    pub solvers: Vec<SolverKind>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_noise_var")]
    pub noise_var: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub detection: DetectionTemplate,
    /// Keep one pilot matrix per `L` instead of redrawing it every trial.
    #[serde(default)]
    pub fixed_pilots: bool,
    /// Worker threads; `None` uses every core.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        for (name, list) in [
            ("L_values", &self.l_values),
            ("M_values", &self.m_values),
            ("K_values", &self.k_values),
        ] {
            if list.is_empty() {
                return bad(format!("{name} must not be empty"));
            }
            if list.contains(&0) {
                return bad(format!("{name} entries must be positive"));
            }
        }
        if self.solvers.is_empty() {
            return bad("solvers must not be empty".into());
        }
        if self.n == 0 {
            return bad("N must be positive".into());
        }
        if let Some(&k) = self.k_values.iter().find(|&&k| k > self.n) {
            return bad(format!("K={k} exceeds N={}", self.n));
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return bad(format!(
                "noise_var must be positive, got {}",
                self.noise_var
            ));
        }
        if let DetectionTemplate::Threshold(t) = self.detection {
            if !(t >= 0.0) {
                return bad(format!("threshold must be >= 0, got {t}"));
            }
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Every `(L, M, K, solver)` combination in output order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &l in &self.l_values {
            for &m in &self.m_values {
                for &k in &self.k_values {
                    for &solver in &self.solvers {
                        cells.push(Cell { l, m, k, solver });
                    }
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub l: usize,
    pub m: usize,
    pub k: usize,
    pub solver: SolverKind,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "solver={} L={} M={} K={}",
            self.solver, self.l, self.m, self.k
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub solver: SolverKind,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub trials: usize,
    #[serde(rename = "p_md")]
    pub p_md_mean: f64,
    #[serde(rename = "p_md_se")]
    pub p_md_stderr: f64,
    #[serde(rename = "nmse")]
    pub nmse_mean: f64,
    #[serde(rename = "nmse_se")]
    pub nmse_stderr: f64,
    #[serde(rename = "time_s")]
    pub mean_solver_time_s: f64,
    #[serde(rename = "iters")]
    pub mean_iterations: f64,
}

/// Per-trial measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub p_md: f64,
    pub nmse: f64,
    pub solver_time_s: f64,
    pub iterations: usize,
}

/// Runs trial `trial` of `cell`. The scenario depends only on
/// `(master_seed, N, L, M, K, trial)`.
pub fn run_trial(
    spec: &ExperimentSpec,
    cell: Cell,
    trial: u64,
    pilots: Option<&PilotMatrix>,
) -> Result<TrialOutcome> {
    let dims = Dims::new(spec.n, cell.l, cell.m, cell.k)?;
    let mut rng = stream_rng(
        spec.master_seed,
        trial_stream(spec.n, cell.l, cell.m, cell.k, trial),
    );
    let scenario = match pilots {
        Some(p) => generate_scenario_with_pilots(dims, p.clone(), spec.noise_var, &mut rng)?,
        None => generate_scenario(dims, spec.noise_var, &mut rng)?,
    };
    let input = JadceInput::from_scenario(&scenario);
    let options = RunOptions {
        sparsity: Some(cell.k),
        with_covariance: false,
    };
    let out = run_jadce_with(
        &input,
        cell.solver,
        spec.detection.rule(cell.k),
        &SolverConfig::default(),
        options,
    )?;
    Ok(TrialOutcome {
        p_md: prob_missed_detection(scenario.activity.support(), &out.support_hat)?,
        nmse: nmse(&out.x_hat, &scenario.effective_channels)?,
        solver_time_s: out.solver.wall_time,
        iterations: out.solver.iterations,
    })
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Median of the means of up to ten contiguous batches.
pub fn median_of_means(xs: &[f64]) -> f64 {
    let batches = xs.len().clamp(1, 10);
    let mut means: Vec<f64> = (0..batches)
        .map(|b| {
            let lo = b * xs.len() / batches;
            let hi = (b + 1) * xs.len() / batches;
            xs[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    if batches % 2 == 1 {
        means[batches / 2]
    } else {
        0.5 * (means[batches / 2 - 1] + means[batches / 2])
    }
}

/// Aggregates trial outcomes in trial order.
pub fn aggregate(cell: Cell, outcomes: &[TrialOutcome]) -> ResultRow {
    let p: Vec<f64> = outcomes.iter().map(|o| o.p_md).collect();
    let e: Vec<f64> = outcomes.iter().map(|o| o.nmse).collect();
    let t: Vec<f64> = outcomes.iter().map(|o| o.solver_time_s).collect();
    let (p_md_mean, p_md_stderr) = mean_and_stderr(&p);
    let (nmse_mean, nmse_stderr) = mean_and_stderr(&e);
    ResultRow {
        solver: cell.solver,
        l: cell.l,
        m: cell.m,
        k: cell.k,
        trials: outcomes.len(),
        p_md_mean,
        p_md_stderr,
        nmse_mean,
        nmse_stderr,
        mean_solver_time_s: median_of_means(&t),
        mean_iterations: outcomes.iter().map(|o| o.iterations as f64).sum::<f64>()
            / outcomes.len() as f64,
    }
}

/// Runs every trial of one cell on the current rayon pool.
pub fn run_cell(spec: &ExperimentSpec, cell: Cell) -> Result<ResultRow> {
    let pilots = spec.fixed_pilots.then(|| {
        generate_pilots(
            Dims {
                n: spec.n,
                l: cell.l,
                m: 1,
                k: 0,
            },
            &mut stream_rng(spec.master_seed, pilot_stream(spec.n, cell.l)),
        )
    });
    let wrap = |trial: u64| {
        move |e: Error| Error::Trial {
            context: format!("{cell} trial {trial}"),
            source: Box::new(e),
        }
    };
    // warm-up, discarded
    run_trial(spec, cell, 0, pilots.as_ref()).map_err(wrap(0))?;
    let outcomes = (0..spec.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(spec, cell, t, pilots.as_ref()).map_err(wrap(t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(cell, &outcomes))
}

/// [`run_experiment`] with a callback after each finished cell.
pub fn run_experiment_with(
    spec: &ExperimentSpec,
    mut on_row: impl FnMut(&ResultRow),
) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = spec.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let mut rows = Vec::new();
    for cell in spec.cells() {
        let row = pool.install(|| run_cell(spec, cell))?;
        on_row(&row);
        rows.push(row);
    }
    Ok(rows)
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    run_experiment_with(spec, |_| {})
}

/// Sweep on a single worker so per-trial solver times are not disturbed by
/// concurrent trials.
pub fn runtime_comparison(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    let serial = ExperimentSpec {
        workers: Some(1),
        ..spec.clone()
    };
    run_experiment(&serial)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    /// `.json` means JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => OutputFormat::Json,
            _ => OutputFormat::Csv,
        }
    }
}

pub const CSV_HEADER: [&str; 11] = [
    "solver", "L", "M", "K", "trials", "p_md", "p_md_se", "nmse", "nmse_se", "time_s", "iters",
];

/// Formats `x` with `digits` significant digits, like C's `%.*g`.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{}", trim(mantissa), exp)
    } else {
        trim(&format!("{:.*}", (digits as i32 - 1 - exp) as usize, x))
    }
}

fn sig9(x: f64) -> String {
    format_significant(x, 9)
}

fn row_fields(r: &ResultRow) -> [String; 11] {
    [
        r.solver.to_string(),
        r.l.to_string(),
        r.m.to_string(),
        r.k.to_string(),
        r.trials.to_string(),
        sig9(r.p_md_mean),
        sig9(r.p_md_stderr),
        sig9(r.nmse_mean),
        sig9(r.nmse_stderr),
        sig9(r.mean_solver_time_s),
        sig9(r.mean_iterations),
    ]
}

pub fn write_csv<W: std::io::Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in rows {
        out.write_record(row_fields(r))?;
    }
    out.flush()?;
    Ok(())
}

pub fn to_json(rows: &[ResultRow]) -> Result<String> {
    let objects = rows
        .iter()
        .map(|r| {
            let mut obj = serde_json::Map::new();
            for (key, value) in CSV_HEADER.iter().zip(row_fields(r)) {
                let v = match *key {
                    "solver" => serde_json::Value::String(value),
                    _ => serde_json::from_str(&value).map_err(|_| {
                        Error::Format(format!("non-finite value in column {key}: {value}"))
                    })?,
                };
                obj.insert((*key).to_string(), v);
            }
            Ok(serde_json::Value::Object(obj))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(serde_json::to_string_pretty(&objects)?)
}

/// Writes `rows` to `path`.
pub fn emit_results(
    rows: &[ResultRow],
    path: impl AsRef<Path>,
    format: OutputFormat,
) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Config("no result rows to write".into()));
    }
    match format {
        OutputFormat::Csv => write_csv(rows, std::fs::File::create(path)?),
        OutputFormat::Json => Ok(std::fs::write(path, to_json(rows)? + "\n")?),
    }
}

pub fn read_results(path: impl AsRef<Path>, format: OutputFormat) -> Result<Vec<ResultRow>> {
    match format {
        OutputFormat::Csv => {
            let mut rdr = csv::Reader::from_path(path)?;
            let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
            if header != CSV_HEADER {
                return Err(Error::Format(format!("unexpected CSV header {header:?}")));
            }
            Ok(rdr
                .deserialize()
                .collect::<std::result::Result<Vec<ResultRow>, _>>()?)
        }
        OutputFormat::Json => Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?),
    }
}
