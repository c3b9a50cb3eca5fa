//! Activity detection and empirical-Bayes channel estimation on top of a
//! power estimate, plus the two evaluation metrics.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::covlik::{assemble_covariance, PowerVector};
use crate::model::{sample_covariance, SampleCovariance, Scenario};
use crate::solvers::{solve, SolverConfig, SolverKind, SolverResult};
use crate::{CMatrix, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionRule {
    /// Declare the `K` largest powers active.
    TopK(usize),
    /// Declare every power `≥ γ_th` active.
    Threshold(f64),
}

impl DetectionRule {
    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            DetectionRule::TopK(k) if k > n => {
                Err(Error::Config(format!("top-K rule with K={k} > N={n}")))
            }
            DetectionRule::Threshold(t) if !(t >= 0.0) => {
                Err(Error::Config(format!("threshold must be >= 0, got {t}")))
            }
            _ => Ok(()),
        }
    }
}

/// Activity indicator `α̂` for `γ̂` under `rule`. Top-K ties go to the
/// lowest index.
pub fn detect(gamma_hat: &[f64], rule: DetectionRule) -> Result<Vec<bool>> {
    let n = gamma_hat.len();
    rule.validate(n)?;
    match rule {
        DetectionRule::Threshold(th) => Ok(gamma_hat.iter().map(|&g| g >= th).collect()),
        DetectionRule::TopK(k) => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| gamma_hat[j].total_cmp(&gamma_hat[i]).then(i.cmp(&j)));
            let mut alpha = vec![false; n];
            for &i in &order[..k] {
                alpha[i] = true;
            }
            Ok(alpha)
        }
    }
}

pub fn support_of(alpha: &[bool]) -> Vec<usize> {
    alpha
        .iter()
        .enumerate()
        .filter_map(|(i, &a)| a.then_some(i))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    /// Posterior mean `X̂ = Γ̂ Aᴴ Σ̂⁻¹ Y`, `N × M`.
    pub x_hat: CMatrix,
    /// Posterior covariance `Σ̂_x = Γ̂ − Γ̂ Aᴴ Σ̂⁻¹ A Γ̂`, when requested.
    pub sigma_x: Option<CMatrix>,
}

/// Plug-in posterior moments of `X` given powers `γ̂`. Rows with zero power
/// are exactly zero.
pub fn estimate_channels(
    gamma: &PowerVector,
    a: &CMatrix,
    y: &CMatrix,
    noise_var: f64,
    with_covariance: bool,
) -> Result<ChannelEstimate> {
    let (l, n) = a.shape();
    if y.nrows() != l {
        return Err(Error::InvalidDims(format!(
            "Y has {} rows, pilots have length {l}",
            y.nrows()
        )));
    }
    let m = y.ncols();
    let cov = assemble_covariance(a, gamma, noise_var)?;
    let active: Vec<usize> = (0..n).filter(|&i| gamma[i] > 0.0).collect();

    let mut x_hat = CMatrix::zeros(n, m);
    if !active.is_empty() {
        let z = cov.solve(y);
        for &i in &active {
            let row = a.column(i).ad_mul(&z) * C64::from(gamma[i]);
            x_hat.row_mut(i).copy_from(&row);
        }
    }

    let sigma_x = with_covariance.then(|| {
        let mut sx = CMatrix::zeros(n, n);
        if active.is_empty() {
            return sx;
        }
        let a_act = a.select_columns(&active);
        // A_actᴴ Σ⁻¹ A_act over the active set
        let g = cov.solve(&a_act).ad_mul(&a_act);
        for (r, &i) in active.iter().enumerate() {
            for (c, &j) in active.iter().enumerate() {
                let mut v = -g[(r, c)] * (gamma[i] * gamma[j]);
                if i == j {
                    v += gamma[i];
                }
                sx[(i, j)] = v;
            }
        }
        crate::model::hermitian_part(sx)
    });

    Ok(ChannelEstimate { x_hat, sigma_x })
}

/// Everything a JADCE run needs from the receiver side.
#[derive(Debug, Clone)]
pub struct JadceInput {
    pub s: SampleCovariance,
    pub y: CMatrix,
    pub a: CMatrix,
    pub noise_var: f64,
}

impl JadceInput {
    pub fn new(y: CMatrix, a: CMatrix, noise_var: f64) -> Result<Self> {
        let s = sample_covariance(&y)?;
        Ok(JadceInput { s, y, a, noise_var })
    }

    pub fn from_scenario(sc: &Scenario) -> Self {
        JadceInput {
            s: sc.sample_covariance(),
            y: sc.received.clone(),
            a: sc.pilots.matrix().clone(),
            noise_var: sc.noise_var,
        }
    }
}

#[derive(Debug, Clone)]
pub struct JadceOutput {
    pub alpha_hat: Vec<bool>,
    pub support_hat: Vec<usize>,
    /// Solver output before pruning.
    pub gamma_hat: PowerVector,
    /// `γ̂ ⊙ α̂`.
    pub gamma_pruned: PowerVector,
    pub x_hat: CMatrix,
    pub sigma_x: Option<CMatrix>,
    pub solver: SolverResult,
}

/// Solve, detect, prune, estimate.
pub fn run_jadce(
    input: &JadceInput,
    solver: SolverKind,
    rule: DetectionRule,
    config: &SolverConfig,
) -> Result<JadceOutput> {
    run_jadce_with(input, solver, rule, config, RunOptions::default())
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    /// Sparsity handed to CL-MP. Defaults to `K` of a top-K rule.
    pub sparsity: Option<usize>,
    /// Also compute the `N × N` posterior covariance.
    pub with_covariance: bool,
}

/// [`run_jadce`] with explicit options.
pub fn run_jadce_with(
    input: &JadceInput,
    solver: SolverKind,
    rule: DetectionRule,
    config: &SolverConfig,
    options: RunOptions,
) -> Result<JadceOutput> {
    let n = input.a.ncols();
    rule.validate(n)?;
    let sparsity = options.sparsity.or(match rule {
        DetectionRule::TopK(k) => Some(k),
        DetectionRule::Threshold(_) => None,
    });
    let result = if solver == SolverKind::ClMp && sparsity == Some(0) {
        // Nothing to select; the greedy loop is empty.
        SolverResult {
            gamma_hat: PowerVector::zeros(n),
            iterations: 0,
            converged: true,
            objective_trace: Vec::new(),
            wall_time: 0.0,
        }
    } else {
        solve(
            solver,
            &input.s,
            &input.a,
            input.noise_var,
            config,
            sparsity,
        )?
    };

    let alpha_hat = detect(&result.gamma_hat, rule)?;
    let pruned: Vec<f64> = result
        .gamma_hat
        .iter()
        .zip(&alpha_hat)
        .map(|(&g, &a)| if a { g } else { 0.0 })
        .collect();
    let gamma_pruned = PowerVector::new(pruned)?;
    let est = estimate_channels(
        &gamma_pruned,
        &input.a,
        &input.y,
        input.noise_var,
        options.with_covariance,
    )?;

    Ok(JadceOutput {
        support_hat: support_of(&alpha_hat),
        alpha_hat,
        gamma_hat: result.gamma_hat.clone(),
        gamma_pruned,
        x_hat: est.x_hat,
        sigma_x: est.sigma_x,
        solver: result,
    })
}

/// Single-trial `|M ∖ M̂| / |M|`.
pub fn prob_missed_detection(true_support: &[usize], est_support: &[usize]) -> Result<f64> {
    if true_support.is_empty() {
        return Err(Error::UndefinedMetric(
            "missed-detection rate needs a nonempty true support".into(),
        ));
    }
    let missed = true_support
        .iter()
        .filter(|i| !est_support.contains(i))
        .count();
    Ok(missed as f64 / true_support.len() as f64)
}

/// Number of declared devices that are not active. Under the top-K rule this
/// equals the number of misses.
pub fn false_alarm_count(true_support: &[usize], est_support: &[usize]) -> usize {
    est_support
        .iter()
        .filter(|i| !true_support.contains(i))
        .count()
}

/// Single-trial `‖X̂ − X‖²_F / ‖X‖²_F`.
pub fn nmse(x_hat: &CMatrix, x_true: &CMatrix) -> Result<f64> {
    if x_hat.shape() != x_true.shape() {
        return Err(Error::InvalidDims(format!(
            "shapes {:?} and {:?} differ",
            x_hat.shape(),
            x_true.shape()
        )));
    }
    let denom = x_true.norm_squared();
    if denom == 0.0 {
        return Err(Error::UndefinedMetric(
            "NMSE undefined for an all-zero channel matrix".into(),
        ));
    }
    Ok((x_hat - x_true).norm_squared() / denom)
}

/// JSON view of a run: support and powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JadceSummary {
    pub solver: SolverKind,
    pub support: Vec<usize>,
    pub gamma_hat: Vec<f64>,
    pub gamma_pruned: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl JadceOutput {
    pub fn summary(&self, solver: SolverKind) -> JadceSummary {
        JadceSummary {
            solver,
            support: self.support_hat.clone(),
            gamma_hat: self.gamma_hat.to_vec(),
            gamma_pruned: self.gamma_pruned.to_vec(),
            iterations: self.solver.iterations,
            converged: self.solver.converged,
        }
    }
}

/// Magic bytes opening a channel-estimate dump.
pub const XHAT_MAGIC: [u8; 8] = *b"JADCEXH1";

/// Writes `X̂` as: 8-byte magic, `N` and `M` as little-endian u32, then the
/// entries row-major as little-endian `(re, im)` f64 pairs.
pub fn write_channel_dump<W: Write>(mut w: W, x: &CMatrix) -> Result<()> {
    let (n, m) = x.shape();
    let to_u32 = |v: usize| {
        u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} exceeds u32")))
    };
    w.write_all(&XHAT_MAGIC)?;
    w.write_all(&to_u32(n)?.to_le_bytes())?;
    w.write_all(&to_u32(m)?.to_le_bytes())?;
    for i in 0..n {
        for j in 0..m {
            let v = x[(i, j)];
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_channel_dump<R: Read>(mut r: R) -> Result<CMatrix> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if header[..8] != XHAT_MAGIC {
        return Err(Error::Format("bad channel dump magic".into()));
    }
    let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let m = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let mut x = CMatrix::zeros(n, m);
    let mut buf = [0u8; 16];
    for i in 0..n {
        for j in 0..m {
            r.read_exact(&mut buf)?;
            x[(i, j)] = C64::new(
                f64::from_le_bytes(buf[..8].try_into().unwrap()),
                f64::from_le_bytes(buf[8..].try_into().unwrap()),
            );
        }
    }
    Ok(x)
}

pub fn save_channel_dump(path: impl AsRef<Path>, x: &CMatrix) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_channel_dump(file, x)
}

pub fn load_channel_dump(path: impl AsRef<Path>) -> Result<CMatrix> {
    read_channel_dump(std::io::BufReader::new(std::fs::File::open(path)?))
}
