//! Solvers for `min ℓ(γ) s.t. γ ≥ 0`.
//!
//! * [`solve_cl_sca`]: parallel successive convex approximation with a
//!   diminishing smoothing step.
//! * [`solve_cwo`]: cyclic exact coordinate minimization.
//! * [`solve_cl_mp`]: greedy matching pursuit that activates one device per
//!   iteration for a known sparsity `K`.
//! * [`solve_msbl_em`]: the M-SBL expectation–maximization iteration.

mod cwo;
mod em;
mod mp;
mod sca;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::covlik::PowerVector;
use crate::model::SampleCovariance;
use crate::{CMatrix, Error, Result};

pub use cwo::{cwo_coordinate_update, cwo_minimizer, solve_cwo};
pub use em::{em_initial_power, em_update, solve_msbl_em};
pub use mp::{greedy_gain, solve_cl_mp};
pub use sca::{sca_coordinate_minimizer, sca_mapping, sca_minimizer, solve_cl_sca, SolverState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum SolverKind {
    #[serde(rename = "cl-sca")]
    #[value(name = "cl-sca")]
    ClSca,
    #[serde(rename = "cwo")]
    #[value(name = "cwo")]
    Cwo,
    #[serde(rename = "cl-mp")]
    #[value(name = "cl-mp")]
    ClMp,
    #[serde(rename = "msbl-em")]
    #[value(name = "msbl-em")]
    MsblEm,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [
        SolverKind::ClSca,
        SolverKind::Cwo,
        SolverKind::ClMp,
        SolverKind::MsblEm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::ClSca => "cl-sca",
            SolverKind::Cwo => "cwo",
            SolverKind::ClMp => "cl-mp",
            SolverKind::MsblEm => "msbl-em",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown solver '{s}' (expected one of cl-sca, cwo, cl-mp, msbl-em)"
                ))
            })
    }
}

/// Coordinate visiting order for CWO sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    #[default]
    Ascending,
    /// A fresh permutation per sweep, drawn from a generator seeded here.
    Shuffled { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Initial smoothing step `η⁰`.
    pub eta0: f64,
    /// Step decay constant `ε` in `ηᵏ = ηᵏ⁻¹ (1 − ε ηᵏ⁻¹)`.
    pub epsilon: f64,
    /// Iteration cap for CL-SCA and CWO (sweeps).
    pub max_iters: usize,
    /// Iteration cap for the EM iteration.
    pub em_max_iters: usize,
    /// Convergence threshold `δ` on the iterate change.
    pub tol: f64,
    /// Starting point. `None` means zero for CL-SCA/CWO and the uniform
    /// positive start of [`em_initial_power`] for EM.
    pub gamma_init: Option<PowerVector>,
    pub sweep_order: SweepOrder,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eta0: 0.99,
            epsilon: 0.05,
            max_iters: 50,
            em_max_iters: 500,
            tol: 1e-3,
            gamma_init: None,
            sweep_order: SweepOrder::Ascending,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.eta0 > 0.0 && self.eta0 <= 1.0 && self.eta0 * self.epsilon < 1.0) {
            return Err(Error::Config(format!(
                "eta0 must lie in (0, 1] and below 1/epsilon, got {}",
                self.eta0
            )));
        }
        if self.max_iters == 0 || self.em_max_iters == 0 {
            return Err(Error::Config("iteration caps must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverResult {
    pub gamma_hat: PowerVector,
    pub iterations: usize,
    pub converged: bool,
    /// `ℓ` at the starting point followed by its value after every iteration.
    pub objective_trace: Vec<f64>,
    /// Seconds spent inside the solver. The sample covariance is an input and
    /// is not part of this.
    pub wall_time: f64,
}

/// Diminishing step sequence `ηᵏ = ηᵏ⁻¹ (1 − ε ηᵏ⁻¹)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSize {
    eta: f64,
    epsilon: f64,
}

impl StepSize {
    pub fn new(eta0: f64, epsilon: f64) -> Self {
        StepSize { eta: eta0, epsilon }
    }

    pub fn current(&self) -> f64 {
        self.eta
    }

    pub fn advance(&mut self) -> f64 {
        self.eta *= 1.0 - self.epsilon * self.eta;
        self.eta
    }
}

/// Runs `kind` on `(S, A, σ²)`. `sparsity` is required by CL-MP only.
pub fn solve(
    kind: SolverKind,
    s: &SampleCovariance,
    a: &CMatrix,
    noise_var: f64,
    config: &SolverConfig,
    sparsity: Option<usize>,
) -> Result<SolverResult> {
    match kind {
        SolverKind::ClSca => solve_cl_sca(s, a, noise_var, config),
        SolverKind::Cwo => solve_cwo(s, a, noise_var, config),
        SolverKind::MsblEm => solve_msbl_em(s, a, noise_var, config),
        SolverKind::ClMp => {
            let k = sparsity.ok_or_else(|| {
                Error::Config("cl-mp needs the number of active devices K".into())
            })?;
            solve_cl_mp(s, a, noise_var, k)
        }
    }
}

/// Shared argument checks; returns the starting point for iterative solvers.
pub(crate) fn check_problem(
    s: &SampleCovariance,
    a: &CMatrix,
    noise_var: f64,
    config: Option<&SolverConfig>,
) -> Result<Option<Vec<f64>>> {
    if s.dim() != a.nrows() {
        return Err(Error::Config(format!(
            "sample covariance is {0}x{0} but pilots have length {1}",
            s.dim(),
            a.nrows()
        )));
    }
    if a.ncols() == 0 {
        return Err(Error::Config("pilot matrix has no columns".into()));
    }
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(Error::Config(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    let Some(config) = config else {
        return Ok(None);
    };
    config.validate()?;
    match &config.gamma_init {
        Some(g) if g.len() != a.ncols() => Err(Error::Config(format!(
            "gamma_init has length {}, expected {}",
            g.len(),
            a.ncols()
        ))),
        Some(g) => Ok(Some(g.to_vec())),
        None => Ok(None),
    }
}

pub(crate) fn l2_norm(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().map(|x| x * x).sum::<f64>().sqrt()
}
