use std::time::Instant;

use crate::covlik::{negative_llf, FormsWorkspace, PowerVector};
use crate::model::SampleCovariance;
use crate::solvers::{check_problem, SolverConfig, SolverResult};
use crate::{CMatrix, Result};

/// Uniform positive start `tr(S) / (N L)` for every device. Zero is an
/// absorbing state of the EM map, so EM cannot start there.
pub fn em_initial_power(s: &SampleCovariance, n: usize) -> Vec<f64> {
    let l = s.dim() as f64;
    vec![(s.matrix().trace().re / (n as f64 * l)).max(0.0); n]
}

/// One EM update of a single power from `p = a_iᴴ Σ⁻¹ a_i` and
/// `q = a_iᴴ Σ⁻¹ S Σ⁻¹ a_i`:
///
/// ```text
/// γ_i ← (1/M)‖μ_i‖² + (Σ_x)_ii = γ_i² q + γ_i − γ_i² p
/// ```
///
/// where `μ_i` is row `i` of the posterior mean `Γ Aᴴ Σ⁻¹ Y` and `Σ_x` the
/// posterior covariance. Only `S` is needed.
#[inline]
pub fn em_update(gamma_i: f64, p: f64, q: f64) -> f64 {
    (gamma_i * gamma_i * q + gamma_i - gamma_i * gamma_i * p).max(0.0)
}

/// The M-SBL EM iteration on the covariance-fitting objective.
pub fn solve_msbl_em(
    s: &SampleCovariance,
    a: &CMatrix,
    noise_var: f64,
    config: &SolverConfig,
) -> Result<SolverResult> {
    let n = a.ncols();
    let mut gamma =
        check_problem(s, a, noise_var, Some(config))?.unwrap_or_else(|| em_initial_power(s, n));
    let start = Instant::now();

    let ws = FormsWorkspace::new(s.matrix(), a);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.em_max_iters {
        let (objective, p, q) = ws.evaluate(&gamma, noise_var)?;
        trace.push(objective);
        let mut change_sq = 0.0;
        for (i, g) in gamma.iter_mut().enumerate() {
            let next = em_update(*g, p[i], q[i]);
            change_sq += (next - *g) * (next - *g);
            *g = next;
        }
        iterations += 1;
        if change_sq.sqrt() < config.tol {
            converged = true;
            break;
        }
    }
    trace.push(negative_llf(s, &ws.covariance(&gamma, noise_var)?));

    Ok(SolverResult {
        gamma_hat: PowerVector::from_clamped(gamma),
        iterations,
        converged,
        objective_trace: trace,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
