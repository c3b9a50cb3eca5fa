use std::time::Instant;

use crate::covlik::{PowerVector, FORM_FLOOR};
use crate::model::SampleCovariance;
use crate::solvers::{check_problem, cwo_minimizer, SolverResult};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Best power for an inactive coordinate and the objective decrease it buys,
/// from `p = a_iᴴ Σ⁻¹ a_i` and `q = a_iᴴ Σ⁻¹ S Σ⁻¹ a_i`.
///
/// Returns `(t, ℓ(current) − ℓ(with γ_i = t))`, the decrease being
/// `t q / (1 + t p) − log(1 + t p) ≥ 0`.
pub fn greedy_gain(p: f64, q: f64) -> (f64, f64) {
    let t = cwo_minimizer(p, q);
    if t == 0.0 {
        return (0.0, 0.0);
    }
    let p = p.max(FORM_FLOOR);
    let denom = 1.0 + t * p;
    (t, (t * q / denom - denom.ln()).max(0.0))
}

/// Covariance-learning matching pursuit: exactly `K` greedy steps, each
/// activating the not-yet-selected device whose single-coordinate minimizer
/// lowers `ℓ` the most (lowest index on ties).
pub fn solve_cl_mp(
    s: &SampleCovariance,
    a: &CMatrix,
    noise_var: f64,
    k: usize,
) -> Result<SolverResult> {
    check_problem(s, a, noise_var, None)?;
    let n = a.ncols();
    let l = a.nrows();
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "cl-mp needs 1 <= K <= N, got K={k} with N={n}"
        )));
    }
    let start = Instant::now();
    let sm = s.matrix();

    // Σ = σ² I at the start, so B = Σ⁻¹ A = A / σ².
    let mut b = a / C64::from(noise_var);
    let mut sb = sm * &b;
    let mut objective = sm.trace().re / noise_var + l as f64 * noise_var.ln();
    let mut gamma = vec![0.0; n];
    let mut selected = vec![false; n];
    let mut trace = vec![objective];

    for _ in 0..k {
        let mut best: Option<(usize, f64, f64)> = None;
        for i in (0..n).filter(|&i| !selected[i]) {
            let p = a.column(i).dotc(&b.column(i)).re;
            let q = b.column(i).dotc(&sb.column(i)).re;
            let (t, gain) = greedy_gain(p, q);
            if best.is_none_or(|(_, _, g)| gain > g) {
                best = Some((i, t, gain));
            }
        }
        let (j, t, gain) = best.expect("fewer than K selected implies a candidate");
        selected[j] = true;
        gamma[j] = t;
        objective -= gain;
        trace.push(objective);
        if t == 0.0 {
            continue;
        }

        // Σ⁻¹ ← Σ⁻¹ − κ b_j b_jᴴ with κ = t / (1 + t a_jᴴ b_j); B and S B
        // follow as rank-one corrections.
        let b_j: CVector = b.column(j).into();
        let sb_j: CVector = sb.column(j).into();
        let p_j = a.column(j).dotc(&b_j).re.max(FORM_FLOOR);
        let kappa = t / (1.0 + t * p_j);
        let w = a.ad_mul(&b_j); // w_i = a_iᴴ b_j, so (b_jᴴ a_i) = conj(w_i)
        b.gerc(C64::from(-kappa), &b_j, &w, C64::from(1.0));
        sb.gerc(C64::from(-kappa), &sb_j, &w, C64::from(1.0));
    }

    Ok(SolverResult {
        gamma_hat: PowerVector::from_clamped(gamma),
        iterations: k,
        converged: true,
        objective_trace: trace,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
