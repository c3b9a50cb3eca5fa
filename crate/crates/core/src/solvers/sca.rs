use std::time::Instant;

use crate::covlik::{
    assemble_covariance, coordinate_forms, negative_llf, FormsWorkspace, PowerVector, FORM_FLOOR,
};
use crate::model::SampleCovariance;
use crate::solvers::{check_problem, l2_norm, SolverConfig, SolverResult, StepSize};
use crate::{CMatrix, CVector, Result};

/// Closed-form minimizer of the per-coordinate convex surrogate, in terms of
/// `p = a_iᴴ b_i` and `q = b_iᴴ S b_i` with `b_i = Σ⁻¹ a_i` at `γᵏ`:
///
/// ```text
/// γ̂_i = [ γ_iᵏ + √(q / p³) − 1/p ]₊
/// ```
#[inline]
pub fn sca_minimizer(gamma_i: f64, p: f64, q: f64) -> f64 {
    let p = p.max(FORM_FLOOR);
    let q = q.max(FORM_FLOOR);
    (gamma_i + (q / (p * p * p)).sqrt() - 1.0 / p).max(0.0)
}

/// [`sca_minimizer`] from the vectors `b_i`, `a_i` and the sample covariance.
pub fn sca_coordinate_minimizer(
    gamma_i: f64,
    b_i: &CVector,
    a_i: &CVector,
    s: &SampleCovariance,
) -> f64 {
    let p = a_i.dotc(b_i).re;
    let q = b_i.dotc(&(s.matrix() * b_i)).re;
    sca_minimizer(gamma_i, p, q)
}

/// The SCA best-response map `γ ↦ γ̂(γ)`, all coordinates at once.
pub fn sca_mapping(
    s: &SampleCovariance,
    a: &CMatrix,
    noise_var: f64,
    gamma: &[f64],
) -> Result<Vec<f64>> {
    let cov = assemble_covariance(a, gamma, noise_var)?;
    let forms = coordinate_forms(s.matrix(), a, &cov);
    Ok((0..a.ncols())
        .map(|i| sca_minimizer(gamma[i], forms.p[i], forms.q[i]))
        .collect())
}

/// Iterate of the CL-SCA loop.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub gamma_k: Vec<f64>,
    pub eta_k: f64,
    /// `dᵏ = γ̂(γᵏ) − γᵏ` from the last step.
    pub direction: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub iter: usize,
}

impl SolverState {
    fn new(gamma0: Vec<f64>, eta0: f64) -> Self {
        let n = gamma0.len();
        SolverState {
            gamma_k: gamma0,
            eta_k: eta0,
            direction: vec![0.0; n],
            objective_trace: Vec::new(),
            iter: 0,
        }
    }

    /// One CL-SCA iteration at step `eta`. Returns `‖dᵏ‖₂`.
    fn step(&mut self, ws: &FormsWorkspace, noise_var: f64, eta: f64) -> Result<f64> {
        let (objective, p, q) = ws.evaluate(&self.gamma_k, noise_var)?;
        self.objective_trace.push(objective);
        for (i, g) in self.gamma_k.iter_mut().enumerate() {
            let d = sca_minimizer(*g, p[i], q[i]) - *g;
            self.direction[i] = d;
            *g = (*g + eta * d).max(0.0);
        }
        self.iter += 1;
        self.eta_k = eta;
        Ok(l2_norm(self.direction.iter().copied()))
    }
}

/// CL-SCA: all coordinates take their surrogate minimizers in parallel and
/// the iterate moves a diminishing step `ηᵏ` towards them. Stops once
/// `‖γ̂(γᵏ) − γᵏ‖₂ < δ`; the step that met the test is still applied.
pub fn solve_cl_sca(
    s: &SampleCovariance,
    a: &CMatrix,
    noise_var: f64,
    config: &SolverConfig,
) -> Result<SolverResult> {
    let gamma0 =
        check_problem(s, a, noise_var, Some(config))?.unwrap_or_else(|| vec![0.0; a.ncols()]);
    let start = Instant::now();

    let ws = FormsWorkspace::new(s.matrix(), a);
    let mut state = SolverState::new(gamma0, config.eta0);
    let mut steps = StepSize::new(config.eta0, config.epsilon);
    let mut converged = false;
    while state.iter < config.max_iters {
        let dnorm = state.step(&ws, noise_var, steps.current())?;
        if dnorm < config.tol {
            converged = true;
            break;
        }
        steps.advance();
    }
    let final_cov = ws.covariance(&state.gamma_k, noise_var)?;
    state.objective_trace.push(negative_llf(s, &final_cov));

    Ok(SolverResult {
        gamma_hat: PowerVector::from_clamped(state.gamma_k),
        iterations: state.iter,
        converged,
        objective_trace: state.objective_trace,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covlik::{downdate_direction, llf_gradient};
    use crate::solvers::fixtures::{matched_instance, random_instance, scenario, top_k};
    use crate::verify::golden_section;

    #[test]
    fn matched_covariance_is_a_fixed_point() {
        let inst = matched_instance(1, 5, 8, 1.0);
        let cov = assemble_covariance(&inst.a, &inst.gamma, 1.0).unwrap();
        for i in 0..8 {
            let a_i: CVector = inst.a.column(i).into();
            let b_i = cov.solve_vec(&a_i);
            let g = sca_coordinate_minimizer(inst.gamma[i], &b_i, &a_i, &inst.s);
            assert!((g - inst.gamma[i]).abs() < 1e-9, "{g} vs {}", inst.gamma[i]);
        }
    }

    #[test]
    fn zero_scm_at_zero_clamps() {
        let inst = random_instance(2, 5, 8);
        let s = SampleCovariance::from_matrix(CMatrix::zeros(5, 5)).unwrap();
        let cov = assemble_covariance(&inst.a, &[0.0; 8], 1.0).unwrap();
        let a0: CVector = inst.a.column(0).into();
        let b0 = cov.solve_vec(&a0);
        assert_eq!(sca_coordinate_minimizer(0.0, &b0, &a0, &s), 0.0);
    }

    /// Surrogate `ℓ̃_i(t | γᵏ) = −t q_c / (1 + t p_c) + t a_iᴴ b_i` up to a constant.
    fn surrogate(p_c: f64, q_c: f64, p_b: f64) -> impl Fn(f64) -> f64 {
        move |t| -t * q_c / (1.0 + t * p_c) + t * p_b
    }

    #[test]
    fn closed_form_matches_golden_section_on_surrogate() {
        for seed in 0..25 {
            let inst = random_instance(10 + seed, 5, 8);
            let cov = assemble_covariance(&inst.a, &inst.gamma, 1.0).unwrap();
            for i in 0..8 {
                let a_i: CVector = inst.a.column(i).into();
                let b_i = cov.solve_vec(&a_i);
                let c_i = downdate_direction(&b_i, &a_i, inst.gamma[i]).unwrap();
                let p_c = a_i.dotc(&c_i).re;
                let q_c = c_i.dotc(&(inst.s.matrix() * &c_i)).re;
                let p_b = a_i.dotc(&b_i).re;
                let oracle = golden_section(surrogate(p_c, q_c, p_b), 0.0, 1e3, 1e-11);
                let got = sca_coordinate_minimizer(inst.gamma[i], &b_i, &a_i, &inst.s);
                assert!(
                    (got - oracle).abs() < 1e-6,
                    "seed {seed} i {i}: {got} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn surrogate_is_tangent_to_objective() {
        for seed in 0..10 {
            let inst = random_instance(50 + seed, 5, 8);
            let cov = assemble_covariance(&inst.a, &inst.gamma, 1.0).unwrap();
            let grad = llf_gradient(&inst.s, &inst.a, &cov);
            for i in 0..8 {
                let a_i: CVector = inst.a.column(i).into();
                let b_i = cov.solve_vec(&a_i);
                let c_i = downdate_direction(&b_i, &a_i, inst.gamma[i]).unwrap();
                let f = surrogate(
                    a_i.dotc(&c_i).re,
                    c_i.dotc(&(inst.s.matrix() * &c_i)).re,
                    a_i.dotc(&b_i).re,
                );
                let (g, h) = (inst.gamma[i], 1e-6);
                let fd = if g >= h {
                    (f(g + h) - f(g - h)) / (2.0 * h)
                } else {
                    (-f(g + 2.0 * h) + 4.0 * f(g + h) - 3.0 * f(g)) / (2.0 * h)
                };
                assert!(
                    (fd - grad[i]).abs() <= 1e-6 * grad[i].abs().max(1.0),
                    "{fd} vs {}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn starting_at_truth_with_exact_covariance_stops_immediately() {
        let inst = matched_instance(3, 6, 10, 1.0);
        let cfg = SolverConfig {
            gamma_init: Some(PowerVector::new(inst.gamma.clone()).unwrap()),
            ..Default::default()
        };
        let res = solve_cl_sca(&inst.s, &inst.a, 1.0, &cfg).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(res.converged);
        for (g, t) in res.gamma_hat.iter().zip(&inst.gamma) {
            assert!((g - t).abs() < 1e-9);
        }
    }

    #[test]
    fn recovers_support_with_many_antennas() {
        for seed in 0..5 {
            let sc = scenario(seed, 12, 8, 10_000, 2);
            let res = solve_cl_sca(
                &sc.sample_covariance(),
                sc.pilots.matrix(),
                1.0,
                &SolverConfig::default(),
            )
            .unwrap();
            assert_eq!(
                top_k(&res.gamma_hat, 2),
                sc.activity.support(),
                "seed {seed}"
            );
        }
    }

    #[test]
    fn iterates_stay_nonnegative_and_trace_has_one_entry_per_iterate() {
        let sc = scenario(4, 60, 10, 20, 5);
        let res = solve_cl_sca(
            &sc.sample_covariance(),
            sc.pilots.matrix(),
            1.0,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(res.gamma_hat.iter().all(|&g| g >= 0.0));
        assert_eq!(res.objective_trace.len(), res.iterations + 1);
        assert!(res.iterations <= 50);
    }

    #[test]
    fn mapping_fixed_point_for_matched_covariance() {
        for seed in 0..5 {
            let inst = matched_instance(70 + seed, 5, 8, 1.0);
            let mapped = sca_mapping(&inst.s, &inst.a, 1.0, &inst.gamma).unwrap();
            let d = l2_norm(mapped.iter().zip(&inst.gamma).map(|(m, g)| m - g));
            assert!(d < 1e-9, "{d}");
        }
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let inst = random_instance(5, 5, 8);
        let s = SampleCovariance::from_matrix(CMatrix::identity(4, 4)).unwrap();
        assert!(matches!(
            solve_cl_sca(&s, &inst.a, 1.0, &SolverConfig::default()),
            Err(crate::Error::Config(_))
        ));
        let cfg = SolverConfig {
            gamma_init: Some(PowerVector::zeros(3)),
            ..Default::default()
        };
        assert!(matches!(
            solve_cl_sca(&inst.s, &inst.a, 1.0, &cfg),
            Err(crate::Error::Config(_))
        ));
    }
}
