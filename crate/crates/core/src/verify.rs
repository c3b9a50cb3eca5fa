//! Numerical oracles that check the closed-form updates against routes that
//! share no code with them: golden-section line searches, central finite
//! differences, explicit matrix inverses and eigendecompositions.

use std::fmt;
use std::str::FromStr;

use nalgebra::SymmetricEigen;
use rand::Rng;
use serde::Serialize;

use crate::covlik::{assemble_covariance, downdate_direction, llf_gradient};
use crate::model::{complex_gaussian, SampleCovariance};
use crate::rng::stream_rng;
use crate::solvers::{
    cwo_coordinate_update, sca_coordinate_minimizer, solve_cwo, solve_msbl_em, SolverConfig,
};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Minimizes a unimodal `f` on `[lo, hi]` by golden-section search until the
/// bracket is narrower than `tol`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    // the bracket may have collapsed onto an endpoint minimum
    [lo, mid, hi]
        .into_iter()
        .min_by(|x, y| f(*x).total_cmp(&f(*y)))
        .unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, clap::ValueEnum)]
pub enum Oracle {
    /// Closed-form SCA coordinate minimizer vs golden section on the surrogate.
    #[value(name = "theorem1")]
    Theorem1,
    /// Analytic gradient vs central differences.
    #[value(name = "gradient")]
    Gradient,
    /// Rank-one downdate vs explicit inverse.
    #[value(name = "sherman-morrison")]
    ShermanMorrison,
    /// EM never increases the objective.
    #[value(name = "em-monotonic")]
    EmMonotonic,
    /// CWO coordinate update vs golden section on the objective, plus sweep descent.
    #[value(name = "cwo-coordinate")]
    CwoCoordinate,
}

impl Oracle {
    pub const ALL: [Oracle; 5] = [
        Oracle::Theorem1,
        Oracle::Gradient,
        Oracle::ShermanMorrison,
        Oracle::EmMonotonic,
        Oracle::CwoCoordinate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Oracle::Theorem1 => "theorem1",
            Oracle::Gradient => "gradient",
            Oracle::ShermanMorrison => "sherman-morrison",
            Oracle::EmMonotonic => "em-monotonic",
            Oracle::CwoCoordinate => "cwo-coordinate",
        }
    }

    pub fn tolerance(self) -> f64 {
        match self {
            Oracle::Theorem1 | Oracle::CwoCoordinate => 1e-6,
            Oracle::Gradient => 1e-5,
            Oracle::ShermanMorrison | Oracle::EmMonotonic => 1e-9,
        }
    }
}

impl fmt::Display for Oracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Oracle {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Oracle::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown oracle '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub oracle: Oracle,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<17} {}  cases={:<5} max_error={:.3e} tol={:.0e}",
            self.oracle.name(),
            if self.passed { "PASS" } else { "FAIL" },
            self.cases,
            self.max_error,
            self.tolerance
        )
    }
}

/// A random test problem: pilots, powers (about a third exactly zero), a
/// Wishart sample covariance and `σ²`.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub a: CMatrix,
    pub gamma: Vec<f64>,
    pub s: SampleCovariance,
    pub noise_var: f64,
}

impl OracleInstance {
    pub fn random(seed: u64, l: usize, n: usize) -> Self {
        let mut r = stream_rng(seed, 0x6f72_6163);
        let a = CMatrix::from_fn(l, n, |_, _| complex_gaussian(&mut r, 1.0));
        let gamma = (0..n)
            .map(|_| {
                if r.random_bool(1.0 / 3.0) {
                    0.0
                } else {
                    r.random_range(0.0..2.0)
                }
            })
            .collect();
        let snapshots = 2 * l;
        let w = CMatrix::from_fn(l, snapshots, |_, _| complex_gaussian(&mut r, 2.0));
        let s =
            SampleCovariance::from_matrix(&w * w.adjoint() / C64::from(snapshots as f64)).unwrap();
        OracleInstance {
            a,
            gamma,
            s,
            noise_var: 1.0,
        }
    }

    /// `Σ` built term by term, allowing any real weights.
    pub fn sigma_of(&self, gamma: &[f64]) -> CMatrix {
        let l = self.a.nrows();
        let mut sigma = CMatrix::identity(l, l) * C64::from(self.noise_var);
        for (i, &g) in gamma.iter().enumerate() {
            let a_i = self.a.column(i);
            sigma += a_i * a_i.adjoint() * C64::from(g);
        }
        sigma
    }

    /// `ℓ(γ)` through an eigendecomposition of `Σ`.
    pub fn objective(&self, gamma: &[f64]) -> f64 {
        let eig = SymmetricEigen::new(self.sigma_of(gamma));
        (0..eig.eigenvalues.len())
            .map(|k| {
                let u = eig.eigenvectors.column(k);
                let lam = eig.eigenvalues[k];
                u.dotc(&(self.s.matrix() * u)).re / lam + lam.ln()
            })
            .sum()
    }

    fn column(&self, i: usize) -> CVector {
        self.a.column(i).into()
    }
}

pub const ORACLE_L: usize = 5;
pub const ORACLE_N: usize = 8;

fn inverse(m: CMatrix) -> Result<CMatrix> {
    m.try_inverse()
        .ok_or_else(|| Error::Degenerate("singular matrix in oracle".into()))
}

/// Worst error of one oracle on one instance.
pub fn oracle_error(oracle: Oracle, inst: &OracleInstance) -> Result<f64> {
    let n = inst.a.ncols();
    let cov = assemble_covariance(&inst.a, &inst.gamma, inst.noise_var)?;
    let mut worst: f64 = 0.0;
    match oracle {
        Oracle::Theorem1 => {
            let sigma_inv = inverse(inst.sigma_of(&inst.gamma))?;
            for i in 0..n {
                let a_i = inst.column(i);
                let mut stripped = inst.gamma.clone();
                stripped[i] = 0.0;
                let c_i = inverse(inst.sigma_of(&stripped))? * &a_i;
                let b_i = &sigma_inv * &a_i;
                let p_c = a_i.dotc(&c_i).re;
                let q_c = c_i.dotc(&(inst.s.matrix() * &c_i)).re;
                let p_b = a_i.dotc(&b_i).re;
                let surrogate = |t: f64| -t * q_c / (1.0 + t * p_c) + t * p_b;
                let oracle_min = golden_section(surrogate, 0.0, 1e3, 1e-11);
                let got =
                    sca_coordinate_minimizer(inst.gamma[i], &cov.solve_vec(&a_i), &a_i, &inst.s);
                worst = worst.max((got - oracle_min).abs());
            }
        }
        Oracle::Gradient => {
            let grad = llf_gradient(&inst.s, &inst.a, &cov);
            for i in 0..n {
                let h = 1e-6 * inst.gamma[i].max(1.0);
                let shifted = |d: f64| {
                    let mut g = inst.gamma.clone();
                    g[i] += d;
                    inst.objective(&g)
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                worst = worst.max((grad[i] - fd).abs() / grad[i].abs().max(1e-3));
            }
        }
        Oracle::ShermanMorrison => {
            for i in 0..n {
                let a_i = inst.column(i);
                let c_i = downdate_direction(&cov.solve_vec(&a_i), &a_i, inst.gamma[i])?;
                let mut stripped = inst.gamma.clone();
                stripped[i] = 0.0;
                let explicit = inverse(inst.sigma_of(&stripped))? * &a_i;
                worst = worst.max((&c_i - &explicit).norm() / c_i.norm());
            }
        }
        Oracle::EmMonotonic => {
            let cfg = SolverConfig {
                em_max_iters: 200,
                tol: f64::MIN_POSITIVE,
                ..Default::default()
            };
            let res = solve_msbl_em(&inst.s, &inst.a, inst.noise_var, &cfg)?;
            for w in res.objective_trace.windows(2) {
                worst = worst.max(w[1] - w[0]);
            }
        }
        Oracle::CwoCoordinate => {
            for i in 0..n {
                let a_i = inst.column(i);
                let mut stripped = inst.gamma.clone();
                stripped[i] = 0.0;
                let c_i = inverse(inst.sigma_of(&stripped))? * &a_i;
                let got = cwo_coordinate_update(inst.gamma[i], &c_i, &a_i, &inst.s);
                let line = |t: f64| {
                    let mut g = inst.gamma.clone();
                    g[i] = t;
                    inst.objective(&g)
                };
                let oracle_min = golden_section(line, 0.0, 1e3, 1e-11);
                worst = worst.max((got - oracle_min).abs());
            }
            let res = solve_cwo(&inst.s, &inst.a, inst.noise_var, &SolverConfig::default())?;
            if res.objective_trace.windows(2).any(|w| w[1] > w[0] + 1e-9) {
                worst = f64::INFINITY;
            }
        }
    }
    Ok(worst)
}

/// Runs `oracle` on instances seeded `0..seeds`.
pub fn run_oracle(oracle: Oracle, seeds: u64) -> Result<OracleReport> {
    let mut max_error: f64 = 0.0;
    for seed in 0..seeds {
        let inst = OracleInstance::random(seed, ORACLE_L, ORACLE_N);
        max_error = max_error.max(oracle_error(oracle, &inst)?);
    }
    let tolerance = oracle.tolerance();
    Ok(OracleReport {
        oracle,
        cases: seeds as usize,
        max_error,
        tolerance,
        passed: max_error < tolerance,
    })
}
