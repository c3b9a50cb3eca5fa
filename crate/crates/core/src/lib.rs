//! Covariance-learning joint activity detection and channel estimation
//! (JADCE) for grant-free massive random access.
//!
//! The uplink of `N` single-antenna devices to an `M`-antenna base station
//! is modelled as `Y = A X + E`, where `A` holds the `L`-symbol pilots and
//! `X` is row-sparse. The device powers `γ` are estimated from the sample
//! covariance `S = Y Yᴴ / M` by minimizing
//!
//! ```text
//! ℓ(γ) = tr(Σ(γ)⁻¹ S) + log |Σ(γ)|,   Σ(γ) = A diag(γ) Aᴴ + σ² I,   γ ≥ 0
//! ```
//!
//! with one of four solvers (parallel SCA, coordinate-wise, greedy
//! matching pursuit, or the M-SBL EM iteration). Activity is read off `γ̂`
//! and the channels are recovered with the empirical-Bayes posterior mean.
//!
//! ```no_run
//! use jadce::prelude::*;
//! use rand::SeedableRng;
//!
//! let dims = Dims::new(300, 30, 40, 20).unwrap();
//! let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
//! let scenario = generate_scenario(dims, 1.0, &mut rng).unwrap();
//! let out = run_jadce(
//!     &JadceInput::from_scenario(&scenario),
//!     SolverKind::ClSca,
//!     DetectionRule::TopK(20),
//!     &SolverConfig::default(),
//! )
//! .unwrap();
//! println!("P_MD = {}", prob_missed_detection(scenario.activity.support(), &out.support_hat).unwrap());
//! ```

pub mod bench;
pub mod cli;
pub mod covlik;
pub mod error;
pub mod jadce;
mod linalg;
pub mod model;
pub mod rng;
pub mod solvers;
pub mod verify;

pub use nalgebra::Complex;
use nalgebra::{DMatrix, DVector};

/// Complex double-precision scalar.
pub type C64 = Complex<f64>;
/// Dense complex matrix, column-major.
pub type CMatrix = DMatrix<C64>;
/// Dense complex column vector.
pub type CVector = DVector<C64>;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::bench::{
        emit_results, run_experiment, runtime_comparison, ExperimentSpec, ResultRow,
    };
    pub use crate::covlik::{
        assemble_covariance, downdate_direction, llf_gradient, negative_llf, ModelCovariance,
        PowerVector,
    };
    pub use crate::jadce::{
        detect, estimate_channels, nmse, prob_missed_detection, run_jadce, DetectionRule,
        JadceInput, JadceOutput,
    };
    pub use crate::model::{
        generate_pilots, generate_scenario, sample_covariance, Dims, PilotMatrix, SampleCovariance,
        Scenario,
    };
    pub use crate::solvers::{SolverConfig, SolverKind, SolverResult};
    pub use crate::{CMatrix, CVector, Error, Result, C64};
}
