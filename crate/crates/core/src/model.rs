//! Synthetic uplink scenarios for the MMV model `Y = A X + E`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::Split;
use crate::rng::stream_rng;
use crate::{CMatrix, Error, Result, C64};

/// Lower edge of the large-scale fading range in dB.
pub const LSFC_MIN_DB: f64 = -15.0;
/// Upper edge of the large-scale fading range in dB.
pub const LSFC_MAX_DB: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Number of devices.
    pub n: usize,
    /// Pilot length.
    pub l: usize,
    /// Number of base-station antennas.
    pub m: usize,
    /// Number of active devices.
    pub k: usize,
}

impl Dims {
    pub fn new(n: usize, l: usize, m: usize, k: usize) -> Result<Self> {
        let dims = Dims { n, l, m, k };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.l == 0 || self.m == 0 {
            return Err(Error::InvalidDims(format!(
                "N, L and M must be positive (got N={}, L={}, M={})",
                self.n, self.l, self.m
            )));
        }
        if self.k > self.n {
            return Err(Error::InvalidDims(format!(
                "K={} exceeds N={}",
                self.k, self.n
            )));
        }
        Ok(())
    }
}

/// `L × N` pilot matrix with unit-modulus QPSK entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMatrix(CMatrix);

impl PilotMatrix {
    /// Wraps an arbitrary pilot matrix. No alphabet check is made.
    pub fn from_matrix(a: CMatrix) -> Self {
        PilotMatrix(a)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn pilot_len(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_devices(&self) -> usize {
        self.0.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityPattern {
    alpha: Vec<bool>,
    support: Vec<usize>,
}

impl ActivityPattern {
    pub fn from_support(n: usize, mut support: Vec<usize>) -> Result<Self> {
        support.sort_unstable();
        support.dedup();
        if support.last().is_some_and(|&i| i >= n) {
            return Err(Error::InvalidDims(format!(
                "support index out of range for N={n}"
            )));
        }
        let mut alpha = vec![false; n];
        for &i in &support {
            alpha[i] = true;
        }
        Ok(ActivityPattern { alpha, support })
    }

    pub fn alpha(&self) -> &[bool] {
        &self.alpha
    }

    /// Sorted indices of the active devices.
    pub fn support(&self) -> &[usize] {
        &self.support
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    /// Transmit powers `ρ`.
    pub rho: Vec<f64>,
    /// Large-scale fading coefficients `β` (linear scale).
    pub beta: Vec<f64>,
    /// `γ_n = α_n ρ_n β_n`.
    pub gamma_true: Vec<f64>,
}

/// One coherence interval of the uplink.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub dims: Dims,
    pub pilots: PilotMatrix,
    pub activity: ActivityPattern,
    pub powers: PowerProfile,
    /// Small-scale fading `H`, `N × M`, rows `h_n`.
    pub channels: CMatrix,
    pub noise_var: f64,
    /// Effective channels `X`, `N × M`, row `n` equal to `√γ_n h_n`.
    pub effective_channels: CMatrix,
    /// Additive noise `E`, `L × M`.
    pub noise: CMatrix,
    /// Received block `Y = A X + E`, `L × M`.
    pub received: CMatrix,
}

/// Hermitian `L × L` sample covariance `S = Y Yᴴ / M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCovariance(CMatrix);

impl SampleCovariance {
    /// Wraps a precomputed covariance, replacing it by its Hermitian part.
    pub fn from_matrix(s: CMatrix) -> Result<Self> {
        if !s.is_square() {
            return Err(Error::InvalidDims(format!(
                "sample covariance must be square, got {}x{}",
                s.nrows(),
                s.ncols()
            )));
        }
        Ok(SampleCovariance(hermitian_part(s)))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// `(X + Xᴴ) / 2`, with an exactly real diagonal.
pub(crate) fn hermitian_part(mut s: CMatrix) -> CMatrix {
    let n = s.nrows();
    for j in 0..n {
        s[(j, j)].im = 0.0;
        for i in (j + 1)..n {
            let v = (s[(i, j)] + s[(j, i)].conj()) * 0.5;
            s[(i, j)] = v;
            s[(j, i)] = v.conj();
        }
    }
    s
}

pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(scale * re, scale * im)
}

/// Draws an `L × N` pilot matrix with entries uniform on `{±1/√2 ± j/√2}`.
pub fn generate_pilots<R: Rng + ?Sized>(dims: Dims, rng: &mut R) -> PilotMatrix {
    let mut a = CMatrix::zeros(dims.l, dims.n);
    for j in 0..dims.n {
        for i in 0..dims.l {
            let bits: u8 = rng.random_range(0..4);
            let re = if bits & 1 == 0 {
                FRAC_1_SQRT_2
            } else {
                -FRAC_1_SQRT_2
            };
            let im = if bits & 2 == 0 {
                FRAC_1_SQRT_2
            } else {
                -FRAC_1_SQRT_2
            };
            a[(i, j)] = C64::new(re, im);
        }
    }
    PilotMatrix(a)
}

/// Draws pilots and a full scenario from `rng`.
pub fn generate_scenario<R: Rng + ?Sized>(
    dims: Dims,
    noise_var: f64,
    rng: &mut R,
) -> Result<Scenario> {
    dims.validate()?;
    let pilots = generate_pilots(dims, rng);
    generate_scenario_with_pilots(dims, pilots, noise_var, rng)
}

/// Draws a scenario around a given pilot matrix.
///
/// Draw order: support, LSFCs, small-scale fading, noise.
pub fn generate_scenario_with_pilots<R: Rng + ?Sized>(
    dims: Dims,
    pilots: PilotMatrix,
    noise_var: f64,
    rng: &mut R,
) -> Result<Scenario> {
    dims.validate()?;
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(Error::Domain(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    if pilots.pilot_len() != dims.l || pilots.num_devices() != dims.n {
        return Err(Error::InvalidDims(format!(
            "pilot matrix is {}x{}, expected {}x{}",
            pilots.pilot_len(),
            pilots.num_devices(),
            dims.l,
            dims.n
        )));
    }
    let Dims { n, l, m, k } = dims;

    let support = index::sample(rng, n, k).into_vec();
    let activity = ActivityPattern::from_support(n, support)?;

    let rho = vec![1.0; n];
    let beta: Vec<f64> = (0..n)
        .map(|_| {
            let db = rng.random_range(LSFC_MIN_DB..=LSFC_MAX_DB);
            10f64.powf(db / 10.0)
        })
        .collect();
    let gamma_true: Vec<f64> = (0..n)
        .map(|i| {
            if activity.alpha[i] {
                rho[i] * beta[i]
            } else {
                0.0
            }
        })
        .collect();

    let channels = CMatrix::from_fn(n, m, |_, _| complex_gaussian(rng, 1.0));
    let mut effective_channels = CMatrix::zeros(n, m);
    for &i in activity.support() {
        let amp = gamma_true[i].sqrt();
        effective_channels
            .row_mut(i)
            .copy_from(&(channels.row(i) * C64::from(amp)));
    }

    let noise = CMatrix::from_fn(l, m, |_, _| complex_gaussian(rng, noise_var));
    let mut received = noise.clone();
    let a = pilots.matrix();
    for &i in activity.support() {
        for col in 0..m {
            let x = effective_channels[(i, col)];
            for row in 0..l {
                received[(row, col)] += a[(row, i)] * x;
            }
        }
    }

    Ok(Scenario {
        dims,
        pilots,
        activity,
        powers: PowerProfile {
            rho,
            beta,
            gamma_true,
        },
        channels,
        noise_var,
        effective_channels,
        noise,
        received,
    })
}

/// `S = Y Yᴴ / M`, symmetrized.
pub fn sample_covariance(y: &CMatrix) -> Result<SampleCovariance> {
    let m = y.ncols();
    if m == 0 {
        return Err(Error::InvalidDims(
            "sample covariance needs at least one snapshot".into(),
        ));
    }
    let s = Split::new(y).gram().to_complex() / C64::from(m as f64);
    Ok(SampleCovariance(hermitian_part(s)))
}

impl Scenario {
    pub fn sample_covariance(&self) -> SampleCovariance {
        sample_covariance(&self.received).expect("scenario has M >= 1")
    }
}

/// Replayable description of a scenario. Entries are regenerated from the
/// seeds rather than stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSnapshot {
    pub dims: Dims,
    pub seed: u64,
    pub noise_var: f64,
    /// When set, pilots are drawn from their own stream under this seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot_seed: Option<u64>,
}

impl ScenarioSnapshot {
    pub fn regenerate(&self) -> Result<Scenario> {
        let mut rng = stream_rng(self.seed, 0);
        match self.pilot_seed {
            Some(ps) => {
                let pilots = generate_pilots(self.dims, &mut stream_rng(ps, 0));
                generate_scenario_with_pilots(self.dims, pilots, self.noise_var, &mut rng)
            }
            None => generate_scenario(self.dims, self.noise_var, &mut rng),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let snap: ScenarioSnapshot = serde_json::from_str(&text)?;
        snap.dims.validate()?;
        Ok(snap)
    }
}
