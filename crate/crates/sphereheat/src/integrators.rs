//! Time stepping for the Galerkin system: Itô Euler with the ½Σk_j
//! correction drift, Stratonovich Heun, and a sphere-projected Heun
//! variant, plus the seeded Brownian increment driver.
//!
//! All schemes run on a uniform grid. The Itô scheme realizes the
//! corrected drift form of the equation directly; Heun (predictor /
//! trapezoidal corrector in both drift and diffusion) is consistent with
//! the Stratonovich form; the projected variant rescales every Heun step
//! back to the unit sphere. Cross-scheme agreement on coupled increments
//! is itself a diagnostic of the Itô–Stratonovich bookkeeping.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::fields::{noise_field, Dynamics};
use crate::spectral::{norm_h, SpectralCoeffs};

/// Time stepping scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Euler–Maruyama on the Itô form with the ½Σk_j correction drift.
    ItoCorrected,
    /// Stochastic Heun predictor–corrector on the Stratonovich form.
    StratHeun,
    /// Heun step followed by rescaling to unit H-norm.
    Projected,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::ItoCorrected => "ito_corrected",
            Scheme::StratHeun => "strat_heun",
            Scheme::Projected => "projected",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ito_corrected" => Ok(Scheme::ItoCorrected),
            "strat_heun" => Ok(Scheme::StratHeun),
            "projected" => Ok(Scheme::Projected),
            _ => Err(SimError::Validation {
                field: "scheme",
                msg: format!("unknown scheme `{s}`"),
            }),
        }
    }
}

/// Pre-drawn Gaussian increments, one row per noise direction.
///
/// Each row is generated from its own ChaCha stream keyed by the noise
/// index, so regenerating with a larger N reproduces the existing rows
/// bit-for-bit and only appends new ones.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianIncrements {
    /// `dw[j][i]` is the increment of W_j over step i, drawn N(0, dt).
    dw: Vec<Vec<f64>>,
    step_count: usize,
    dt: f64,
    seed: u64,
}

impl BrownianIncrements {
    pub fn n_noise(&self) -> usize {
        self.dw.len()
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Increment of W_j over step i.
    pub fn entry(&self, j: usize, i: usize) -> f64 {
        self.dw[j][i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.dw[j]
    }

    /// Sum consecutive blocks of `factor` fine increments into one coarse
    /// increment per block; the exact coupling used by refinement studies.
    pub fn coarsen(&self, factor: usize) -> Result<BrownianIncrements> {
        if factor == 0 || self.step_count % factor != 0 {
            return Err(SimError::NonNestedSteps);
        }
        let dw = self
            .dw
            .iter()
            .map(|row| {
                row.chunks(factor)
                    .map(|chunk| chunk.iter().sum())
                    .collect()
            })
            .collect();
        Ok(BrownianIncrements {
            dw,
            step_count: self.step_count / factor,
            dt: self.dt * factor as f64,
            seed: self.seed,
        })
    }
}

/// Draw `N × step_count` i.i.d. N(0, dt) increments, deterministic in
/// `(seed, N, step_count)`.
pub fn generate_increments(
    n_noise: usize,
    step_count: usize,
    dt: f64,
    seed: u64,
) -> BrownianIncrements {
    let sd = dt.sqrt();
    let dw = (0..n_noise)
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            (0..step_count)
                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    BrownianIncrements {
        dw,
        step_count,
        dt,
        seed,
    }
}

/// Derive the per-path seed from the ensemble master seed. SplitMix64
/// finalizer keeps distinct path indices on unrelated ChaCha keys while
/// staying independent of worker scheduling.
pub fn path_seed(master_seed: u64, path_index: u64) -> u64 {
    let mut z = master_seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(path_index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `Q_m(u0) / |Q_m(u0)|`: project the initial condition and put it on
/// the unit sphere.
pub fn normalize_initial(u0: &SpectralCoeffs, m: usize) -> Result<SpectralCoeffs> {
    let projected = u0.project(m);
    let norm = norm_h(&projected)?;
    if norm == 0.0 {
        return Err(SimError::DegenerateInitialCondition);
    }
    Ok(projected.scaled(1.0 / norm))
}

fn check_finite(u: SpectralCoeffs) -> Result<SpectralCoeffs> {
    if u.is_finite() {
        Ok(u)
    } else {
        Err(SimError::NumericalFault("step output"))
    }
}

/// One Euler step of the Itô form:
/// `u + [Δu + F(u) + ½Σ k_j(u)] dt + Σ Λ_j(u) ΔW_j`.
pub fn step_ito_corrected(
    u: &SpectralCoeffs,
    dt: f64,
    dw_column: &[f64],
    dynamics: &Dynamics,
) -> Result<SpectralCoeffs> {
    let mut next = u.add_scaled(&dynamics.drift_ito(u)?, dt);
    for (phi, &dw) in dynamics.noise.directions().iter().zip(dw_column) {
        next = next.add_scaled(&noise_field(u, phi)?, dw);
    }
    check_finite(next)
}

/// One stochastic Heun step of the Stratonovich form: predictor with the
/// uncorrected drift, then trapezoidal average of drift and diffusion.
pub fn step_strat_heun(
    u: &SpectralCoeffs,
    dt: f64,
    dw_column: &[f64],
    dynamics: &Dynamics,
) -> Result<SpectralCoeffs> {
    let a0 = dynamics.drift_stratonovich(u)?;
    let mut predictor = u.add_scaled(&a0, dt);
    let dirs = dynamics.noise.directions();
    let mut b0 = Vec::with_capacity(dirs.len());
    for (phi, &dw) in dirs.iter().zip(dw_column) {
        let b = noise_field(u, phi)?;
        predictor = predictor.add_scaled(&b, dw);
        b0.push(b);
    }
    if !predictor.is_finite() {
        return Err(SimError::NumericalFault("heun predictor"));
    }
    let a1 = dynamics.drift_stratonovich(&predictor)?;
    let mut next = u.add_scaled(&a0, 0.5 * dt).add_scaled(&a1, 0.5 * dt);
    for ((phi, &dw), b) in dirs.iter().zip(dw_column).zip(&b0) {
        next = next.add_scaled(b, 0.5 * dw);
        next = next.add_scaled(&noise_field(&predictor, phi)?, 0.5 * dw);
    }
    check_finite(next)
}

/// Heun step followed by rescaling to the unit sphere; the constraint
/// is then exact instead of approximate.
pub fn step_projected(
    u: &SpectralCoeffs,
    dt: f64,
    dw_column: &[f64],
    dynamics: &Dynamics,
) -> Result<SpectralCoeffs> {
    let raw = step_strat_heun(u, dt, dw_column, dynamics)?;
    let norm = norm_h(&raw)?;
    if norm == 0.0 {
        return Err(SimError::ZeroNormAfterStep);
    }
    Ok(raw.scaled(1.0 / norm))
}

/// Advance one step with the selected scheme.
pub fn step(
    scheme: Scheme,
    u: &SpectralCoeffs,
    dt: f64,
    dw_column: &[f64],
    dynamics: &Dynamics,
) -> Result<SpectralCoeffs> {
    match scheme {
        Scheme::ItoCorrected => step_ito_corrected(u, dt, dw_column, dynamics),
        Scheme::StratHeun => step_strat_heun(u, dt, dw_column, dynamics),
        Scheme::Projected => step_projected(u, dt, dw_column, dynamics),
    }
}

/// A realized trajectory: states on the uniform grid plus the increments
/// that produced it. When the path blew up, `blow_up` holds the failing
/// step index and `states` stops at the last finite state.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub states: Vec<SpectralCoeffs>,
    pub increments: BrownianIncrements,
    pub scheme: Scheme,
    pub blow_up: Option<usize>,
}

impl PathRecord {
    pub fn dt(&self) -> f64 {
        self.increments.dt()
    }

    /// Number of steps actually realized (states.len() − 1).
    pub fn realized_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// Map a time to its grid index; the time must sit on the grid.
    pub fn index_of_time(&self, t: f64) -> Result<usize> {
        let dt = self.dt();
        let idx = (t / dt).round() as usize;
        if (t - idx as f64 * dt).abs() > 1e-9 * dt.max(1.0) || idx > self.increments.step_count() {
            return Err(SimError::OffGridTime(t));
        }
        Ok(idx)
    }

    /// State at grid index `k`, frozen at the last finite state once the
    /// path has blown up.
    pub fn state_at(&self, k: usize) -> &SpectralCoeffs {
        let idx = k.min(self.states.len() - 1);
        &self.states[idx]
    }
}

/// Run a full trajectory with pre-drawn increments. Blow-up truncates
/// the record and sets the failing step index.
pub fn run_path(
    scheme: Scheme,
    u0: &SpectralCoeffs,
    m: usize,
    increments: BrownianIncrements,
    dynamics: &Dynamics,
) -> Result<PathRecord> {
    let dt = increments.dt();
    let steps = increments.step_count();
    let mut states = Vec::with_capacity(steps + 1);
    let mut u = normalize_initial(u0, m)?;
    states.push(u.clone());
    let mut blow_up = None;
    let mut column = vec![0.0; increments.n_noise()];
    for i in 0..steps {
        for (j, c) in column.iter_mut().enumerate() {
            *c = increments.entry(j, i);
        }
        match step(scheme, &u, dt, &column, dynamics) {
            Ok(next) => {
                u = next;
                states.push(u.clone());
            }
            Err(SimError::NumericalFault(_)) | Err(SimError::ZeroNormAfterStep) => {
                blow_up = Some(i);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let times = (0..=steps).map(|i| i as f64 * dt).collect();
    Ok(PathRecord {
        times,
        states,
        increments,
        scheme,
        blow_up,
    })
}
