//! Computable estimators for the theorem-level claims: sphere defect,
//! energy functionals, modulus of continuity, Aldous displacement
//! probes, the discrete martingale part and its quadratic variation,
//! weak-form residuals, and martingale increment statistics.
//!
//! Per-path quantities are pure functions of a [`PathRecord`]; ensemble
//! statistics aggregate them in path order so results are independent of
//! worker scheduling. Time integrals use the left-endpoint rule
//! throughout, matching the Itô reading of the discrete identities.

use crate::error::{Result, SimError};
use crate::fields::{noise_field, Dynamics, NoiseSpec};
use crate::integrators::PathRecord;
use crate::spectral::{inner_h, norm_h_sq, norm_v_sq, QuadratureGrid, SpectralCoeffs};

/// Sphere defect and the three energy functionals of one trajectory.
/// Entries can be non-finite only when `blow_up` is set; such records
/// are excluded from ensemble means and counted separately.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStats {
    /// `sup_t ‖u(t)‖_V²`
    pub sup_v_sq: f64,
    /// `sup_t |u(t)|_{L^{2n}}^{2n}`
    pub sup_l2n_pow: f64,
    /// `∫₀^T |u(t)|_E² dt` by the left-endpoint rule
    pub int_e_sq: f64,
    /// `max_t | |u(t)|_H² − 1 |`
    pub max_sphere_defect: f64,
    pub blow_up: Option<usize>,
}

/// `max_t | |u(t)|_H² − 1 |` over the recorded grid.
pub fn sphere_defect(path: &PathRecord) -> f64 {
    path.states
        .iter()
        .map(|u| (norm_h_sq(u) - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Evaluate the three energy functionals plus the sphere defect.
pub fn energy_stats(path: &PathRecord, n_poly: u32, grid: &QuadratureGrid) -> Result<PathStats> {
    let dt = path.dt();
    let mut sup_v_sq: f64 = 0.0;
    let mut sup_l2n_pow: f64 = 0.0;
    let mut int_e_sq = 0.0;
    let mut max_defect: f64 = 0.0;
    let steps = path.realized_steps();
    for (k, u) in path.states.iter().enumerate() {
        sup_v_sq = sup_v_sq.max(norm_v_sq(u));
        sup_l2n_pow = sup_l2n_pow.max(grid.l2n_pow(u, n_poly)?);
        max_defect = max_defect.max((norm_h_sq(u) - 1.0).abs());
        if k < steps {
            int_e_sq += crate::spectral::norm_e_sq(u) * dt;
        }
    }
    Ok(PathStats {
        sup_v_sq,
        sup_l2n_pow,
        int_e_sq,
        max_sphere_defect: max_defect,
        blow_up: path.blow_up,
    })
}

/// Modulus of continuity: `max |u(s₁) − u(s₂)|_H` over grid pairs with
/// `|s₁ − s₂| ≤ eps`. Nondecreasing in `eps` by construction.
pub fn modulus_of_continuity(path: &PathRecord, eps: f64) -> f64 {
    let dt = path.dt();
    let window = (eps / dt).floor() as usize;
    let n = path.states.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n.min(i + window + 1) {
            let d = path.states[j].add_scaled(&path.states[i], -1.0);
            worst = worst.max(norm_h_sq(&d));
        }
    }
    worst.sqrt()
}

/// The discrete martingale candidate `M̂(t_k)`, one coefficient vector
/// per grid time, starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<SpectralCoeffs>,
}

impl MartingaleTrajectory {
    /// Value at grid index `k`, frozen at the last computed value for a
    /// trajectory that stopped early (the stopped-martingale extension).
    pub fn value_at(&self, k: usize) -> &SpectralCoeffs {
        &self.values[k.min(self.values.len() - 1)]
    }
}

/// Drift residual `M̂(t_k) = u(t_k) − u(0) − Σ_{i<k} [Δu + F + ½Σk_j](t_i) dt`.
///
/// For the Itô scheme this telescopes to the stochastic sums exactly;
/// for other schemes it is the empirical residual. If a drift
/// evaluation overflows near a blow-up, the trajectory truncates there
/// and downstream consumers use the stopped extension.
pub fn martingale_part(path: &PathRecord, dynamics: &Dynamics) -> Result<MartingaleTrajectory> {
    let dt = path.dt();
    let m = path.states[0].len();
    let mut values = Vec::with_capacity(path.states.len());
    values.push(SpectralCoeffs::zeros(m));
    let mut drift_sum = SpectralCoeffs::zeros(m);
    for k in 1..path.states.len() {
        match dynamics.drift_ito(&path.states[k - 1]) {
            Ok(d) => drift_sum = drift_sum.add_scaled(&d, dt),
            Err(SimError::NumericalFault(_)) => break,
            Err(e) => return Err(e),
        }
        let v = path.states[k]
            .add_scaled(&path.states[0], -1.0)
            .add_scaled(&drift_sum, -1.0);
        if !v.is_finite() {
            break;
        }
        values.push(v);
    }
    let times = path.times[..values.len()].to_vec();
    Ok(MartingaleTrajectory { times, values })
}

/// The explicit stochastic sums `Σ_{i<k} Σ_j Λ_j(u(t_i)) ΔW_j(t_i)`.
pub fn stochastic_integral(path: &PathRecord, noise: &NoiseSpec) -> Result<MartingaleTrajectory> {
    if path.increments.n_noise() != noise.dim() {
        return Err(SimError::IncompleteRecord);
    }
    let m = path.states[0].len();
    let mut values = Vec::with_capacity(path.states.len());
    let mut acc = SpectralCoeffs::zeros(m);
    values.push(acc.clone());
    for k in 1..path.states.len() {
        let u = &path.states[k - 1];
        for (j, phi) in noise.directions().iter().enumerate() {
            acc = acc.add_scaled(&noise_field(u, phi)?, path.increments.entry(j, k - 1));
        }
        values.push(acc.clone());
    }
    let times = path.times[..values.len()].to_vec();
    Ok(MartingaleTrajectory { times, values })
}

/// Predicted quadratic variation `Σ_j Σ_i |Λ_j(u(t_i))|_H² dt`.
pub fn qv_predicted(path: &PathRecord, noise: &NoiseSpec) -> Result<f64> {
    let dt = path.dt();
    let mut acc = 0.0;
    for u in &path.states[..path.realized_steps()] {
        for phi in noise.directions() {
            acc += norm_h_sq(&noise_field(u, phi)?) * dt;
        }
    }
    Ok(acc)
}

/// Realized quadratic variation `Σ_i |M̂(t_{i+1}) − M̂(t_i)|_H²`.
pub fn qv_realized(mart: &MartingaleTrajectory) -> f64 {
    mart.values
        .windows(2)
        .map(|w| norm_h_sq(&w[1].add_scaled(&w[0], -1.0)))
        .sum()
}

/// Full-vector weak-form residual at the recorded horizon:
/// `u(T) − u(0) − Σ_i drift_ito(u(t_i)) dt − Σ_i Σ_j Λ_j(u(t_i)) ΔW_j(t_i)`.
pub fn weak_form_residual_vector(
    path: &PathRecord,
    dynamics: &Dynamics,
) -> Result<SpectralCoeffs> {
    if path.increments.n_noise() != dynamics.noise.dim() {
        return Err(SimError::IncompleteRecord);
    }
    let dt = path.dt();
    let steps = path.realized_steps();
    let mut residual = path.states[steps].add_scaled(&path.states[0], -1.0);
    for (i, u) in path.states[..steps].iter().enumerate() {
        residual = residual.add_scaled(&dynamics.drift_ito(u)?, -dt);
        for (j, phi) in dynamics.noise.directions().iter().enumerate() {
            residual = residual.add_scaled(&noise_field(u, phi)?, -path.increments.entry(j, i));
        }
    }
    Ok(residual)
}

/// Weak-form residual paired with a test vector in V. Test vectors with
/// modes beyond the Galerkin dimension pair against implicit zeros.
pub fn weak_form_residual(
    path: &PathRecord,
    dynamics: &Dynamics,
    test_vec: &SpectralCoeffs,
) -> Result<f64> {
    Ok(inner_h(&weak_form_residual_vector(path, dynamics)?, test_vec))
}

/// A binomial probability estimate with its 95% normal-approximation
/// half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeEstimate {
    pub probability: f64,
    pub ci_half_width: f64,
    pub paths: usize,
}

fn binomial_probe(displacements: impl Iterator<Item = f64>, kappa: f64) -> ProbeEstimate {
    let mut hits = 0usize;
    let mut n = 0usize;
    for d in displacements {
        if d >= kappa {
            hits += 1;
        }
        n += 1;
    }
    let p = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
    let half = if n == 0 {
        0.0
    } else {
        1.96 * (p * (1.0 - p) / n as f64).sqrt()
    };
    ProbeEstimate {
        probability: p,
        ci_half_width: half,
        paths: n,
    }
}

/// `|u(τ+a) − u(τ)|_H` on the grid, by index.
pub fn displacement_at(path: &PathRecord, i_tau: usize, a_steps: usize) -> f64 {
    let d = path.states[i_tau + a_steps].add_scaled(&path.states[i_tau], -1.0);
    norm_h_sq(&d).sqrt()
}

/// Displacement over `a_steps` starting from the per-path argmax of
/// `‖u(t)‖_V`, clamped so the probe window fits before the horizon.
pub fn argmax_v_displacement(path: &PathRecord, a_steps: usize) -> f64 {
    let last_start = path.realized_steps().saturating_sub(a_steps);
    let mut best = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for (k, u) in path.states.iter().take(last_start + 1).enumerate() {
        let v = norm_v_sq(u);
        if v > best_v {
            best_v = v;
            best = k;
        }
    }
    displacement_at(path, best, a_steps)
}

/// Empirical `P(|u(τ+a) − u(τ)|_H ≥ κ)` at a fixed probe time, with a
/// binomial 95% confidence half-width. Blown-up paths are excluded.
pub fn aldous_probe(paths: &[PathRecord], tau: f64, a: f64, kappa: f64) -> Result<ProbeEstimate> {
    let survivors: Vec<&PathRecord> = paths.iter().filter(|p| p.blow_up.is_none()).collect();
    let Some(first) = survivors.first() else {
        return Ok(binomial_probe(std::iter::empty(), kappa));
    };
    let i_tau = first.index_of_time(tau)?;
    let a_steps = first.index_of_time(a)?;
    if i_tau + a_steps > first.realized_steps() {
        return Err(SimError::OffGridTime(tau + a));
    }
    Ok(binomial_probe(
        survivors.iter().map(|p| displacement(p, i_tau, a_steps)),
        kappa,
    ))
}

/// Same probe at the per-path argmax of `‖u(t)‖_V` — a data-dependent
/// stopping time on the discrete filtration, clamped so `τ + a ≤ T`.
pub fn aldous_probe_at_argmax_v(
    paths: &[PathRecord],
    a: f64,
    kappa: f64,
) -> Result<ProbeEstimate> {
    let survivors: Vec<&PathRecord> = paths.iter().filter(|p| p.blow_up.is_none()).collect();
    let Some(first) = survivors.first() else {
        return Ok(binomial_probe(std::iter::empty(), kappa));
    };
    let a_steps = first.index_of_time(a)?;
    let displacements = survivors.iter().map(|p| {
        let last_start = p.realized_steps().saturating_sub(a_steps);
        let mut best = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for (k, u) in p.states.iter().take(last_start + 1).enumerate() {
            let v = norm_v_sq(u);
            if v > best_v {
                best_v = v;
                best = k;
            }
        }
        displacement(p, best, a_steps)
    });
    Ok(binomial_probe(displacements, kappa))
}

/// Bounded continuous functionals of the path up to the conditioning
/// time, used in the martingale increment statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathFunctional {
    /// `h ≡ 1`
    ConstOne,
    /// `h(v) = tanh(⟨v(t₂), e₁⟩_H)`
    TanhPairing,
}

impl PathFunctional {
    pub fn name(self) -> &'static str {
        match self {
            PathFunctional::ConstOne => "one",
            PathFunctional::TanhPairing => "tanh",
        }
    }

    fn eval(self, state_at_t2: &SpectralCoeffs) -> f64 {
        match self {
            PathFunctional::ConstOne => 1.0,
            PathFunctional::TanhPairing => state_at_t2.as_slice()[0].tanh(),
        }
    }
}

/// Sample mean with standard error and 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub paths: usize,
}

impl MeanCi {
    pub fn contains_zero(&self) -> bool {
        self.ci_lo <= 0.0 && 0.0 <= self.ci_hi
    }
}

/// Mean/stderr/CI of a sample, aggregated in the order given.
pub fn mean_ci(values: &[f64]) -> MeanCi {
    let n = values.len();
    if n == 0 {
        return MeanCi {
            mean: 0.0,
            stderr: 0.0,
            ci_lo: 0.0,
            ci_hi: 0.0,
            paths: 0,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    MeanCi {
        mean,
        stderr,
        ci_lo: mean - 1.96 * stderr,
        ci_hi: mean + 1.96 * stderr,
        paths: n,
    }
}

/// Sphere-defect threshold beyond which a trajectory is stopped for the
/// martingale increment statistic. Stopping at a defect excursion is a
/// stopping time, so the stopped increments keep exact zero mean while
/// staying numerically bounded near blow-ups.
pub const MARTINGALE_DEFECT_STOP: f64 = 10.0;

/// Grid index of the first state whose sphere defect exceeds the cap
/// (or the end of the realized trajectory).
pub fn defect_stop_index(path: &PathRecord, cap: f64) -> usize {
    for (k, u) in path.states.iter().enumerate() {
        if (norm_h_sq(u) - 1.0).abs() > cap {
            return k;
        }
    }
    path.realized_steps()
}

/// One path's contribution to the increment statistic
/// `⟨M̂(t₁) − M̂(t₂), φ⟩_H · h(v|[0,t₂])`, evaluated on the trajectory
/// stopped at blow-up or at the defect cap.
pub fn martingale_increment_sample(
    path: &PathRecord,
    dynamics: &Dynamics,
    i2: usize,
    i1: usize,
    test_vec: &SpectralCoeffs,
    functional: PathFunctional,
) -> Result<f64> {
    let stop = defect_stop_index(path, MARTINGALE_DEFECT_STOP);
    let mart = martingale_part(path, dynamics)?;
    let k1 = i1.min(stop);
    let k2 = i2.min(stop);
    let diff = mart.value_at(k1).add_scaled(mart.value_at(k2), -1.0);
    let h = functional.eval(path.state_at(k2));
    Ok(inner_h(&diff, test_vec) * h)
}

/// Monte Carlo mean of the increment statistic over an ensemble, with
/// its 95% confidence interval. `t2 ≤ t1` must be grid-aligned.
pub fn martingale_increment_stat(
    paths: &[PathRecord],
    dynamics: &Dynamics,
    t2: f64,
    t1: f64,
    test_vec: &SpectralCoeffs,
    functional: PathFunctional,
) -> Result<MeanCi> {
    let Some(first) = paths.first() else {
        return Ok(mean_ci(&[]));
    };
    let i2 = first.index_of_time(t2)?;
    let i1 = first.index_of_time(t1)?;
    let mut samples = Vec::with_capacity(paths.len());
    for p in paths {
        samples.push(martingale_increment_sample(
            p, dynamics, i2, i1, test_vec, functional,
        )?);
    }
    Ok(mean_ci(&samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::{generate_increments, path_seed, run_path, BrownianIncrements, Scheme};
    use crate::spectral::{norm_h, QuadratureGrid};
    use proptest::prelude::*;

    fn grid16() -> QuadratureGrid {
        QuadratureGrid::new(16, 1)
    }

    fn default_noise(m: usize) -> NoiseSpec {
        let phi1 = SpectralCoeffs::basis(1, m).unwrap().scaled(0.5);
        let phi2 = SpectralCoeffs::basis(2, m).unwrap().scaled(0.5);
        NoiseSpec::new(vec![phi1, phi2]).unwrap()
    }

    fn synthetic_path(
        states: Vec<SpectralCoeffs>,
        increments: BrownianIncrements,
        scheme: Scheme,
    ) -> PathRecord {
        let dt = increments.dt();
        let times = (0..states.len()).map(|i| i as f64 * dt).collect();
        PathRecord {
            times,
            states,
            increments,
            scheme,
            blow_up: None,
        }
    }

    #[test]
    fn sphere_defect_on_constant_and_projected_paths() {
        let e1 = SpectralCoeffs::basis(1, 4).unwrap();
        let constant = synthetic_path(
            vec![e1.clone(); 11],
            generate_increments(0, 10, 0.1, 0),
            Scheme::Projected,
        );
        assert_eq!(sphere_defect(&constant), 0.0);

        let grid = grid16();
        let noise = default_noise(16);
        let dynamics = Dynamics::new(&grid, &noise, 1);
        let u0 = SpectralCoeffs::new(vec![1.0, 1.0]).unwrap();
        let rec = run_path(
            Scheme::Projected,
            &u0,
            16,
            generate_increments(2, 500, 1e-3, 3),
            &dynamics,
        )
        .unwrap();
        assert!(sphere_defect(&rec) <= 1e-12);
    }

    #[test]
    fn energy_stats_on_closed_form_decay() {
        // u(t) = e^{-t} e_1 on [0, 1]: sup ‖u‖_V² = 1 and the
        // left-endpoint integral of |u|_E² is the geometric sum
        // dt (1 - e^{-2}) / (1 - e^{-2dt}), close to (1 - e^{-2})/2.
        let dt = 1e-3;
        let steps = 1000;
        let states: Vec<SpectralCoeffs> = (0..=steps)
            .map(|i| {
                SpectralCoeffs::basis(1, 4)
                    .unwrap()
                    .scaled((-(i as f64) * dt).exp())
            })
            .collect();
        let path = synthetic_path(
            states,
            generate_increments(0, steps, dt, 0),
            Scheme::ItoCorrected,
        );
        let stats = energy_stats(&path, 1, &QuadratureGrid::new(4, 1)).unwrap();
        assert!((stats.sup_v_sq - 1.0).abs() < 1e-14);
        let discrete = dt * (1.0 - (-2.0f64).exp()) / (1.0 - (-2.0 * dt).exp());
        assert!((stats.int_e_sq - discrete).abs() < 1e-12);
        assert!((stats.int_e_sq - (1.0 - (-2.0f64).exp()) / 2.0).abs() < 1e-3);
        assert!(stats.blow_up.is_none());
    }

    #[test]
    fn energy_stats_on_constant_and_zero_paths() {
        let grid = QuadratureGrid::new(4, 1);
        let e1 = SpectralCoeffs::basis(1, 4).unwrap();
        let constant = synthetic_path(
            vec![e1; 1001],
            generate_increments(0, 1000, 1e-3, 0),
            Scheme::ItoCorrected,
        );
        let stats = energy_stats(&constant, 1, &grid).unwrap();
        assert!((stats.sup_v_sq - 1.0).abs() < 1e-14);
        assert!((stats.sup_l2n_pow - 1.0).abs() < 1e-10);
        assert!((stats.int_e_sq - 1.0).abs() < 1e-10);

        let zero = synthetic_path(
            vec![SpectralCoeffs::zeros(4); 11],
            generate_increments(0, 10, 0.1, 0),
            Scheme::ItoCorrected,
        );
        let zstats = energy_stats(&zero, 1, &grid).unwrap();
        assert_eq!(zstats.sup_v_sq, 0.0);
        assert_eq!(zstats.sup_l2n_pow, 0.0);
        assert_eq!(zstats.int_e_sq, 0.0);
    }

    #[test]
    fn modulus_of_continuity_cases() {
        let e1 = SpectralCoeffs::basis(1, 4).unwrap();
        let constant = synthetic_path(
            vec![e1.clone(); 101],
            generate_increments(0, 100, 1e-2, 0),
            Scheme::ItoCorrected,
        );
        assert_eq!(modulus_of_continuity(&constant, 0.5), 0.0);

        // u(t) = t e_1: the modulus at eps is eps within one grid spacing.
        let dt = 1e-2;
        let states: Vec<SpectralCoeffs> = (0..=100).map(|i| e1.scaled(i as f64 * dt)).collect();
        let linear = synthetic_path(
            states,
            generate_increments(0, 100, dt, 0),
            Scheme::ItoCorrected,
        );
        let m = modulus_of_continuity(&linear, 0.1);
        assert!((m - 0.1).abs() <= dt + 1e-12);
    }

    #[test]
    fn martingale_part_telescopes_for_ito() {
        let grid = grid16();
        let noise = default_noise(16);
        let dynamics = Dynamics::new(&grid, &noise, 1);
        let u0 = SpectralCoeffs::new(vec![1.0, 1.0]).unwrap();
        let rec = run_path(
            Scheme::ItoCorrected,
            &u0,
            16,
            generate_increments(2, 300, 1e-3, 17),
            &dynamics,
        )
        .unwrap();
        assert!(rec.blow_up.is_none());
        let mart = martingale_part(&rec, &dynamics).unwrap();
        let stoch = stochastic_integral(&rec, &noise).unwrap();
        assert_eq!(mart.values.len(), stoch.values.len());
        for (a, b) in mart.values.iter().zip(&stoch.values) {
            let d = a.add_scaled(b, -1.0);
            assert!(norm_h(&d).unwrap() < 1e-10);
        }
        // First step identity: M̂(t₁) = Σ_j Λ_j(u₀) ΔW_j(t₀).
        let mut expect = SpectralCoeffs::zeros(16);
        for (j, phi) in noise.directions().iter().enumerate() {
            expect = expect.add_scaled(
                &noise_field(&rec.states[0], phi).unwrap(),
                rec.increments.entry(j, 0),
            );
        }
        let d = mart.values[1].add_scaled(&expect, -1.0);
        assert!(norm_h(&d).unwrap() < 1e-14);
    }

    #[test]
    fn martingale_part_vanishes_without_noise() {
        let grid = grid16();
        let noise = NoiseSpec::empty();
        let dynamics = Dynamics::new(&grid, &noise, 1);
        let u0 = SpectralCoeffs::new(vec![1.0, 1.0]).unwrap();
        let rec = run_path(
            Scheme::ItoCorrected,
            &u0,
            16,
            generate_increments(0, 200, 1e-3, 0),
            &dynamics,
        )
        .unwrap();
        let mart = martingale_part(&rec, &dynamics).unwrap();
        for v in &mart.values {
            assert!(norm_h(v).unwrap() < 1e-12);
        }
    }

    #[test]
    fn qv_zero_without_noise() {
        let grid = grid16();
        let noise = NoiseSpec::empty();
        let dynamics = Dynamics::new(&grid, &noise, 1);
        let u0 = SpectralCoeffs::new(vec![1.0, 1.0]).unwrap();
        let rec = run_path(
            Scheme::StratHeun,
            &u0,
            16,
            generate_increments(0, 100, 1e-3, 0),
            &dynamics,
        )
        .unwrap();
        assert_eq!(qv_predicted(&rec, &noise).unwrap(), 0.0);
        let mart = martingale_part(&rec, &dynamics).unwrap();
        assert!(qv_realized(&mart) < 1e-20);
    }

    #[test]
    fn qv_frozen_state_oracle_small() {
        // u ≡ e₁, φ = e₂, T = 1: predicted QV is exactly 1, realized is
        // Σ ΔW² with mean T; a 200-path mean sits within 3 standard
        // errors of 1.
        let m = 4;
        let e1 = SpectralCoeffs::basis(1, m).unwrap();
        let e2 = SpectralCoeffs::basis(2, m).unwrap();
        let noise = NoiseSpec::new(vec![e2]).unwrap();
        let steps = 1000;
        let dt = 1e-3;
        let mut ratios = Vec::new();
        for p in 0..200u64 {
            let inc = generate_increments(1, steps, dt, path_seed(99, p));
            let path = synthetic_path(vec![e1.clone(); steps + 1], inc, Scheme::ItoCorrected);
            let pred = qv_predicted(&path, &noise).unwrap();
            assert!((pred - 1.0).abs() < 1e-12);
            let stoch = stochastic_integral(&path, &noise).unwrap();
            ratios.push(qv_realized(&stoch) / pred);
        }
        let ci = mean_ci(&ratios);
        assert!(
            (ci.mean - 1.0).abs() < 3.0 * ci.stderr,
            "mean {} stderr {}",
            ci.mean,
            ci.stderr
        );
    }

    #[test]
    fn weak_form_residual_zero_for_ito_paths() {
        let grid = grid16();
        let noise = default_noise(16);
        let dynamics = Dynamics::new(&grid, &noise, 1);
        let u0 = SpectralCoeffs::new(vec![1.0, 1.0]).unwrap();
        let rec = run_path(
            Scheme::ItoCorrected,
            &u0,
            16,
            generate_increments(2, 400, 1e-3, 5),
            &dynamics,
        )
        .unwrap();
        assert!(rec.blow_up.is_none());
        for k in [1, 2, 7] {
            let v = SpectralCoeffs::basis(k, 16).unwrap();
            let r = weak_form_residual(&rec, &dynamics, &v).unwrap();
            assert!(r.abs() < 1e-10, "test vector e_{k}: residual {r}");
        }
        // Out-of-span test vector pairs against zeros exactly.
        let v_out = SpectralCoeffs::basis(20, 20).unwrap();
        let r = weak_form_residual(&rec, &dynamics, &v_out).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn aldous_probe_edge_cases() {
        let grid = grid16();
        let noise = default_noise(16);
        let dynamics = Dynamics::new(&grid, &noise, 1);
        let u0 = SpectralCoeffs::new(vec![1.0, 1.0]).unwrap();
        let paths: Vec<PathRecord> = (0..20u64)
            .map(|p| {
                run_path(
                    Scheme::StratHeun,
                    &u0,
                    16,
                    generate_increments(2, 1000, 1e-3, path_seed(1, p)),
                    &dynamics,
                )
                .unwrap()
            })
            .collect();
        // a = 0 gives probability exactly 0 for any positive kappa.
        let p0 = aldous_probe(&paths, 0.3, 0.0, 0.25).unwrap();
        assert_eq!(p0.probability, 0.0);
        // kappa above twice the largest path diameter gives 0.
        let phuge = aldous_probe(&paths, 0.3, 0.1, 1e9).unwrap();
        assert_eq!(phuge.probability, 0.0);
        // Off-grid probe times are rejected.
        assert!(matches!(
            aldous_probe(&paths, 0.30049, 0.1, 0.25),
            Err(SimError::OffGridTime(_))
        ));
        // The argmax-V variant shares the edge cases.
        let pa = aldous_probe_at_argmax_v(&paths, 0.0, 0.25).unwrap();
        assert_eq!(pa.probability, 0.0);
    }

    #[test]
    fn increment_stat_zero_noise_is_exactly_zero() {
        let grid = grid16();
        let noise = NoiseSpec::empty();
        let dynamics = Dynamics::new(&grid, &noise, 1);
        let u0 = SpectralCoeffs::new(vec![1.0, 1.0]).unwrap();
        let paths: Vec<PathRecord> = (0..50u64)
            .map(|p| {
                run_path(
                    Scheme::ItoCorrected,
                    &u0,
                    16,
                    generate_increments(0, 100, 1e-2, path_seed(2, p)),
                    &dynamics,
                )
                .unwrap()
            })
            .collect();
        let e1 = SpectralCoeffs::basis(1, 16).unwrap();
        let stat =
            martingale_increment_stat(&paths, &dynamics, 0.25, 0.5, &e1, PathFunctional::ConstOne)
                .unwrap();
        assert!(stat.mean.abs() < 1e-12);
        assert!(stat.contains_zero());
    }

    #[test]
    fn defect_stop_index_detects_excursions() {
        let e1 = SpectralCoeffs::basis(1, 4).unwrap();
        let states = vec![e1.clone(), e1.scaled(1.1), e1.scaled(10.0), e1.scaled(20.0)];
        let path = synthetic_path(
            states,
            generate_increments(0, 3, 0.1, 0),
            Scheme::ItoCorrected,
        );
        assert_eq!(defect_stop_index(&path, MARTINGALE_DEFECT_STOP), 2);
        assert_eq!(defect_stop_index(&path, 1e6), 3);
    }

    proptest! {
        #[test]
        fn modulus_is_monotone_in_eps(seed in 0u64..50, e1 in 1u32..40, e2 in 1u32..40) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let grid = QuadratureGrid::new(8, 1);
            let noise = default_noise(8);
            let dynamics = Dynamics::new(&grid, &noise, 1);
            let u0 = SpectralCoeffs::new(vec![1.0, 1.0]).unwrap();
            let rec = run_path(
                Scheme::StratHeun,
                &u0,
                8,
                generate_increments(2, 50, 1e-2, seed),
                &dynamics,
            ).unwrap();
            let m_lo = modulus_of_continuity(&rec, lo as f64 * 1e-2);
            let m_hi = modulus_of_continuity(&rec, hi as f64 * 1e-2);
            prop_assert!(m_lo <= m_hi + 1e-15);
        }
    }
}
