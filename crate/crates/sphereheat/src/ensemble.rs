//! Monte Carlo orchestration: embarrassingly parallel path generation
//! with per-path RNG sub-streams, deterministic path-order aggregation,
//! uniform-bound tables across Galerkin dimensions, and coupled
//! dt-refinement studies with fitted convergence orders.
//!
//! Every statistic is a fold over a `Vec` of per-path summaries collected
//! in path-index order, so reports are byte-identical for any worker
//! count. Blown-up paths are excluded from ensemble means and counted;
//! the martingale increment rows instead use the stopped trajectories,
//! which keeps those statistics unbiased at any blow-up rate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::diagnostics::{
    self, aldous_probe_displacement_grid, energy_stats, martingale_increment_sample,
    martingale_part, mean_ci, modulus_of_continuity, qv_predicted, qv_realized,
    weak_form_residual_vector, MeanCi, PathFunctional,
};
use crate::error::{Result, SimError};
use crate::fields::Dynamics;
use crate::integrators::{generate_increments, path_seed, run_path, PathRecord, Scheme};
use crate::spectral::{norm_h, QuadratureGrid, SpectralCoeffs};

/// One named statistic row of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSummary {
    pub name: String,
    pub mean: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub paths: usize,
}

impl DiagnosticSummary {
    fn from_mean_ci(name: impl Into<String>, ci: MeanCi) -> Self {
        DiagnosticSummary {
            name: name.into(),
            mean: ci.mean,
            stderr: ci.stderr,
            ci_lo: ci.ci_lo,
            ci_hi: ci.ci_hi,
            paths: ci.paths,
        }
    }

    pub fn contains_zero(&self) -> bool {
        self.ci_lo <= 0.0 && 0.0 <= self.ci_hi
    }
}

/// Aggregated diagnostics of one ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub diagnostics: Vec<DiagnosticSummary>,
    pub blow_up_count: usize,
    pub config: SimConfig,
    /// Wall-clock seconds; informational only, never part of the CSV.
    pub wall_time_secs: f64,
}

impl EnsembleReport {
    pub fn get(&self, name: &str) -> Option<&DiagnosticSummary> {
        self.diagnostics.iter().find(|d| d.name == name)
    }

    /// Everything except the wall time, for determinism comparisons.
    pub fn eq_ignoring_wall_time(&self, other: &EnsembleReport) -> bool {
        self.diagnostics == other.diagnostics
            && self.blow_up_count == other.blow_up_count
            && self.config == other.config
    }
}

/// Probe times for the Aldous displacement grid, as fractions of T.
pub const ALDOUS_TAU_FRACTIONS: [f64; 4] = [0.1, 0.3, 0.5, 0.7];
/// Probe lags in steps: 0, dt, 10·dt, 100·dt.
pub const ALDOUS_LAG_STEPS: [usize; 4] = [0, 1, 10, 100];
/// Displacement threshold for the probe probability.
pub const ALDOUS_KAPPA: f64 = 0.25;
/// Conditioning/evaluation time pairs for the increment statistic, as
/// fractions of T.
pub const MARTINGALE_TIME_PAIRS: [(f64, f64); 2] = [(0.25, 0.5), (0.5, 1.0)];
/// Epsilons for the modulus-of-continuity rows, in steps.
pub const MODULUS_EPS_STEPS: [usize; 2] = [10, 100];

struct PathSummary {
    blow_up: Option<usize>,
    sup_v_sq: f64,
    sup_l2n_pow: f64,
    int_e_sq: f64,
    max_sphere_defect: f64,
    modulus: Vec<f64>,
    qv_pred: f64,
    qv_real: f64,
    weakform_e1: f64,
    mart_samples: Vec<f64>,
    aldous_disp: Vec<f64>,
    aldous_argmax_disp: Vec<f64>,
}

fn mart_combos(cfg: &SimConfig) -> Vec<(usize, usize, usize, PathFunctional, String)> {
    let steps = cfg.step_count();
    let mut combos = Vec::new();
    let phis: &[usize] = if cfg.galerkin_dim >= 2 { &[1, 2] } else { &[1] };
    for &(f2, f1) in &MARTINGALE_TIME_PAIRS {
        let i2 = ((f2 * steps as f64).round() as usize).min(steps);
        let i1 = ((f1 * steps as f64).round() as usize).min(steps);
        for &k in phis {
            for h in [PathFunctional::ConstOne, PathFunctional::TanhPairing] {
                let name = format!("mart_t2_{f2}T_t1_{f1}T_phi_e{k}_h_{}", h.name());
                combos.push((i2, i1, k, h, name));
            }
        }
    }
    combos
}

fn aldous_grid(cfg: &SimConfig) -> Vec<(usize, usize, String)> {
    let steps = cfg.step_count();
    let mut grid = Vec::new();
    for &frac in &ALDOUS_TAU_FRACTIONS {
        let i_tau = ((frac * steps as f64).round() as usize).min(steps);
        for &lag in &ALDOUS_LAG_STEPS {
            if i_tau + lag <= steps {
                grid.push((i_tau, lag, format!("aldous_tau_{frac}T_lag_{lag}dt")));
            }
        }
    }
    grid
}

fn summarize_path(
    rec: &PathRecord,
    dynamics: &Dynamics,
    grid: &QuadratureGrid,
    cfg: &SimConfig,
    combos: &[(usize, usize, usize, PathFunctional, String)],
    aldous: &[(usize, usize, String)],
) -> Result<PathSummary> {
    let stats = energy_stats(rec, cfg.n_poly, grid)?;
    let dt = rec.dt();

    let mut mart_samples = Vec::with_capacity(combos.len());
    for (i2, i1, k, h, _) in combos {
        let test_vec = SpectralCoeffs::basis(*k, cfg.galerkin_dim)?;
        mart_samples.push(martingale_increment_sample(
            rec, dynamics, *i2, *i1, &test_vec, *h,
        )?);
    }

    let alive = rec.blow_up.is_none();
    let (qv_pred, qv_real, weakform_e1, modulus, aldous_disp, aldous_argmax_disp) = if alive {
        let pred = qv_predicted(rec, dynamics.noise)?;
        let mart = martingale_part(rec, dynamics)?;
        let real = qv_realized(&mart);
        let e1 = SpectralCoeffs::basis(1, cfg.galerkin_dim)?;
        let resid = crate::spectral::inner_h(&weak_form_residual_vector(rec, dynamics)?, &e1);
        let modulus = MODULUS_EPS_STEPS
            .iter()
            .map(|&w| modulus_of_continuity(rec, w as f64 * dt))
            .collect();
        let disp = aldous
            .iter()
            .map(|&(i_tau, lag, _)| aldous_probe_displacement_grid(rec, i_tau, lag))
            .collect();
        let argmax_disp = ALDOUS_LAG_STEPS
            .iter()
            .map(|&lag| diagnostics::argmax_v_displacement(rec, lag))
            .collect();
        (pred, real, resid, modulus, disp, argmax_disp)
    } else {
        (0.0, 0.0, 0.0, Vec::new(), Vec::new(), Vec::new())
    };

    Ok(PathSummary {
        blow_up: rec.blow_up,
        sup_v_sq: stats.sup_v_sq,
        sup_l2n_pow: stats.sup_l2n_pow,
        int_e_sq: stats.int_e_sq,
        max_sphere_defect: stats.max_sphere_defect,
        modulus,
        qv_pred,
        qv_real,
        weakform_e1,
        mart_samples,
        aldous_disp,
        aldous_argmax_disp,
    })
}

fn binomial_summary(name: &str, hits: usize, n: usize) -> DiagnosticSummary {
    let p = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
    let half = if n == 0 {
        0.0
    } else {
        1.96 * (p * (1.0 - p) / n as f64).sqrt()
    };
    DiagnosticSummary {
        name: name.to_string(),
        mean: p,
        stderr: if n == 0 { 0.0 } else { (p * (1.0 - p) / n as f64).sqrt() },
        ci_lo: p - half,
        ci_hi: p + half,
        paths: n,
    }
}

/// Run the full ensemble described by the config and aggregate every
/// diagnostic into a report. Deterministic given `(config, seed)`.
pub fn run_ensemble(cfg: &SimConfig) -> Result<EnsembleReport> {
    let start = std::time::Instant::now();
    cfg.validate()?;
    let grid = QuadratureGrid::new(cfg.galerkin_dim, cfg.n_poly);
    let noise = cfg.noise_spec()?;
    let mut dynamics = Dynamics::new(&grid, &noise, cfg.n_poly);
    dynamics.nonlinearity = cfg.nonlinearity;
    let u0 = cfg.initial_state()?;
    let steps = cfg.step_count();
    let combos = mart_combos(cfg);
    let aldous = aldous_grid(cfg);

    let summaries: Vec<PathSummary> = (0..cfg.path_count as u64)
        .into_par_iter()
        .map(|p| {
            let inc = generate_increments(noise.dim(), steps, cfg.dt, path_seed(cfg.seed, p));
            let rec = run_path(cfg.scheme, &u0, cfg.galerkin_dim, inc, &dynamics)?;
            summarize_path(&rec, &dynamics, &grid, cfg, &combos, &aldous)
        })
        .collect::<Result<Vec<_>>>()?;

    let blow_up_count = summaries.iter().filter(|s| s.blow_up.is_some()).count();
    if blow_up_count == cfg.path_count {
        return Err(SimError::AllPathsBlewUp(cfg.path_count));
    }
    let alive: Vec<&PathSummary> = summaries.iter().filter(|s| s.blow_up.is_none()).collect();

    let collect_alive = |f: &dyn Fn(&PathSummary) -> f64| -> Vec<f64> {
        alive.iter().map(|s| f(s)).collect()
    };

    let mut rows = Vec::new();
    rows.push(DiagnosticSummary::from_mean_ci(
        "sup_v_sq",
        mean_ci(&collect_alive(&|s| s.sup_v_sq)),
    ));
    rows.push(DiagnosticSummary::from_mean_ci(
        "sup_l2n_pow",
        mean_ci(&collect_alive(&|s| s.sup_l2n_pow)),
    ));
    rows.push(DiagnosticSummary::from_mean_ci(
        "int_e_sq",
        mean_ci(&collect_alive(&|s| s.int_e_sq)),
    ));
    rows.push(DiagnosticSummary::from_mean_ci(
        "max_sphere_defect",
        mean_ci(&collect_alive(&|s| s.max_sphere_defect)),
    ));
    for (idx, &w) in MODULUS_EPS_STEPS.iter().enumerate() {
        rows.push(DiagnosticSummary::from_mean_ci(
            format!("modulus_eps_{w}dt"),
            mean_ci(&collect_alive(&|s| s.modulus[idx])),
        ));
    }
    rows.push(DiagnosticSummary::from_mean_ci(
        "qv_predicted",
        mean_ci(&collect_alive(&|s| s.qv_pred)),
    ));
    rows.push(DiagnosticSummary::from_mean_ci(
        "qv_realized",
        mean_ci(&collect_alive(&|s| s.qv_real)),
    ));
    let ratios: Vec<f64> = alive
        .iter()
        .filter(|s| s.qv_pred > 0.0)
        .map(|s| s.qv_real / s.qv_pred)
        .collect();
    rows.push(DiagnosticSummary::from_mean_ci("qv_ratio", mean_ci(&ratios)));
    rows.push(DiagnosticSummary::from_mean_ci(
        "weakform_residual_e1",
        mean_ci(&collect_alive(&|s| s.weakform_e1)),
    ));
    for (idx, (_, _, _, _, name)) in combos.iter().enumerate() {
        let samples: Vec<f64> = summaries.iter().map(|s| s.mart_samples[idx]).collect();
        rows.push(DiagnosticSummary::from_mean_ci(name.clone(), mean_ci(&samples)));
    }
    for (idx, (_, _, name)) in aldous.iter().enumerate() {
        let hits = alive
            .iter()
            .filter(|s| s.aldous_disp[idx] >= ALDOUS_KAPPA)
            .count();
        rows.push(binomial_summary(name, hits, alive.len()));
    }
    for (idx, &lag) in ALDOUS_LAG_STEPS.iter().enumerate() {
        if lag > steps {
            continue;
        }
        let hits = alive
            .iter()
            .filter(|s| s.aldous_argmax_disp[idx] >= ALDOUS_KAPPA)
            .count();
        rows.push(binomial_summary(
            &format!("aldous_argmax_v_lag_{lag}dt"),
            hits,
            alive.len(),
        ));
    }

    Ok(EnsembleReport {
        diagnostics: rows,
        blow_up_count,
        config: cfg.clone(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Per-estimator summary of a Galerkin sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    pub estimator: String,
    pub per_dim_means: Vec<f64>,
    pub max_over_dims: f64,
    /// `(max − min) / mean-over-dims`; 0 when degenerate.
    pub relative_spread: f64,
}

/// A uniform-bound table: one report per Galerkin dimension plus spread
/// summaries for the three energy estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub dims: Vec<usize>,
    pub reports: Vec<EnsembleReport>,
    pub summary: Vec<SweepSummaryRow>,
}

/// Run the ensemble at each dimension with a shared master seed.
pub fn galerkin_sweep(base: &SimConfig, dims: &[usize]) -> Result<SweepTable> {
    if dims.is_empty() {
        return Err(SimError::Validation {
            field: "dims",
            msg: "sweep needs at least one dimension".into(),
        });
    }
    if dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SimError::Validation {
            field: "dims",
            msg: "sweep dimensions must be strictly increasing".into(),
        });
    }
    let noise = base.noise_spec()?;
    if noise.max_mode() > dims[0] {
        return Err(SimError::Validation {
            field: "dims",
            msg: format!(
                "noise uses mode {} not representable in dimension {}",
                noise.max_mode(),
                dims[0]
            ),
        });
    }
    let mut reports = Vec::with_capacity(dims.len());
    for &dim in dims {
        let mut cfg = base.clone();
        cfg.galerkin_dim = dim;
        reports.push(run_ensemble(&cfg)?);
    }
    let summary = ["sup_v_sq", "sup_l2n_pow", "int_e_sq"]
        .iter()
        .map(|name| {
            let per_dim: Vec<f64> = reports
                .iter()
                .map(|r| r.get(name).map_or(f64::NAN, |d| d.mean))
                .collect();
            let max = per_dim.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = per_dim.iter().copied().fold(f64::INFINITY, f64::min);
            let mean = per_dim.iter().sum::<f64>() / per_dim.len() as f64;
            SweepSummaryRow {
                estimator: name.to_string(),
                per_dim_means: per_dim,
                max_over_dims: max,
                relative_spread: if mean > 0.0 { (max - min) / mean } else { 0.0 },
            }
        })
        .collect();
    Ok(SweepTable {
        dims: dims.to_vec(),
        reports,
        summary,
    })
}

/// One step size's row of a refinement study. Means are taken over the
/// paths that survived at every refinement level, so the comparison is
/// coupled across rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementRow {
    pub dt: f64,
    /// Mean over coupled paths of `max_t | |u|² − 1 |` for the Heun scheme.
    pub heun_defect: f64,
    /// Mean over coupled paths of `max_t |u_ito − u_heun|_H`.
    pub cross_scheme_distance: f64,
    /// `|ensemble mean of the weak-form residual vector|_H` on Heun paths.
    pub weakform_residual: f64,
    /// `|u(T) − exact|_H` against the heat kernel; only in linear mode
    /// with the noise off.
    pub closed_form_error: Option<f64>,
    pub coupled_paths: usize,
}

/// Fitted log–log orders for each refinement column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementOrders {
    pub heun_defect: Option<f64>,
    pub cross_scheme_distance: Option<f64>,
    pub weakform_residual: Option<f64>,
    pub closed_form_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTable {
    pub rows: Vec<RefinementRow>,
    pub orders: RefinementOrders,
}

/// Least-squares slope of `ln err` against `ln dt`; `None` unless at
/// least two strictly positive errors are available.
pub fn fit_order(dts: &[f64], errs: &[f64]) -> Option<f64> {
    if dts.len() != errs.len() || dts.len() < 2 || errs.iter().any(|&e| !(e > 0.0)) {
        return None;
    }
    let n = dts.len() as f64;
    let lx: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

struct RefinementPath {
    /// Per level: (heun defect, heun survived, cross distance, both survived,
    /// weak-form residual vector, closed-form error).
    levels: Vec<LevelOutcome>,
}

struct LevelOutcome {
    heun_defect: f64,
    heun_alive: bool,
    cross_distance: f64,
    both_alive: bool,
    weakform: Option<SpectralCoeffs>,
    closed_form_error: Option<f64>,
}

/// Coupled dt-refinement: the finest increments are drawn once per path
/// and coarsened by exact block sums, so every level sees the same
/// Brownian path.
pub fn dt_refinement(base: &SimConfig, dts: &[f64]) -> Result<RefinementTable> {
    if dts.is_empty() {
        return Err(SimError::NonNestedSteps);
    }
    for w in dts.windows(2) {
        if w[0] / w[1] != 2.0 {
            return Err(SimError::NonNestedSteps);
        }
    }
    let finest = *dts.last().unwrap();
    let mut cfg = base.clone();
    cfg.dt = finest;
    cfg.validate()?;
    let fine_steps = cfg.step_count();

    let grid = QuadratureGrid::new(cfg.galerkin_dim, cfg.n_poly);
    let noise = cfg.noise_spec()?;
    let mut dynamics = Dynamics::new(&grid, &noise, cfg.n_poly);
    dynamics.nonlinearity = cfg.nonlinearity;
    let u0 = cfg.initial_state()?;
    let linear_reference = (!cfg.nonlinearity && noise.dim() == 0).then(|| {
        let init = crate::integrators::normalize_initial(&u0, cfg.galerkin_dim).unwrap();
        let decayed: Vec<f64> = init
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &a)| a * (-crate::spectral::eigenvalue(i + 1) * cfg.time_horizon).exp())
            .collect();
        SpectralCoeffs::new(decayed).unwrap()
    });

    let per_path: Vec<RefinementPath> = (0..cfg.path_count as u64)
        .into_par_iter()
        .map(|p| -> Result<RefinementPath> {
            let fine = generate_increments(noise.dim(), fine_steps, finest, path_seed(cfg.seed, p));
            let mut levels = Vec::with_capacity(dts.len());
            for &dt in dts {
                let factor = (dt / finest).round() as usize;
                let inc = fine.coarsen(factor)?;
                let heun = run_path(Scheme::StratHeun, &u0, cfg.galerkin_dim, inc.clone(), &dynamics)?;
                let ito = run_path(Scheme::ItoCorrected, &u0, cfg.galerkin_dim, inc, &dynamics)?;
                let heun_alive = heun.blow_up.is_none();
                let both_alive = heun_alive && ito.blow_up.is_none();
                let cross_distance = if both_alive {
                    heun.states
                        .iter()
                        .zip(&ito.states)
                        .map(|(a, b)| crate::spectral::norm_h_sq(&a.add_scaled(b, -1.0)).sqrt())
                        .fold(0.0, f64::max)
                } else {
                    0.0
                };
                let weakform = if heun_alive {
                    Some(weak_form_residual_vector(&heun, &dynamics)?)
                } else {
                    None
                };
                let closed_form_error = linear_reference.as_ref().and_then(|exact| {
                    let scheme_rec = match cfg.scheme {
                        Scheme::StratHeun | Scheme::Projected => &heun,
                        Scheme::ItoCorrected => &ito,
                    };
                    scheme_rec.blow_up.is_none().then(|| {
                        norm_h(&scheme_rec.states.last().unwrap().add_scaled(exact, -1.0)).unwrap()
                    })
                });
                levels.push(LevelOutcome {
                    heun_defect: if heun_alive { diagnostics::sphere_defect(&heun) } else { 0.0 },
                    heun_alive,
                    cross_distance,
                    both_alive,
                    weakform,
                    closed_form_error,
                });
            }
            Ok(RefinementPath { levels })
        })
        .collect::<Result<Vec<_>>>()?;

    // Couple across levels: keep only paths alive at every level.
    let heun_ok: Vec<bool> = per_path
        .iter()
        .map(|p| p.levels.iter().all(|l| l.heun_alive))
        .collect();
    let both_ok: Vec<bool> = per_path
        .iter()
        .map(|p| p.levels.iter().all(|l| l.both_alive))
        .collect();

    let mut rows = Vec::with_capacity(dts.len());
    for (li, &dt) in dts.iter().enumerate() {
        let mut defect_sum = 0.0;
        let mut defect_n = 0usize;
        let mut cross_sum = 0.0;
        let mut cross_n = 0usize;
        let mut resid_mean: Option<SpectralCoeffs> = None;
        let mut resid_n = 0usize;
        let mut cf_sum = 0.0;
        let mut cf_n = 0usize;
        for (pi, p) in per_path.iter().enumerate() {
            let level = &p.levels[li];
            if heun_ok[pi] {
                defect_sum += level.heun_defect;
                defect_n += 1;
                if let Some(r) = &level.weakform {
                    resid_mean = Some(match resid_mean {
                        Some(acc) => acc.add_scaled(r, 1.0),
                        None => r.clone(),
                    });
                    resid_n += 1;
                }
            }
            if both_ok[pi] {
                cross_sum += level.cross_distance;
                cross_n += 1;
            }
            if let Some(e) = level.closed_form_error {
                cf_sum += e;
                cf_n += 1;
            }
        }
        rows.push(RefinementRow {
            dt,
            heun_defect: if defect_n > 0 { defect_sum / defect_n as f64 } else { 0.0 },
            cross_scheme_distance: if cross_n > 0 { cross_sum / cross_n as f64 } else { 0.0 },
            weakform_residual: match (&resid_mean, resid_n) {
                (Some(acc), n) if n > 0 => {
                    crate::spectral::norm_h_sq(&acc.scaled(1.0 / n as f64)).sqrt()
                }
                _ => 0.0,
            },
            closed_form_error: (cf_n > 0).then(|| cf_sum / cf_n as f64),
            coupled_paths: cross_n,
        });
    }

    let col = |f: &dyn Fn(&RefinementRow) -> f64| -> Vec<f64> { rows.iter().map(|r| f(r)).collect() };
    let orders = RefinementOrders {
        heun_defect: fit_order(dts, &col(&|r| r.heun_defect)),
        cross_scheme_distance: fit_order(dts, &col(&|r| r.cross_scheme_distance)),
        weakform_residual: fit_order(dts, &col(&|r| r.weakform_residual)),
        closed_form_error: if rows.iter().all(|r| r.closed_form_error.is_some()) {
            fit_order(
                dts,
                &rows
                    .iter()
                    .map(|r| r.closed_form_error.unwrap())
                    .collect::<Vec<_>>(),
            )
        } else {
            None
        },
    };
    Ok(RefinementTable { rows, orders })
}
