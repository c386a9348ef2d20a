//! Run configuration: plain `key = value` files with a sparse `k:value`
//! notation for spectral functions, strict unknown-key rejection, and a
//! serializer whose output parses back to an identical config.
//!
//! Keys and defaults:
//!
//! ```text
//!   galerkin_dim = 16
//!   n_poly       = 1
//!   T            = 1.0
//!   dt           = 0.001
//!   scheme       = strat_heun          # ito_corrected | strat_heun | projected
//!   seed         = 0
//!   path_count   = 2000
//!   nonlinearity = on                  # off = linear heat test mode
//!   u0           = 1:0.7071067811865476, 2:0.7071067811865476
//!   phi.1        = 1:0.5
//!   phi.2        = 2:0.5
//! ```
//!
//! `phi.j` keys must form a contiguous run `phi.1 .. phi.N`; every mode
//! index they touch must fit inside `galerkin_dim`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::fields::NoiseSpec;
use crate::integrators::Scheme;
use crate::spectral::SpectralCoeffs;

/// A spectral function given as sparse `(mode, coefficient)` pairs.
pub type SparseCoeffs = Vec<(usize, f64)>;

/// Full description of one Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub galerkin_dim: usize,
    pub n_poly: u32,
    pub time_horizon: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub path_count: usize,
    pub nonlinearity: bool,
    pub initial_condition: SparseCoeffs,
    pub noise_directions: Vec<SparseCoeffs>,
}

impl Default for SimConfig {
    /// The desk-scale default: dimension 16, linear-exponent
    /// nonlinearity, two noise directions 0.5·e₁ and 0.5·e₂, horizon 1
    /// at dt = 1e-3, 2000 Heun paths from (e₁+e₂)/√2.
    fn default() -> Self {
        SimConfig {
            galerkin_dim: 16,
            n_poly: 1,
            time_horizon: 1.0,
            dt: 1e-3,
            scheme: Scheme::StratHeun,
            seed: 0,
            path_count: 2000,
            nonlinearity: true,
            initial_condition: vec![
                (1, std::f64::consts::FRAC_1_SQRT_2),
                (2, std::f64::consts::FRAC_1_SQRT_2),
            ],
            noise_directions: vec![vec![(1, 0.5)], vec![(2, 0.5)]],
        }
    }
}

impl SimConfig {
    /// Number of uniform steps; validation guarantees T/dt is integral.
    pub fn step_count(&self) -> usize {
        (self.time_horizon / self.dt).round() as usize
    }

    /// Brownian dimension N.
    pub fn noise_dim(&self) -> usize {
        self.noise_directions.len()
    }

    fn densify(sparse: &SparseCoeffs, m: usize, field: &'static str) -> Result<SpectralCoeffs> {
        let mut coeffs = vec![0.0; m];
        for &(k, v) in sparse {
            if k == 0 || k > m {
                return Err(SimError::Validation {
                    field,
                    msg: format!("mode {k} outside 1..={m}"),
                });
            }
            if !v.is_finite() {
                return Err(SimError::Validation {
                    field,
                    msg: format!("non-finite coefficient for mode {k}"),
                });
            }
            coeffs[k - 1] += v;
        }
        SpectralCoeffs::new(coeffs)
    }

    /// Materialize the noise directions in `F_{galerkin_dim}`.
    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        let dirs = self
            .noise_directions
            .iter()
            .map(|s| Self::densify(s, self.galerkin_dim, "phi"))
            .collect::<Result<Vec<_>>>()?;
        NoiseSpec::new(dirs)
    }

    /// Materialize the (unnormalized) initial condition.
    pub fn initial_state(&self) -> Result<SpectralCoeffs> {
        Self::densify(&self.initial_condition, self.galerkin_dim, "u0")
    }

    /// Check every invariant; returns the config for chaining.
    pub fn validate(&self) -> Result<&Self> {
        if self.galerkin_dim == 0 {
            return Err(SimError::Validation {
                field: "galerkin_dim",
                msg: "must be at least 1".into(),
            });
        }
        if self.n_poly == 0 {
            return Err(SimError::Validation {
                field: "n_poly",
                msg: "must be at least 1".into(),
            });
        }
        if !(self.time_horizon > 0.0) {
            return Err(SimError::Validation {
                field: "T",
                msg: "must be positive".into(),
            });
        }
        if !(self.dt > 0.0) {
            return Err(SimError::Validation {
                field: "dt",
                msg: "must be positive".into(),
            });
        }
        let ratio = self.time_horizon / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(SimError::Validation {
                field: "dt",
                msg: format!("T/dt = {ratio} is not a positive integer"),
            });
        }
        if self.path_count == 0 {
            return Err(SimError::Validation {
                field: "path_count",
                msg: "must be at least 1".into(),
            });
        }
        self.noise_spec()?;
        self.initial_state()?;
        Ok(self)
    }
}

fn parse_sparse(text: &str, line: usize) -> Result<SparseCoeffs> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (k, v) = part.split_once(':').ok_or_else(|| SimError::Parse {
            line,
            msg: format!("expected `mode:value`, got `{part}`"),
        })?;
        let k: usize = k.trim().parse().map_err(|_| SimError::Parse {
            line,
            msg: format!("bad mode index `{k}`"),
        })?;
        let v: f64 = v.trim().parse().map_err(|_| SimError::Parse {
            line,
            msg: format!("bad coefficient `{v}`"),
        })?;
        out.push((k, v));
    }
    if out.is_empty() {
        return Err(SimError::Parse {
            line,
            msg: "empty spectral function".into(),
        });
    }
    Ok(out)
}

/// Parse a config file. Unknown keys are rejected; absent keys fall back
/// to the defaults; the result is fully validated.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let mut cfg = SimConfig::default();
    let mut phis: BTreeMap<usize, SparseCoeffs> = BTreeMap::new();
    let mut saw_phi = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| SimError::Parse {
            line: line_no,
            msg: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad_value = |msg: String| SimError::Parse {
            line: line_no,
            msg,
        };
        match key {
            "galerkin_dim" => {
                cfg.galerkin_dim = value
                    .parse()
                    .map_err(|_| bad_value(format!("bad galerkin_dim `{value}`")))?;
            }
            "n_poly" => {
                cfg.n_poly = value
                    .parse()
                    .map_err(|_| bad_value(format!("bad n_poly `{value}`")))?;
            }
            "T" => {
                cfg.time_horizon = value
                    .parse()
                    .map_err(|_| bad_value(format!("bad T `{value}`")))?;
            }
            "dt" => {
                cfg.dt = value
                    .parse()
                    .map_err(|_| bad_value(format!("bad dt `{value}`")))?;
            }
            "scheme" => {
                cfg.scheme = value.parse()?;
            }
            "seed" => {
                cfg.seed = value
                    .parse()
                    .map_err(|_| bad_value(format!("bad seed `{value}`")))?;
            }
            "path_count" => {
                cfg.path_count = value
                    .parse()
                    .map_err(|_| bad_value(format!("bad path_count `{value}`")))?;
            }
            "nonlinearity" => {
                cfg.nonlinearity = match value {
                    "on" | "true" => true,
                    "off" | "false" => false,
                    _ => return Err(bad_value(format!("bad nonlinearity `{value}`"))),
                };
            }
            "u0" => {
                cfg.initial_condition = parse_sparse(value, line_no)?;
            }
            _ => {
                if let Some(j) = key.strip_prefix("phi.") {
                    let j: usize = j.parse().map_err(|_| bad_value(format!("bad noise index `{key}`")))?;
                    if j == 0 {
                        return Err(bad_value("noise indices start at 1".into()));
                    }
                    phis.insert(j, parse_sparse(value, line_no)?);
                    saw_phi = true;
                } else {
                    return Err(SimError::Parse {
                        line: line_no,
                        msg: format!("unknown key `{key}`"),
                    });
                }
            }
        }
    }
    if saw_phi {
        let n = phis.len();
        if phis.keys().copied().ne(1..=n) {
            return Err(SimError::Validation {
                field: "phi",
                msg: "noise directions must be numbered phi.1 .. phi.N".into(),
            });
        }
        cfg.noise_directions = phis.into_values().collect();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_sparse(sparse: &SparseCoeffs) -> String {
    sparse
        .iter()
        .map(|(k, v)| format!("{k}:{}", crate::report::format_f64(*v)))
        .collect::<Vec<_>>()
        .join(",")
}

/// Serialize so that `parse_config(serialize_config(c)) == c`.
pub fn serialize_config(cfg: &SimConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!("galerkin_dim = {}\n", cfg.galerkin_dim));
    out.push_str(&format!("n_poly = {}\n", cfg.n_poly));
    out.push_str(&format!("T = {}\n", crate::report::format_f64(cfg.time_horizon)));
    out.push_str(&format!("dt = {}\n", crate::report::format_f64(cfg.dt)));
    out.push_str(&format!("scheme = {}\n", cfg.scheme.name()));
    out.push_str(&format!("seed = {}\n", cfg.seed));
    out.push_str(&format!("path_count = {}\n", cfg.path_count));
    out.push_str(&format!(
        "nonlinearity = {}\n",
        if cfg.nonlinearity { "on" } else { "off" }
    ));
    out.push_str(&format!("u0 = {}\n", fmt_sparse(&cfg.initial_condition)));
    for (j, phi) in cfg.noise_directions.iter().enumerate() {
        out.push_str(&format!("phi.{} = {}\n", j + 1, fmt_sparse(phi)));
    }
    out
}
