//! Dirichlet-Laplacian sine eigenbasis on (0, π), Galerkin projection,
//! pseudo-spectral grid transforms, and the H/V/E norm family.
//!
//! The spatial domain is the interval (0, π) with homogeneous Dirichlet
//! boundary conditions, so the eigenpairs are closed-form:
//!
//! ```text
//!   e_k(x) = sqrt(2/π) sin(kx),    λ_k = k²,    k = 1, 2, ...
//! ```
//!
//! A state `u = Σ a_k e_k` is held as its coefficient vector. The three
//! norms are diagonal in this basis:
//!
//! ```text
//!   |u|_H² = Σ a_k²       (L²)
//!   ‖u‖_V² = Σ λ_k a_k²   (H¹₀ seminorm, a norm here since λ_k ≥ 1)
//!   |u|_E² = Σ λ_k² a_k²  (= |Δu|_H²)
//! ```
//!
//! Nonlinear terms are evaluated on a uniform interior grid
//! `x_i = iπ/(M+1)` with weights `π/(M+1)` (discrete sine transform
//! semantics). On that grid, quadrature of any product of sines is exact
//! as long as the total frequency stays below `2(M+1)`, which the
//! dealiasing rule `M ≥ 2·n_poly·m_max` guarantees for `u^(2n-1)`.

use crate::error::{Result, SimError};

/// Coefficients of an element of the Galerkin space `F_m = span{e_1..e_m}`.
///
/// Entry `k-1` multiplies the eigenfunction `e_k`. Constructed values are
/// checked to be finite; arithmetic during time stepping may leave that
/// envelope, which the integrators detect per step.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoeffs {
    coeffs: Vec<f64>,
}

impl SpectralCoeffs {
    /// Wrap a coefficient vector. Rejects empty and non-finite input.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(SimError::DimensionMismatch { left: 0, right: 1 });
        }
        if !coeffs.iter().all(|c| c.is_finite()) {
            return Err(SimError::NumericalFault("SpectralCoeffs::new"));
        }
        Ok(Self { coeffs })
    }

    /// The zero element of `F_m`.
    pub fn zeros(m: usize) -> Self {
        Self {
            coeffs: vec![0.0; m.max(1)],
        }
    }

    /// The eigenfunction `e_k` as an element of `F_m` (requires `k ≤ m`).
    pub fn basis(k: usize, m: usize) -> Result<Self> {
        if k == 0 {
            return Err(SimError::InvalidIndex);
        }
        if k > m {
            return Err(SimError::DimensionMismatch { left: k, right: m });
        }
        let mut coeffs = vec![0.0; m];
        coeffs[k - 1] = 1.0;
        Ok(Self { coeffs })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Truncate to the first `m` coefficients, zero-padding past the end.
    /// This is the Galerkin projection `Q_m`; it is idempotent and
    /// non-expansive in every norm of the family.
    pub fn project(&self, m: usize) -> Self {
        let mut coeffs = vec![0.0; m.max(1)];
        let n = m.min(self.coeffs.len());
        coeffs[..n].copy_from_slice(&self.coeffs[..n]);
        Self { coeffs }
    }

    /// `self + s · other`, zero-extending the shorter operand.
    pub fn add_scaled(&self, other: &Self, s: f64) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut coeffs = vec![0.0; n];
        for (dst, &a) in coeffs.iter_mut().zip(&self.coeffs) {
            *dst = a;
        }
        for (dst, &b) in coeffs.iter_mut().zip(&other.coeffs) {
            *dst += s * b;
        }
        Self { coeffs }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// Apply the spectral Laplacian: `a_k → -λ_k a_k`.
    pub fn laplacian(&self) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, &a)| -(eigenvalue(i + 1)) * a)
                .collect(),
        }
    }
}

/// λ_k = k² for the chosen domain.
pub fn eigenvalue(k: usize) -> f64 {
    let k = k as f64;
    k * k
}

/// Closed-form description of the k-th eigenfunction, evaluable pointwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Eigenfunction {
    pub index: usize,
}

impl Eigenfunction {
    /// `e_k(x) = sqrt(2/π) sin(kx)`; unit H-norm on (0, π).
    pub fn eval(&self, x: f64) -> f64 {
        (2.0 / std::f64::consts::PI).sqrt() * (self.index as f64 * x).sin()
    }
}

/// The k-th eigenpair of the Dirichlet Laplacian on (0, π).
pub fn eigen_pair(k: usize) -> Result<(f64, Eigenfunction)> {
    if k == 0 {
        return Err(SimError::InvalidIndex);
    }
    Ok((eigenvalue(k), Eigenfunction { index: k }))
}

/// H inner product `⟨a, b⟩ = Σ a_k b_k`, zero-extending the shorter vector.
pub fn inner_h(a: &SpectralCoeffs, b: &SpectralCoeffs) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .sum()
}

/// V inner product `⟨a, b⟩_V = Σ λ_k a_k b_k` (gradient pairing).
pub fn inner_v(a: &SpectralCoeffs, b: &SpectralCoeffs) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .enumerate()
        .map(|(i, (x, y))| eigenvalue(i + 1) * x * y)
        .sum()
}

fn checked(value: f64, context: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(SimError::NumericalFault(context))
    }
}

/// `|u|_H = sqrt(Σ a_k²)`.
pub fn norm_h(u: &SpectralCoeffs) -> Result<f64> {
    checked(norm_h_sq(u).sqrt(), "norm_h")
}

/// `‖u‖_V = sqrt(Σ λ_k a_k²)`.
pub fn norm_v(u: &SpectralCoeffs) -> Result<f64> {
    checked(norm_v_sq(u).sqrt(), "norm_v")
}

/// `|u|_E = sqrt(Σ λ_k² a_k²) = |Δu|_H`.
pub fn norm_e(u: &SpectralCoeffs) -> Result<f64> {
    checked(norm_e_sq(u).sqrt(), "norm_e")
}

pub fn norm_h_sq(u: &SpectralCoeffs) -> f64 {
    u.as_slice().iter().map(|a| a * a).sum()
}

pub fn norm_v_sq(u: &SpectralCoeffs) -> f64 {
    u.as_slice()
        .iter()
        .enumerate()
        .map(|(i, a)| eigenvalue(i + 1) * a * a)
        .sum()
}

pub fn norm_e_sq(u: &SpectralCoeffs) -> f64 {
    u.as_slice()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let lam = eigenvalue(i + 1);
            lam * lam * a * a
        })
        .sum()
}

/// Interior quadrature grid with a precomputed eigenfunction table.
///
/// Nodes `x_i = iπ/(M+1)`, uniform weights `π/(M+1)`. With `M` nodes the
/// grid integrates products of sines of total frequency `< 2(M+1)`
/// exactly, which makes both orthonormality (frequencies ≤ 2·m_max) and
/// the power term `u^(2n-1)` (frequencies ≤ 2·n_poly·m_max ≤ M) exact up
/// to rounding.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Row k-1 holds e_k evaluated at every node; flat row-major.
    basis_table: Vec<f64>,
    m_max: usize,
}

impl QuadratureGrid {
    /// Build the smallest grid that dealiases exponent `poly_exponent`
    /// for states up to dimension `m_max`.
    pub fn new(m_max: usize, poly_exponent: u32) -> Self {
        let nodes = 2 * (poly_exponent as usize).max(1) * m_max.max(1);
        Self::with_nodes(m_max.max(1), nodes)
    }

    /// Build with an explicit node count (must cover orthonormality of
    /// the first `m_max` modes, i.e. `nodes ≥ m_max`).
    pub fn with_nodes(m_max: usize, node_count: usize) -> Self {
        let m_big = node_count + 1;
        let h = std::f64::consts::PI / m_big as f64;
        let nodes: Vec<f64> = (1..=node_count).map(|i| i as f64 * h).collect();
        let weights = vec![h; node_count];
        let mut basis_table = Vec::with_capacity(m_max * node_count);
        for k in 1..=m_max {
            let ef = Eigenfunction { index: k };
            basis_table.extend(nodes.iter().map(|&x| ef.eval(x)));
        }
        Self {
            nodes,
            weights,
            basis_table,
            m_max,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn basis_row(&self, k: usize) -> &[f64] {
        let n = self.nodes.len();
        &self.basis_table[(k - 1) * n..k * n]
    }

    /// Whether `u^(2·n_poly - 1)` for `u ∈ F_dim` is alias-free here.
    pub fn dealiases(&self, dim: usize, n_poly: u32) -> bool {
        dim <= self.m_max && self.nodes.len() >= 2 * n_poly as usize * dim
    }

    fn require_dealias(&self, dim: usize, n_poly: u32) -> Result<()> {
        if self.dealiases(dim, n_poly) {
            Ok(())
        } else {
            Err(SimError::DealiasViolation {
                nodes: self.nodes.len(),
                n_poly,
                dim,
            })
        }
    }

    /// Evaluate `u` at every grid node.
    pub fn synthesize(&self, u: &SpectralCoeffs) -> Result<Vec<f64>> {
        if u.len() > self.m_max {
            return Err(SimError::DimensionMismatch {
                left: u.len(),
                right: self.m_max,
            });
        }
        let n = self.nodes.len();
        let mut values = vec![0.0; n];
        for (k, &a) in u.as_slice().iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (v, &b) in values.iter_mut().zip(self.basis_row(k + 1)) {
                *v += a * b;
            }
        }
        Ok(values)
    }

    /// Project point values onto `F_m` by quadrature:
    /// `a_k = Σ_i w_i v_i e_k(x_i)`.
    pub fn analyze(&self, values: &[f64], m: usize) -> Result<SpectralCoeffs> {
        if values.len() != self.nodes.len() {
            return Err(SimError::DimensionMismatch {
                left: values.len(),
                right: self.nodes.len(),
            });
        }
        if m > self.m_max || m == 0 {
            return Err(SimError::DimensionMismatch {
                left: m,
                right: self.m_max,
            });
        }
        let mut coeffs = vec![0.0; m];
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c = values
                .iter()
                .zip(self.basis_row(k + 1))
                .zip(&self.weights)
                .map(|((v, b), w)| v * b * w)
                .sum();
        }
        Ok(SpectralCoeffs { coeffs })
    }

    /// `|u|_{L^{2n}}`: synthesize, raise to the 2n-th power, integrate,
    /// take the 2n-th root.
    pub fn norm_l2n(&self, u: &SpectralCoeffs, n_poly: u32) -> Result<f64> {
        Ok(self.l2n_pow(u, n_poly)?.powf(1.0 / (2.0 * n_poly as f64)))
    }

    /// `|u|_{L^{2n}}^{2n} = ∫ u^{2n}` by exact quadrature.
    pub fn l2n_pow(&self, u: &SpectralCoeffs, n_poly: u32) -> Result<f64> {
        self.require_dealias(u.len(), n_poly)?;
        let values = self.synthesize(u)?;
        let p = 2 * n_poly as i32;
        Ok(values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v.powi(p) * w)
            .sum())
    }
}

/// `norm_L2n` as a free operation on a shared grid.
pub fn norm_l2n(u: &SpectralCoeffs, poly_exponent: u32, grid: &QuadratureGrid) -> Result<f64> {
    grid.norm_l2n(u, poly_exponent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const TOL: f64 = 1e-10;

    #[test]
    fn eigen_pairs_are_squares() {
        assert_eq!(eigen_pair(1).unwrap().0, 1.0);
        assert_eq!(eigen_pair(3).unwrap().0, 9.0);
        assert!(matches!(eigen_pair(0), Err(SimError::InvalidIndex)));
    }

    #[test]
    fn basis_has_unit_h_norm_under_quadrature() {
        // |e_2|_H via the grid equals 1: closed form ∫ (2/π) sin²(2x) dx = 1.
        let grid = QuadratureGrid::new(8, 1);
        let e2 = SpectralCoeffs::basis(2, 8).unwrap();
        let vals = grid.synthesize(&e2).unwrap();
        let quad: f64 = vals
            .iter()
            .zip(grid.weights())
            .map(|(v, w)| v * v * w)
            .sum();
        assert!((quad.sqrt() - 1.0).abs() < TOL);
    }

    #[test]
    fn grid_orthonormality_is_exact() {
        let m = 12;
        let grid = QuadratureGrid::new(m, 1);
        for i in 1..=m {
            let ei = grid.basis_row(i);
            for j in 1..=m {
                let ej = grid.basis_row(j);
                let q: f64 = ei
                    .iter()
                    .zip(ej)
                    .zip(grid.weights())
                    .map(|((a, b), w)| a * b * w)
                    .sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (q - expect).abs() < TOL,
                    "⟨e_{i}, e_{j}⟩ = {q}, want {expect}"
                );
            }
        }
    }

    #[test]
    fn project_truncates_and_pads() {
        let u = SpectralCoeffs::new(vec![0.3, 0.4, 0.5]).unwrap();
        assert_eq!(u.project(2).as_slice(), &[0.3, 0.4]);
        let single = SpectralCoeffs::new(vec![1.0]).unwrap();
        assert_eq!(single.project(3).as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn norm_family_on_basis_vectors() {
        let e1 = SpectralCoeffs::basis(1, 4).unwrap();
        assert!((norm_h(&e1).unwrap() - 1.0).abs() < 1e-15);
        assert!((norm_v(&e1).unwrap() - 1.0).abs() < 1e-15);
        assert!((norm_e(&e1).unwrap() - 1.0).abs() < 1e-15);

        let e2 = SpectralCoeffs::basis(2, 4).unwrap();
        assert!((norm_v(&e2).unwrap() - 2.0).abs() < 1e-15);
        assert!((norm_e(&e2).unwrap() - 4.0).abs() < 1e-15);

        let z = SpectralCoeffs::zeros(4);
        assert_eq!(norm_h(&z).unwrap(), 0.0);
        assert_eq!(norm_v(&z).unwrap(), 0.0);
        assert_eq!(norm_e(&z).unwrap(), 0.0);
    }

    #[test]
    fn non_finite_input_is_a_numerical_fault() {
        assert!(SpectralCoeffs::new(vec![f64::NAN]).is_err());
        let mut u = SpectralCoeffs::zeros(2);
        u.as_mut_slice()[0] = f64::INFINITY;
        assert!(matches!(norm_h(&u), Err(SimError::NumericalFault(_))));
    }

    #[test]
    fn l2n_norm_matches_closed_forms() {
        let grid = QuadratureGrid::new(8, 2);
        let e1 = SpectralCoeffs::basis(1, 8).unwrap();
        // 2n = 2: plain L² norm of a unit vector.
        assert!((norm_l2n(&e1, 1, &grid).unwrap() - 1.0).abs() < TOL);
        // 2n = 4: ∫ (2/π)² sin⁴x dx = 3/(2π), so |e_1|_{L⁴} = (3/(2π))^{1/4}.
        let expect_pow = 3.0 / (2.0 * PI);
        assert!((grid.l2n_pow(&e1, 2).unwrap() - expect_pow).abs() < TOL);
        assert!((norm_l2n(&e1, 2, &grid).unwrap() - expect_pow.powf(0.25)).abs() < TOL);
        // Zero maps to zero.
        let z = SpectralCoeffs::zeros(8);
        assert_eq!(norm_l2n(&z, 2, &grid).unwrap(), 0.0);
    }

    #[test]
    fn undersized_grid_is_rejected() {
        let grid = QuadratureGrid::with_nodes(8, 16); // fine for n_poly = 1 only
        let u = SpectralCoeffs::basis(8, 8).unwrap();
        assert!(grid.norm_l2n(&u, 1).is_ok());
        assert!(matches!(
            grid.norm_l2n(&u, 2),
            Err(SimError::DealiasViolation { .. })
        ));
    }

    #[test]
    fn synthesize_analyze_roundtrip_on_basis() {
        let grid = QuadratureGrid::new(6, 1);
        let e1 = SpectralCoeffs::basis(1, 6).unwrap();
        let back = grid.analyze(&grid.synthesize(&e1).unwrap(), 6).unwrap();
        for (i, (&a, &b)) in back.as_slice().iter().zip(e1.as_slice()).enumerate() {
            assert!((a - b).abs() < TOL, "coeff {i}: {a} vs {b}");
        }
        let zeros = grid.analyze(&vec![0.0; grid.node_count()], 6).unwrap();
        assert_eq!(zeros.as_slice(), SpectralCoeffs::zeros(6).as_slice());
    }

    #[test]
    fn pointwise_square_matches_sine_expansion() {
        // e_1² = (2/π) sin²x has the closed-form sine coefficients
        // a_k = -(8 / (k(k²-4)π)) sqrt(2/π) for odd k, 0 for even k.
        // sin²x is a cosine polynomial, so its sine tail decays like k⁻³
        // and the analysis carries an aliasing error ~ (2M)⁻³; a wide
        // grid brings that below 1e-8.
        let grid = QuadratureGrid::with_nodes(4, 1024);
        let e1 = SpectralCoeffs::basis(1, 4).unwrap();
        let vals = grid.synthesize(&e1).unwrap();
        let squared: Vec<f64> = vals.iter().map(|v| v * v).collect();
        let got = grid.analyze(&squared, 4).unwrap();
        let c = (2.0f64 / PI).sqrt() / PI;
        let a1 = c * 8.0 / 3.0;
        let a3 = -c * 8.0 / 15.0;
        let expect = [a1, 0.0, a3, 0.0];
        for (i, (&g, &e)) in got.as_slice().iter().zip(&expect).enumerate() {
            assert!((g - e).abs() < 1e-8, "coeff {i}: {g} vs {e}");
        }
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let grid = QuadratureGrid::new(4, 1);
        let too_big = SpectralCoeffs::zeros(5);
        assert!(matches!(
            grid.synthesize(&too_big),
            Err(SimError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            grid.analyze(&[0.0; 3], 4),
            Err(SimError::DimensionMismatch { .. })
        ));
    }

    fn arb_coeffs(m: usize) -> impl Strategy<Value = SpectralCoeffs> {
        proptest::collection::vec(-10.0f64..10.0, m)
            .prop_map(|v| SpectralCoeffs::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn norm_ordering_holds(u in arb_coeffs(16)) {
            let h = norm_h(&u).unwrap();
            let v = norm_v(&u).unwrap();
            let e = norm_e(&u).unwrap();
            prop_assert!(e >= v - 1e-12);
            prop_assert!(v >= h - 1e-12);
        }

        #[test]
        fn projection_is_idempotent_and_non_expansive(u in arb_coeffs(16), m in 1usize..20) {
            let p = u.project(m);
            let pp = p.project(m);
            prop_assert_eq!(pp.as_slice(), p.as_slice());
            prop_assert!(norm_h(&p).unwrap() <= norm_h(&u).unwrap() + 1e-12);
            prop_assert!(norm_v(&p).unwrap() <= norm_v(&u).unwrap() + 1e-12);
            prop_assert!(norm_e(&p).unwrap() <= norm_e(&u).unwrap() + 1e-12);
        }

        #[test]
        fn quadrature_l2_agrees_with_parseval(u in arb_coeffs(16)) {
            let grid = QuadratureGrid::new(16, 1);
            let vals = grid.synthesize(&u).unwrap();
            let quad_sq: f64 = vals.iter().zip(grid.weights()).map(|(v, w)| v * v * w).sum();
            prop_assert!((quad_sq - norm_h_sq(&u)).abs() < 1e-10 * (1.0 + norm_h_sq(&u)));
        }

        #[test]
        fn roundtrip_is_identity_on_f_m(u in arb_coeffs(16)) {
            let grid = QuadratureGrid::new(16, 1);
            let back = grid.analyze(&grid.synthesize(&u).unwrap(), 16).unwrap();
            for (a, b) in back.as_slice().iter().zip(u.as_slice()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
