//! The Matern SPDE spatial precision operator and its parameter
//! conversions.
//!
//! With smoothness exponent fixed at `alpha = 2` and lumped mass `C`, the
//! spatial precision over mesh vertices is
//! `Q = tau^2 (kappa^4 C + 2 kappa^2 G + G C^{-1} G)`;
//! the corresponding field has Matern correlation `(kappa d) K1(kappa d)`
//! and marginal variance `1 / (4 pi kappa^2 tau^2)`.

use sprs::{CsMat, TriMat};

use crate::bessel::bessel_k1;
use crate::error::{Error, Result};
use crate::fem::FemMatrices;

/// Smoothness exponent of the SPDE operator; fixed for two-dimensional
/// domains.
pub const ALPHA: u32 = 2;

/// Sparse SPD spatial precision matrix over mesh vertices.
#[derive(Debug, Clone)]
pub struct SpatialPrecision {
    pub q: CsMat<f64>,
    pub kappa: f64,
    pub tau: f64,
}

impl SpatialPrecision {
    pub fn n(&self) -> usize {
        self.q.rows()
    }

    /// Nominal marginal variance `1 / (4 pi kappa^2 tau^2)` of the
    /// stationary field.
    pub fn nominal_variance(&self) -> f64 {
        1.0 / (4.0 * std::f64::consts::PI * self.kappa * self.kappa * self.tau * self.tau)
    }
}

/// Assembles the spatial precision for scale `kappa` and variance scaling
/// `tau` from preassembled FEM matrices.
pub fn spatial_precision(fem: &FemMatrices, kappa: f64, tau: f64) -> Result<SpatialPrecision> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::domain(format!("kappa must be positive, got {kappa}")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::domain(format!("tau must be positive, got {tau}")));
    }
    let n = fem.c_lumped.len();

    // G C^{-1} G, symmetrized entrywise to kill roundoff asymmetry from
    // the sparse product.
    let cinv_g = scale_rows(&fem.g, &fem.c_lumped);
    let ggc = &fem.g * &cinv_g;
    let ggc = ggc.to_csc();
    let ggc_t = ggc.transpose_view().to_csc();
    let mut sym = TriMat::with_capacity((n, n), ggc.nnz());
    for ((va, (ia, ja)), (vb, (ib, jb))) in ggc.iter().zip(ggc_t.iter()) {
        debug_assert_eq!((ia, ja), (ib, jb));
        sym.add_triplet(ia, ja, 0.5 * (*va + *vb));
    }
    let ggc: CsMat<f64> = sym.to_csc();

    let t2 = tau * tau;
    let k2 = kappa * kappa;
    let k4 = k2 * k2;

    let mut tri = TriMat::with_capacity((n, n), ggc.nnz() + fem.g.nnz() + n);
    for (i, &c) in fem.c_lumped.iter().enumerate() {
        tri.add_triplet(i, i, t2 * k4 * c);
    }
    for (v, (i, j)) in fem.g.iter() {
        tri.add_triplet(i, j, t2 * 2.0 * k2 * *v);
    }
    for (v, (i, j)) in ggc.iter() {
        tri.add_triplet(i, j, t2 * *v);
    }
    let q = tri.to_csc();

    if q.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(format!(
            "spatial precision overflowed for kappa={kappa:e}, tau={tau:e}"
        )));
    }
    Ok(SpatialPrecision { q, kappa, tau })
}

/// `C^{-1} G` for diagonal `C` (row scaling).
fn scale_rows(g: &CsMat<f64>, c: &[f64]) -> CsMat<f64> {
    let mut out = g.to_owned();
    // CSC storage: entry rows are the inner indices.
    let indices: Vec<usize> = out.indices().to_vec();
    for (k, v) in out.data_mut().iter_mut().enumerate() {
        *v /= c[indices[k]];
    }
    out
}

/// Matern correlation (smoothness 1) at great-circle distance `d` radians:
/// `(kappa d) K1(kappa d)`, continuous at zero.
pub fn matern_correlation(d: f64, kappa: f64) -> f64 {
    assert!(d >= 0.0, "distance must be nonnegative");
    assert!(kappa > 0.0, "kappa must be positive");
    let x = kappa * d;
    if x == 0.0 {
        return 1.0;
    }
    if x > 600.0 {
        return 0.0;
    }
    (x * bessel_k1(x)).clamp(0.0, 1.0)
}

/// The distance at which Matern correlation becomes negligible:
/// `r = sqrt(8)/kappa`, scaled to the same unit as `radius`.
pub fn range_from_kappa(kappa: f64, radius: f64) -> f64 {
    8.0_f64.sqrt() / kappa * radius
}

/// Inverts the range and marginal-variance identities: given a range in
/// the unit of `radius` and a marginal variance, returns `(kappa, tau)`
/// with `kappa = sqrt(8)/r` (unit-sphere radians) and
/// `tau = 1/(sqrt(4 pi) kappa sigma)`.
pub fn kappa_tau_from_range_sigma(r: f64, sigma2: f64, radius: f64) -> Result<(f64, f64)> {
    if !(r > 0.0) {
        return Err(Error::domain(format!("range must be positive, got {r}")));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::domain(format!(
            "marginal variance must be positive, got {sigma2}"
        )));
    }
    let kappa = 8.0_f64.sqrt() / (r / radius);
    let tau = 1.0 / ((4.0 * std::f64::consts::PI).sqrt() * kappa * sigma2.sqrt());
    Ok((kappa, tau))
}
