//! Separable space-time precision: AR(1) in time, SPDE-Matern in space,
//! combined by Kronecker product in time-major ordering.

use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::sparse::kronecker;
use crate::spde::SpatialPrecision;

/// Precision of a stationary AR(1) process scaled to unit marginal
/// variance, so all field variance lives in the spatial factor's `tau`.
#[derive(Debug, Clone)]
pub struct Ar1Precision {
    pub t_len: usize,
    pub rho: f64,
    pub q: CsMat<f64>,
}

impl Ar1Precision {
    /// `log det Q_t = -(T-1) ln(1 - rho^2)`: the inverse is the
    /// correlation matrix `rho^|i-j|` with determinant `(1-rho^2)^{T-1}`.
    pub fn logdet(&self) -> f64 {
        -((self.t_len as f64) - 1.0) * (1.0 - self.rho * self.rho).ln()
    }
}

/// Builds the unit-marginal AR(1) precision for `t_len` slices:
/// `(1/(1-rho^2)) tridiag(-rho; 1, 1+rho^2, ..., 1+rho^2, 1)`, or `[1]`
/// for a single slice.
pub fn ar1_precision(t_len: usize, rho: f64) -> Result<Ar1Precision> {
    if t_len == 0 {
        return Err(Error::domain("need at least one time slice"));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::domain(format!("|rho| must be < 1, got {rho}")));
    }
    let mut tri = TriMat::with_capacity((t_len, t_len), 3 * t_len);
    if t_len == 1 {
        tri.add_triplet(0, 0, 1.0);
    } else {
        let s = 1.0 / (1.0 - rho * rho);
        for t in 0..t_len {
            let d = if t == 0 || t == t_len - 1 {
                1.0
            } else {
                1.0 + rho * rho
            };
            tri.add_triplet(t, t, s * d);
            if t + 1 < t_len && rho != 0.0 {
                tri.add_triplet(t, t + 1, -s * rho);
                tri.add_triplet(t + 1, t, -s * rho);
            }
        }
    }
    Ok(Ar1Precision {
        t_len,
        rho,
        q: tri.to_csc(),
    })
}

/// Separable space-time precision `Q_t (x) Q_s` over `n_vertices * T`
/// nodes, time-major: node `(v, t)` sits at index `t * n_vertices + v`.
#[derive(Debug, Clone)]
pub struct SpaceTimePrecision {
    pub q: CsMat<f64>,
    pub n_vertices: usize,
    pub t_len: usize,
    pub rho: f64,
    /// `log det Q_st` via the Kronecker identity
    /// `m log det Q_t + T log det Q_s`; the spatial log-determinant is
    /// supplied by the caller's factorization.
    pub logdet_qt: f64,
}

impl SpaceTimePrecision {
    pub fn n(&self) -> usize {
        self.n_vertices * self.t_len
    }

    pub fn logdet(&self, logdet_qs: f64) -> f64 {
        (self.n_vertices as f64) * self.logdet_qt + (self.t_len as f64) * logdet_qs
    }
}

/// Kronecker combination of the temporal and spatial precisions.
pub fn kron_precision(qt: &Ar1Precision, qs: &SpatialPrecision) -> Result<SpaceTimePrecision> {
    let n = qt.t_len.checked_mul(qs.n()).ok_or_else(|| {
        Error::resource("space-time dimension overflow".to_string())
    })?;
    if n > 50_000_000 {
        return Err(Error::resource(format!(
            "space-time dimension {n} exceeds memory budget"
        )));
    }
    let q = if qt.t_len == 1 {
        qs.q.clone()
    } else {
        kronecker(&qt.q, &qs.q)
    };
    Ok(SpaceTimePrecision {
        q,
        n_vertices: qs.n(),
        t_len: qt.t_len,
        rho: qt.rho,
        logdet_qt: qt.logdet(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble_fem;
    use crate::mesh::build_icosphere;
    use crate::sparse::{to_dense, FillOrdering, SpdFactor};
    use crate::spde::spatial_precision;
    use approx::assert_relative_eq;

    #[test]
    fn rho_zero_is_identity() {
        let a = ar1_precision(3, 0.0).unwrap();
        let d = to_dense(&a.q);
        assert_relative_eq!((d - nalgebra::DMatrix::identity(3, 3)).norm(), 0.0);
    }

    #[test]
    fn two_slice_inverse_closed_form() {
        let a = ar1_precision(2, 0.5).unwrap();
        let inv = to_dense(&a.q).try_inverse().unwrap();
        assert_relative_eq!(inv[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(inv[(1, 1)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(inv[(0, 1)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn unit_marginal_variance_and_lag1_correlation() {
        let a = ar1_precision(12, 0.91).unwrap();
        SpdFactor::new(&a.q, FillOrdering::Natural).unwrap();
        let inv = to_dense(&a.q).try_inverse().unwrap();
        for t in 0..12 {
            assert_relative_eq!(inv[(t, t)], 1.0, epsilon = 1e-10);
        }
        for t in 0..11 {
            assert_relative_eq!(inv[(t, t + 1)], 0.91, epsilon = 1e-9);
        }
    }

    #[test]
    fn logdet_closed_form_matches_factorization() {
        let a = ar1_precision(7, -0.6).unwrap();
        let f = SpdFactor::new(&a.q, FillOrdering::Natural).unwrap();
        assert_relative_eq!(a.logdet(), f.logdet(), epsilon = 1e-10);
    }

    #[test]
    fn invalid_rho_rejected() {
        assert!(matches!(ar1_precision(5, 1.0), Err(Error::Domain(_))));
        assert!(matches!(ar1_precision(5, -1.2), Err(Error::Domain(_))));
    }

    fn small_spatial() -> SpatialPrecision {
        let mesh = build_icosphere(0).unwrap();
        let fem = assemble_fem(&mesh).unwrap();
        spatial_precision(&fem, 2.0, 0.5).unwrap()
    }

    #[test]
    fn t1_kron_equals_spatial_exactly() {
        let qs = small_spatial();
        let qt = ar1_precision(1, 0.3).unwrap();
        let st = kron_precision(&qt, &qs).unwrap();
        assert_eq!(st.q.nnz(), qs.q.nnz());
        for ((va, (ia, ja)), (vb, (ib, jb))) in st.q.iter().zip(qs.q.iter()) {
            assert_eq!((ia, ja), (ib, jb));
            assert_eq!(va.to_bits(), vb.to_bits());
        }
    }

    #[test]
    fn rho_zero_kron_is_block_diagonal() {
        let qs = small_spatial();
        let qt = ar1_precision(3, 0.0).unwrap();
        let st = kron_precision(&qt, &qs).unwrap();
        assert_eq!(st.q.nnz(), 3 * qs.q.nnz());
        let m = qs.n();
        for (_, (i, j)) in st.q.iter() {
            assert_eq!(i / m, j / m, "off-block entry at ({i},{j})");
        }
    }

    #[test]
    fn random_entries_match_factor_product() {
        let qs = small_spatial();
        let qt = ar1_precision(4, 0.7).unwrap();
        let st = kron_precision(&qt, &qs).unwrap();
        assert_eq!(st.q.nnz(), qt.q.nnz() * qs.q.nnz());
        let dt = to_dense(&qt.q);
        let ds = to_dense(&qs.q);
        let dst = to_dense(&st.q);
        let m = qs.n();
        let mut rng = crate::rng::stream_rng(13, "kron-spot");
        use rand::Rng;
        for _ in 0..200 {
            let i = rng.random_range(0..4 * m);
            let j = rng.random_range(0..4 * m);
            assert_relative_eq!(
                dst[(i, j)],
                dt[(i / m, j / m)] * ds[(i % m, j % m)],
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn spacetime_logdet_kronecker_identity() {
        let qs = small_spatial();
        let qt = ar1_precision(3, 0.8).unwrap();
        let st = kron_precision(&qt, &qs).unwrap();
        let fs = SpdFactor::new(&qs.q, FillOrdering::Rcm).unwrap();
        let fst = SpdFactor::new(&st.q, FillOrdering::Rcm).unwrap();
        assert_relative_eq!(st.logdet(fs.logdet()), fst.logdet(), max_relative = 1e-10);
    }
}
