//! Sparse symmetric linear algebra: Kronecker products, LDL^T
//! factorization with fill-reducing ordering, log-determinants, GMRF
//! sampling, Takahashi selected inversion, and coordinate-format text I/O.
//!
//! Factorization is backed by `sprs-ldl`; the permutation is owned here so
//! that sampling and selected inversion can work directly with the factor.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use sprs::{CsMat, PermOwned, TriMat};
use sprs_ldl::{ldl_ltsolve, LdlNumeric};

use crate::error::{Error, Result};

/// Kronecker product `a (x) b`, with `a` as the outer (block) factor:
/// entry `((ia*rb + ib), (ja*cb + jb)) = a[ia,ja] * b[ib,jb]`.
pub fn kronecker(a: &CsMat<f64>, b: &CsMat<f64>) -> CsMat<f64> {
    let (ra, ca) = (a.rows(), a.cols());
    let (rb, cb) = (b.rows(), b.cols());
    let _ = (ra, ca);
    let mut tri = TriMat::with_capacity((ra * rb, ca * cb), a.nnz() * b.nnz());
    for (va, (ia, ja)) in a.iter() {
        for (vb, (ib, jb)) in b.iter() {
            tri.add_triplet(ia * rb + ib, ja * cb + jb, va * vb);
        }
    }
    tri.to_csc()
}

/// Sparse matrix-vector product for CSC matrices.
pub fn spmv(m: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    assert!(m.is_csc());
    assert_eq!(m.cols(), x.len());
    let mut y = vec![0.0; m.rows()];
    for (j, col) in m.outer_iterator().enumerate() {
        let xj = x[j];
        if xj != 0.0 {
            for (i, &v) in col.iter() {
                y[i] += v * xj;
            }
        }
    }
    y
}

/// Quadratic form `x^T M x` for symmetric CSC `M`.
pub fn quad_form(m: &CsMat<f64>, x: &[f64]) -> f64 {
    spmv(m, x).iter().zip(x.iter()).map(|(a, b)| a * b).sum()
}

/// Fill-reducing ordering strategy for [`SpdFactor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillOrdering {
    Natural,
    /// Reverse Cuthill-McKee over the whole pattern.
    Rcm,
    /// Reverse Cuthill-McKee over the leading block, with the trailing
    /// `dense_tail` indices pinned last. Used for latent systems whose last
    /// few coordinates (fixed effects) couple densely to everything.
    RcmWithTail { dense_tail: usize },
}

/// Sparse LDL^T factorization of a symmetric positive definite matrix,
/// with the permutation kept accessible.
pub struct SpdFactor {
    n: usize,
    /// new index -> old index.
    perm: Vec<usize>,
    /// Permuted matrix; kept for cheap same-pattern numeric refactors.
    permuted: CsMat<f64>,
    /// For each nnz of `permuted` (CSC order), the position of the same
    /// entry in the source matrix's CSC data array.
    gather: Vec<usize>,
    ldl: LdlNumeric<f64, usize>,
}

impl SpdFactor {
    /// Factors `mat`, which must be symmetric CSC with both triangles
    /// stored. Fails with a numerical error if the matrix is not positive
    /// definite.
    pub fn new(mat: &CsMat<f64>, ordering: FillOrdering) -> Result<Self> {
        assert!(mat.is_csc(), "SpdFactor expects CSC storage");
        let n = mat.rows();
        let perm = match ordering {
            FillOrdering::Natural => (0..n).collect::<Vec<usize>>(),
            FillOrdering::Rcm => {
                let ord = sprs::linalg::reverse_cuthill_mckee(mat.view());
                ord.perm.vec()
            }
            FillOrdering::RcmWithTail { dense_tail } => {
                let head = n - dense_tail;
                let sub = submatrix_pattern(mat, head);
                let ord = sprs::linalg::reverse_cuthill_mckee(sub.view());
                let mut perm = ord.perm.vec();
                perm.extend(head..n);
                perm
            }
        };
        let sprs_perm = PermOwned::new(perm.clone());
        let permuted = sprs::transform_mat_papt(mat.view(), sprs_perm.view());

        // Recover the data-slot mapping by permuting a matrix whose values
        // are their own nnz positions.
        let tagged = CsMat::new_csc(
            (n, n),
            mat.indptr().to_proper().to_vec(),
            mat.indices().to_vec(),
            (0..mat.nnz()).map(|k| k as f64).collect(),
        );
        let tagged_perm = sprs::transform_mat_papt(tagged.view(), sprs_perm.view());
        let gather: Vec<usize> = tagged_perm.data().iter().map(|&v| v as usize).collect();

        let ldl = LdlNumeric::new(permuted.view())
            .map_err(|e| Error::numerical(format!("LDL factorization failed: {e}")))?;
        let factor = SpdFactor {
            n,
            perm,
            permuted,
            gather,
            ldl,
        };
        factor.check_spd()?;
        Ok(factor)
    }

    /// Refactors with new values on the identical sparsity pattern.
    pub fn update(&mut self, mat: &CsMat<f64>) -> Result<()> {
        assert_eq!(mat.nnz(), self.gather.len(), "pattern changed");
        let src = mat.data();
        let dst = self.permuted.data_mut();
        for (k, &g) in self.gather.iter().enumerate() {
            dst[k] = src[g];
        }
        self.ldl
            .update(self.permuted.view())
            .map_err(|e| Error::numerical(format!("LDL refactorization failed: {e}")))?;
        self.check_spd()
    }

    fn check_spd(&self) -> Result<()> {
        for (i, &d) in self.ldl.d().iter().enumerate() {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::numerical(format!(
                    "matrix is not positive definite: pivot {i} = {d:e}"
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `log det Q` from the pivot diagonal.
    pub fn logdet(&self) -> f64 {
        self.ldl.d().iter().map(|d| d.ln()).sum()
    }

    /// Solves `Q x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let bp: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        let xp = self.ldl.solve(&bp);
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = xp[new];
        }
        x
    }

    /// Draws one sample from `N(0, Q^{-1})` using the factor:
    /// `x = P^T L^{-T} D^{-1/2} z`.
    pub fn sample_zero_mean<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.ldl.d();
        let mut v: Vec<f64> = (0..self.n)
            .map(|i| {
                let z: f64 = rng.sample(StandardNormal);
                z / d[i].sqrt()
            })
            .collect();
        ldl_ltsolve(&self.ldl.l(), &mut v[..]);
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = v[new];
        }
        x
    }

    /// Diagonal of `Q^{-1}` by the Takahashi recursion on the factor's
    /// fill pattern, returned in original index order.
    ///
    /// The recursion computes the inverse restricted to the (chordal)
    /// pattern of `L`, which contains every entry needed for the exact
    /// diagonal.
    pub fn selected_inverse_diag(&self) -> Vec<f64> {
        let n = self.n;
        let l = self.ldl.l();
        let d = self.ldl.d();

        // Copy L (strictly lower, CSC) with row-sorted columns.
        let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut col_vals: Vec<Vec<f64>> = vec![Vec::new(); n];
        for (j, col) in l.outer_iterator().enumerate() {
            let mut entries: Vec<(usize, f64)> = col.iter().map(|(i, &v)| (i, v)).collect();
            entries.sort_unstable_by_key(|&(i, _)| i);
            col_rows[j] = entries.iter().map(|&(i, _)| i).collect();
            col_vals[j] = entries.iter().map(|&(_, v)| v).collect();
        }

        let mut s_off: Vec<Vec<f64>> = col_rows.iter().map(|c| vec![0.0; c.len()]).collect();
        let mut s_diag = vec![0.0; n];

        let lookup = |s_off: &Vec<Vec<f64>>, s_diag: &Vec<f64>, a: usize, b: usize| -> f64 {
            if a == b {
                return s_diag[a];
            }
            let (lo, hi) = (a.min(b), a.max(b));
            match col_rows[lo].binary_search(&hi) {
                Ok(pos) => s_off[lo][pos],
                Err(_) => 0.0,
            }
        };

        for j in (0..n).rev() {
            let rows = &col_rows[j];
            let vals = &col_vals[j];
            // Off-diagonal entries of column j depend only on columns > j.
            for (idx, &i) in rows.iter().enumerate() {
                let mut s = 0.0;
                for (&k, &lkj) in rows.iter().zip(vals.iter()) {
                    s -= lkj * lookup(&s_off, &s_diag, k, i);
                }
                s_off[j][idx] = s;
            }
            let mut s = 1.0 / d[j];
            for (&lkj, &skj) in vals.iter().zip(s_off[j].iter()) {
                s -= lkj * skj;
            }
            s_diag[j] = s;
        }

        let mut out = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = s_diag[new];
        }
        out
    }
}

/// Leading `head x head` principal submatrix, pattern and values.
fn submatrix_pattern(mat: &CsMat<f64>, head: usize) -> CsMat<f64> {
    let mut tri = TriMat::new((head, head));
    for (v, (i, j)) in mat.iter() {
        if i < head && j < head {
            tri.add_triplet(i, j, *v);
        }
    }
    tri.to_csc()
}

/// Writes a sparse matrix as coordinate-format text: a `rows cols nnz`
/// header then 0-based `i j value` lines with 17 significant digits.
pub fn write_coord_text<W: Write>(mat: &CsMat<f64>, out: &mut W) -> Result<()> {
    writeln!(out, "{} {} {}", mat.rows(), mat.cols(), mat.nnz())?;
    for (v, (i, j)) in mat.iter() {
        writeln!(out, "{} {} {:.16e}", i, j, v)?;
    }
    Ok(())
}

/// Reads a matrix written by [`write_coord_text`], returning CSC storage.
pub fn read_coord_text<R: BufRead>(input: R) -> Result<CsMat<f64>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format("empty matrix file"))??;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format(format!("bad matrix header: {header:?}")))?;
    if dims.len() != 3 {
        return Err(Error::format("matrix header needs rows cols nnz"));
    }
    let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);
    let mut tri = TriMat::with_capacity((rows, cols), nnz);
    for k in 0..nnz {
        let line = lines
            .next()
            .ok_or_else(|| Error::format(format!("missing entry line {k}")))??;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::format(format!("entry line {k} needs i j value")));
        }
        let i: usize = fields[0]
            .parse()
            .map_err(|_| Error::format(format!("bad row index on line {k}")))?;
        let j: usize = fields[1]
            .parse()
            .map_err(|_| Error::format(format!("bad col index on line {k}")))?;
        let v: f64 = fields[2]
            .parse()
            .map_err(|_| Error::format(format!("bad value on line {k}")))?;
        tri.add_triplet(i, j, v);
    }
    Ok(tri.to_csc())
}

/// Dense copy for small-system tests and oracles.
pub fn to_dense(mat: &CsMat<f64>) -> nalgebra::DMatrix<f64> {
    let mut d = nalgebra::DMatrix::zeros(mat.rows(), mat.cols());
    for (v, (i, j)) in mat.iter() {
        d[(i, j)] += *v;
    }
    d
}
