//! Barycentric projection from mesh vertices to arbitrary surface sites.
//!
//! A [`Projector`] is a sparse observation matrix: each row maps the latent
//! field at mesh vertices (or mesh-time nodes) to one target location by a
//! convex combination of at most three vertex values.

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, UnitVec3};
use crate::mesh::TriMesh;

/// Sparse row-wise projection matrix with at most 3 entries per row.
#[derive(Debug, Clone)]
pub struct Projector {
    /// `(column index, weight)` pairs per target row; weights are
    /// nonnegative and sum to 1 within 1e-10.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Number of columns (mesh vertices, or vertices x time slices).
    pub n_cols: usize,
}

impl Projector {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Applies the projector to a field vector.
    pub fn apply(&self, field: &[f64]) -> Vec<f64> {
        assert_eq!(field.len(), self.n_cols);
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * field[j]).sum())
            .collect()
    }
}

/// Barycentric coordinates of `u` in triangle `t` under radial (gnomonic)
/// projection: solve `[v0 v1 v2] w = u` and normalize to sum 1. Returns
/// `None` for a numerically degenerate triangle.
pub(crate) fn radial_barycentric(mesh: &TriMesh, t: usize, u: UnitVec3) -> Option<[f64; 3]> {
    let [a, b, c] = mesh.triangles[t];
    let (va, vb, vc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
    let m = nalgebra::Matrix3::new(va.x, vb.x, vc.x, va.y, vb.y, vc.y, va.z, vb.z, vc.z);
    let rhs = nalgebra::Vector3::new(u.x, u.y, u.z);
    let w = m.lu().solve(&rhs)?;
    let s = w[0] + w[1] + w[2];
    if s.abs() < 1e-12 {
        return None;
    }
    Some([w[0] / s, w[1] / s, w[2] / s])
}

/// Builds the observation projector for `sites` on `mesh`.
///
/// Point location uses a bounding-cap prefilter per triangle and picks the
/// triangle whose radial barycentric coordinates are least negative; exact
/// vertex hits produce a single unit weight.
pub fn barycentric_projector(mesh: &TriMesh, sites: &[GeoPoint]) -> Result<Projector> {
    let caps: Vec<(UnitVec3, f64)> = mesh
        .triangles
        .iter()
        .map(|&[a, b, c]| {
            let (va, vb, vc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
            let center = UnitVec3::normalize(va.x + vb.x + vc.x, va.y + vb.y + vc.y, va.z + vb.z + vc.z);
            let radius = [va, vb, vc]
                .iter()
                .map(|v| center.angle_to(*v))
                .fold(0.0f64, f64::max);
            (center, radius)
        })
        .collect();

    let mut rows = Vec::with_capacity(sites.len());
    for (si, site) in sites.iter().enumerate() {
        let u = site.to_unit_vector();
        let row = locate_row(mesh, &caps, u, 0.02)
            .or_else(|| locate_row(mesh, &caps, u, std::f64::consts::PI))
            .ok_or_else(|| {
                Error::geometry(format!(
                    "site {si} ({}, {}) not located in any triangle",
                    site.lat, site.lon
                ))
            })?;
        rows.push(row);
    }
    Ok(Projector {
        rows,
        n_cols: mesh.n_vertices(),
    })
}

fn locate_row(
    mesh: &TriMesh,
    caps: &[(UnitVec3, f64)],
    u: UnitVec3,
    slack: f64,
) -> Option<Vec<(usize, f64)>> {
    let mut best: Option<(f64, usize, [f64; 3])> = None;
    for (t, &(center, radius)) in caps.iter().enumerate() {
        if u.angle_to(center) > radius + slack {
            continue;
        }
        if let Some(w) = radial_barycentric(mesh, t, u) {
            let min_w = w[0].min(w[1]).min(w[2]);
            if best.map_or(true, |(bw, _, _)| min_w > bw) {
                best = Some((min_w, t, w));
            }
        }
    }
    let (min_w, t, mut w) = best?;
    if min_w < -1e-9 {
        return None;
    }
    // Clamp tiny negatives from roundoff and renormalize to a convex
    // combination.
    let mut sum = 0.0;
    for wi in &mut w {
        *wi = wi.max(0.0);
        sum += *wi;
    }
    for wi in &mut w {
        *wi /= sum;
    }
    let verts = mesh.triangles[t];
    let mut row: Vec<(usize, f64)> = verts
        .iter()
        .zip(w.iter())
        .filter(|&(_, &wi)| wi > 1e-14)
        .map(|(&v, &wi)| (v, wi))
        .collect();
    row.sort_by_key(|&(v, _)| v);
    Some(row)
}

/// Lifts a spatial projector into the time-major space-time layout:
/// observation `i` in year slice `year_index[i]` has its columns shifted
/// by `slice * n_vertices`.
pub fn spacetime_projector(
    mesh_proj: &Projector,
    year_index: &[usize],
    t_len: usize,
) -> Result<Projector> {
    if year_index.len() != mesh_proj.n_rows() {
        return Err(Error::domain(format!(
            "year_index length {} != projector rows {}",
            year_index.len(),
            mesh_proj.n_rows()
        )));
    }
    let m = mesh_proj.n_cols;
    let mut rows = Vec::with_capacity(mesh_proj.n_rows());
    for (row, &t) in mesh_proj.rows.iter().zip(year_index.iter()) {
        if t >= t_len {
            return Err(Error::domain(format!(
                "year index {t} out of range 0..{t_len}"
            )));
        }
        rows.push(row.iter().map(|&(j, w)| (t * m + j, w)).collect());
    }
    Ok(Projector {
        rows,
        n_cols: m * t_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_icosphere;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn site_at_vertex_gets_unit_weight() {
        let mesh = build_icosphere(1).unwrap();
        let p = mesh.vertices[7].to_geo_point();
        let proj = barycentric_projector(&mesh, &[p]).unwrap();
        assert_eq!(proj.rows[0].len(), 1);
        let (v, w) = proj.rows[0][0];
        assert_eq!(v, 7);
        assert_relative_eq!(w, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn site_at_centroid_gets_equal_weights() {
        let mesh = build_icosphere(1).unwrap();
        let [a, b, c] = mesh.triangles[11];
        let (va, vb, vc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
        let centroid =
            UnitVec3::normalize(va.x + vb.x + vc.x, va.y + vb.y + vc.y, va.z + vb.z + vc.z);
        let proj = barycentric_projector(&mesh, &[centroid.to_geo_point()]).unwrap();
        assert_eq!(proj.rows[0].len(), 3);
        for &(_, w) in &proj.rows[0] {
            assert_relative_eq!(w, 1.0 / 3.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn partition_of_unity_on_random_sites() {
        let mesh = build_icosphere(2).unwrap();
        let mut rng = crate::rng::stream_rng(3, "proj-unity");
        let sites: Vec<GeoPoint> = (0..200)
            .map(|_| {
                GeoPoint::new(
                    rng.random_range(-90.0..90.0),
                    rng.random_range(-180.0..180.0),
                )
            })
            .collect();
        let proj = barycentric_projector(&mesh, &sites).unwrap();
        let ones = vec![1.0; mesh.n_vertices()];
        for v in proj.apply(&ones) {
            assert_relative_eq!(v, 1.0, epsilon = 1e-10);
        }
        for row in &proj.rows {
            for &(_, w) in row {
                assert!(w >= 0.0);
            }
        }
    }

    #[test]
    fn linear_function_error_shrinks_with_refinement() {
        let mut rng = crate::rng::stream_rng(11, "proj-linear");
        let sites: Vec<GeoPoint> = (0..300)
            .map(|_| {
                GeoPoint::new(
                    rng.random_range(-90.0..90.0),
                    rng.random_range(-180.0..180.0),
                )
            })
            .collect();
        let max_err = |k: u32| -> f64 {
            let mesh = build_icosphere(k).unwrap();
            let proj = barycentric_projector(&mesh, &sites).unwrap();
            let field: Vec<f64> = mesh.vertices.iter().map(|v| v.z).collect();
            let approx_z = proj.apply(&field);
            sites
                .iter()
                .zip(approx_z.iter())
                .map(|(p, &fz)| (p.to_unit_vector().z - fz).abs())
                .fold(0.0f64, f64::max)
        };
        assert!(max_err(4) < max_err(2));
    }

    #[test]
    fn spacetime_shift_moves_columns_into_year_block() {
        let mesh = build_icosphere(0).unwrap();
        let sites = vec![GeoPoint::new(20.0, 30.0)];
        let proj = barycentric_projector(&mesh, &sites).unwrap();
        let st = spacetime_projector(&proj, &[2], 3).unwrap();
        let m = mesh.n_vertices();
        for &(j, _) in &st.rows[0] {
            assert!((2 * m..3 * m).contains(&j));
        }
        assert_eq!(st.n_cols, 3 * m);

        // A field constant in space but equal to its slice index projects
        // to the slice index.
        let mut field = vec![0.0; 3 * m];
        for t in 0..3 {
            for v in 0..m {
                field[t * m + v] = t as f64;
            }
        }
        let st_all = spacetime_projector(&proj, &[0], 3).unwrap();
        assert_relative_eq!(st_all.apply(&field)[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(st.apply(&field)[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn t1_spacetime_projector_is_identity_shift() {
        let mesh = build_icosphere(0).unwrap();
        let sites = vec![GeoPoint::new(-40.0, 100.0)];
        let proj = barycentric_projector(&mesh, &sites).unwrap();
        let st = spacetime_projector(&proj, &[0], 1).unwrap();
        assert_eq!(st.rows, proj.rows);
        assert!(matches!(
            spacetime_projector(&proj, &[1], 1),
            Err(Error::Domain(_))
        ));
    }
}
