//! Finite-element mass and stiffness assembly on the sphere mesh.
//!
//! Linear (hat) basis functions on the flat embedded triangles give the
//! stiffness matrix; the lumped mass diagonal takes one-third of each
//! vertex's incident spherical triangle areas, so the total mass equals
//! the sphere area exactly.

use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Lumped mass diagonal `C` and stiffness matrix `G` for a mesh.
#[derive(Debug, Clone)]
pub struct FemMatrices {
    /// Diagonal mass entries, steradians (unit sphere).
    pub c_lumped: Vec<f64>,
    /// Sparse symmetric stiffness (Laplacian weights); `G . 1 = 0`.
    pub g: CsMat<f64>,
}

/// Assembles mass and stiffness matrices over `mesh`.
pub fn assemble_fem(mesh: &TriMesh) -> Result<FemMatrices> {
    let n = mesh.n_vertices();
    let mut c_lumped = vec![0.0; n];
    let mut tri = TriMat::with_capacity((n, n), mesh.n_triangles() * 9);

    for (t, &[a, b, c]) in mesh.triangles.iter().enumerate() {
        let area_flat = mesh.flat_area(t);
        if area_flat < 1e-14 {
            return Err(Error::numerical(format!(
                "assembly error: triangle {t} is degenerate (flat area {area_flat:e})"
            )));
        }
        let area_sph = mesh.spherical_area(t);
        for &v in &[a, b, c] {
            c_lumped[v] += area_sph / 3.0;
        }

        // Opposite-edge vectors; e_a + e_b + e_c = 0 identically, so
        // computing the local diagonal as minus the off-diagonal sums keeps
        // row sums at exact zero.
        let (va, vb, vc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
        let ea = [vc.x - vb.x, vc.y - vb.y, vc.z - vb.z];
        let eb = [va.x - vc.x, va.y - vc.y, va.z - vc.z];
        let ec = [vb.x - va.x, vb.y - va.y, vb.z - va.z];
        let dot = |p: &[f64; 3], q: &[f64; 3]| p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
        let scale = 1.0 / (4.0 * area_flat);
        let kab = dot(&ea, &eb) * scale;
        let kbc = dot(&eb, &ec) * scale;
        let kca = dot(&ec, &ea) * scale;

        tri.add_triplet(a, b, kab);
        tri.add_triplet(b, a, kab);
        tri.add_triplet(b, c, kbc);
        tri.add_triplet(c, b, kbc);
        tri.add_triplet(c, a, kca);
        tri.add_triplet(a, c, kca);
        tri.add_triplet(a, a, -(kab + kca));
        tri.add_triplet(b, b, -(kab + kbc));
        tri.add_triplet(c, c, -(kbc + kca));
    }

    Ok(FemMatrices {
        c_lumped,
        g: tri.to_csc(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::UnitVec3;
    use crate::mesh::build_icosphere;
    use approx::assert_relative_eq;

    #[test]
    fn mass_sums_to_sphere_area() {
        // Spherical-area lumping keeps the total mass at 4*pi at every
        // refinement level, so the coarse icosahedron is already within
        // rounding of the sphere area.
        for k in [0u32, 1, 3] {
            let mesh = build_icosphere(k).unwrap();
            let fem = assemble_fem(&mesh).unwrap();
            let total: f64 = fem.c_lumped.iter().sum();
            assert_relative_eq!(total, 4.0 * std::f64::consts::PI, max_relative = 1e-12);
            assert!(fem.c_lumped.iter().all(|&c| c > 0.0));
        }
    }

    #[test]
    fn icosahedron_vertex_mass_closed_form() {
        // Each of the 12 vertices touches 5 of 20 equal triangles:
        // C_ii = 5 * (4 pi / 20) / 3 = pi / 3.
        let mesh = build_icosphere(0).unwrap();
        let fem = assemble_fem(&mesh).unwrap();
        for &c in &fem.c_lumped {
            assert_relative_eq!(c, std::f64::consts::PI / 3.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn stiffness_annihilates_constants() {
        for k in [0u32, 2, 4] {
            let mesh = build_icosphere(k).unwrap();
            let fem = assemble_fem(&mesh).unwrap();
            let ones = vec![1.0; mesh.n_vertices()];
            let gy = crate::sparse::spmv(&fem.g, &ones);
            let max_abs = gy.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max_abs < 1e-10, "G.1 max abs {max_abs:e} at k={k}");
        }
    }

    #[test]
    fn stiffness_is_symmetric_and_psd() {
        let mesh = build_icosphere(2).unwrap();
        let fem = assemble_fem(&mesh).unwrap();
        let gt = fem.g.transpose_view().to_csc();
        for ((va, (ia, ja)), (vb, (ib, jb))) in fem.g.iter().zip(gt.iter()) {
            assert_eq!((ia, ja), (ib, jb));
            assert_eq!(*va, *vb);
        }
        let mut rng = crate::rng::stream_rng(5, "fem-psd");
        use rand::Rng;
        for _ in 0..20 {
            let x: Vec<f64> = (0..mesh.n_vertices())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            assert!(crate::sparse::quad_form(&fem.g, &x) > -1e-10);
        }
    }

    #[test]
    fn degenerate_triangle_is_named() {
        let v = UnitVec3::normalize(1.0, 0.0, 0.0);
        let w = UnitVec3::normalize(0.0, 1.0, 0.0);
        let u = UnitVec3::normalize(0.0, 0.0, 1.0);
        let mesh = TriMesh {
            vertices: vec![v, v, w, u],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
        };
        let err = assemble_fem(&mesh).unwrap_err();
        assert!(err.to_string().contains("triangle 0"), "{err}");
    }
}
