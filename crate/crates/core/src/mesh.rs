//! Triangulated unit-sphere meshes.
//!
//! Meshes come from recursive icosahedral subdivision with optional local
//! red-green refinement near observation sites. All meshes are closed,
//! edge-manifold, and consistently outward-oriented; those invariants are
//! checked by [`TriMesh::validate`].

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, UnitVec3};

/// Maximum global subdivision depth accepted by [`build_icosphere`];
/// k=7 is 163,842 vertices, beyond which the dense mesh-time systems
/// downstream stop fitting a desk-scale memory budget.
pub const MAX_SUBDIVISIONS: u32 = 7;

/// A closed triangulation of the unit sphere.
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub vertices: Vec<UnitVec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Signed spherical area (steradians) of triangle `t` via the
    /// van Oosterom-Strackee excess formula; positive for outward
    /// orientation.
    pub fn spherical_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        spherical_triangle_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    /// Flat area of the embedded triangle `t`.
    pub fn flat_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (va, vb, vc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        let e1 = (vb.x - va.x, vb.y - va.y, vb.z - va.z);
        let e2 = (vc.x - va.x, vc.y - va.y, vc.z - va.z);
        let cx = e1.1 * e2.2 - e1.2 * e2.1;
        let cy = e1.2 * e2.0 - e1.0 * e2.2;
        let cz = e1.0 * e2.1 - e1.1 * e2.0;
        0.5 * (cx * cx + cy * cy + cz * cz).sqrt()
    }

    /// Checks all structural invariants: valid distinct indices per
    /// triangle, every undirected edge shared by exactly two triangles,
    /// and positive signed volume (outward orientation) everywhere.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_vertices();
        let mut edge_counts: HashMap<(usize, usize), u32> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            let [a, b, c] = *tri;
            if a >= n || b >= n || c >= n {
                return Err(Error::geometry(format!(
                    "triangle {t} references vertex out of range"
                )));
            }
            if a == b || b == c || a == c {
                return Err(Error::geometry(format!(
                    "triangle {t} has repeated vertices"
                )));
            }
            for (u, v) in [(a, b), (b, c), (c, a)] {
                let key = (u.min(v), u.max(v));
                *edge_counts.entry(key).or_insert(0) += 1;
            }
            let (va, vb, vc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
            let (cx, cy, cz) = vb.cross(vc);
            let vol = va.x * cx + va.y * cy + va.z * cz;
            if vol <= 0.0 {
                return Err(Error::geometry(format!(
                    "triangle {t} is not outward-oriented (signed volume {vol:e})"
                )));
            }
        }
        for (edge, count) in edge_counts {
            if count != 2 {
                return Err(Error::geometry(format!(
                    "edge {edge:?} belongs to {count} triangles, expected 2"
                )));
            }
        }
        Ok(())
    }

    /// Edge list as sorted `(min, max)` vertex index pairs, deduplicated.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(u, v)| (u.min(v), u.max(v)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Plain-text export: `vertices N triangles M` header, then N
    /// coordinate lines and M index lines. 17 significant digits, so a
    /// write/read round trip is bit-stable.
    pub fn write_text<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "vertices {} triangles {}",
            self.n_vertices(),
            self.n_triangles()
        )?;
        for v in &self.vertices {
            writeln!(out, "{:.16e} {:.16e} {:.16e}", v.x, v.y, v.z)?;
        }
        for t in &self.triangles {
            writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    pub fn write_text_file(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_text(&mut f)
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<TriMesh> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format("empty mesh file"))??;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "vertices" || parts[2] != "triangles" {
            return Err(Error::format(format!("bad mesh header: {header:?}")));
        }
        let n: usize = parts[1]
            .parse()
            .map_err(|_| Error::format("bad vertex count"))?;
        let m: usize = parts[3]
            .parse()
            .map_err(|_| Error::format("bad triangle count"))?;
        let mut vertices = Vec::with_capacity(n);
        for i in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| Error::format(format!("missing vertex line {i}")))??;
            let nums: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::format(format!("bad vertex line {i}: {line:?}")))?;
            if nums.len() != 3 {
                return Err(Error::format(format!("vertex line {i} needs 3 fields")));
            }
            vertices.push(UnitVec3 {
                x: nums[0],
                y: nums[1],
                z: nums[2],
            });
        }
        let mut triangles = Vec::with_capacity(m);
        for i in 0..m {
            let line = lines
                .next()
                .ok_or_else(|| Error::format(format!("missing triangle line {i}")))??;
            let nums: Vec<usize> = line
                .split_whitespace()
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::format(format!("bad triangle line {i}: {line:?}")))?;
            if nums.len() != 3 {
                return Err(Error::format(format!("triangle line {i} needs 3 fields")));
            }
            triangles.push([nums[0], nums[1], nums[2]]);
        }
        Ok(TriMesh {
            vertices,
            triangles,
        })
    }

    pub fn read_text_file(path: &Path) -> Result<TriMesh> {
        let f = BufReader::new(std::fs::File::open(path)?);
        Self::read_text(f)
    }
}

/// Spherical area (steradians) of the triangle `(a, b, c)` on the unit
/// sphere, signed by orientation.
pub fn spherical_triangle_area(a: UnitVec3, b: UnitVec3, c: UnitVec3) -> f64 {
    let (cx, cy, cz) = b.cross(c);
    let num = a.x * cx + a.y * cy + a.z * cz;
    let den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * num.atan2(den)
}

/// Builds a geodesic icosphere with `subdivisions` levels of 4-way
/// triangle splitting. Vertex count is `10 * 4^k + 2`.
pub fn build_icosphere(subdivisions: u32) -> Result<TriMesh> {
    if subdivisions > MAX_SUBDIVISIONS {
        return Err(Error::resource(format!(
            "subdivision depth {subdivisions} exceeds maximum {MAX_SUBDIVISIONS}"
        )));
    }
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ];
    let vertices: Vec<UnitVec3> = raw
        .iter()
        .map(|&(x, y, z)| UnitVec3::normalize(x, y, z))
        .collect();
    let triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let mut mesh = TriMesh {
        vertices,
        triangles,
    };
    for _ in 0..subdivisions {
        mesh = subdivide_all(&mesh);
    }
    Ok(mesh)
}

fn midpoint_index(
    cache: &mut HashMap<(usize, usize), usize>,
    vertices: &mut Vec<UnitVec3>,
    i: usize,
    j: usize,
) -> usize {
    let key = (i.min(j), i.max(j));
    if let Some(&idx) = cache.get(&key) {
        return idx;
    }
    let (a, b) = (vertices[i], vertices[j]);
    let mid = UnitVec3::normalize(a.x + b.x, a.y + b.y, a.z + b.z);
    let idx = vertices.len();
    vertices.push(mid);
    cache.insert(key, idx);
    idx
}

fn subdivide_all(mesh: &TriMesh) -> TriMesh {
    let mut vertices = mesh.vertices.clone();
    let mut cache = HashMap::new();
    let mut triangles = Vec::with_capacity(mesh.triangles.len() * 4);
    for &[a, b, c] in &mesh.triangles {
        let ab = midpoint_index(&mut cache, &mut vertices, a, b);
        let bc = midpoint_index(&mut cache, &mut vertices, b, c);
        let ca = midpoint_index(&mut cache, &mut vertices, c, a);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }
    TriMesh {
        vertices,
        triangles,
    }
}

/// Locally refines triangles containing or edge-adjacent to any of
/// `sites`, `levels` times, with a conforming red-green closure so that
/// no hanging nodes remain.
pub fn refine_near(mesh: &TriMesh, sites: &[GeoPoint], levels: u32) -> Result<TriMesh> {
    let mut current = mesh.clone();
    let site_vecs: Vec<UnitVec3> = sites.iter().map(|p| p.to_unit_vector()).collect();
    for _ in 0..levels {
        current = refine_once(&current, &site_vecs)?;
    }
    Ok(current)
}

fn triangle_contains(mesh: &TriMesh, t: usize, u: UnitVec3) -> bool {
    crate::project::radial_barycentric(mesh, t, u)
        .map(|w| w.iter().all(|&wi| wi >= -1e-12))
        .unwrap_or(false)
}

fn refine_once(mesh: &TriMesh, sites: &[UnitVec3]) -> Result<TriMesh> {
    let nt = mesh.triangles.len();
    // Mark triangles containing a site, then dilate by edge adjacency.
    let mut red = vec![false; nt];
    for &s in sites {
        let mut hit = false;
        for t in 0..nt {
            if triangle_contains(mesh, t, s) {
                red[t] = true;
                hit = true;
            }
        }
        if !hit {
            return Err(Error::geometry(
                "site not contained in any triangle of a closed mesh".to_string(),
            ));
        }
    }
    let mut edge_to_tris: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, &[a, b, c]) in mesh.triangles.iter().enumerate() {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            edge_to_tris.entry((u.min(v), u.max(v))).or_default().push(t);
        }
    }
    let seeds: Vec<usize> = (0..nt).filter(|&t| red[t]).collect();
    for &t in &seeds {
        let [a, b, c] = mesh.triangles[t];
        for (u, v) in [(a, b), (b, c), (c, a)] {
            for &nb in &edge_to_tris[&(u.min(v), u.max(v))] {
                red[nb] = true;
            }
        }
    }

    // Red-green closure: split edges of red triangles; any triangle with
    // two or more split edges is promoted to red until stable; triangles
    // with exactly one split edge get a conforming green bisection.
    let mut split_edge: std::collections::HashSet<(usize, usize)> =
        std::collections::HashSet::new();
    loop {
        for (t, is_red) in red.iter().enumerate() {
            if *is_red {
                let [a, b, c] = mesh.triangles[t];
                for (u, v) in [(a, b), (b, c), (c, a)] {
                    split_edge.insert((u.min(v), u.max(v)));
                }
            }
        }
        let mut changed = false;
        for t in 0..nt {
            if red[t] {
                continue;
            }
            let [a, b, c] = mesh.triangles[t];
            let n_split = [(a, b), (b, c), (c, a)]
                .iter()
                .filter(|&&(u, v)| split_edge.contains(&(u.min(v), u.max(v))))
                .count();
            if n_split >= 2 {
                red[t] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut vertices = mesh.vertices.clone();
    let mut cache = HashMap::new();
    // Allocate midpoints in sorted edge order so vertex numbering is
    // independent of hash iteration order.
    let mut sorted_edges: Vec<(usize, usize)> = split_edge.iter().copied().collect();
    sorted_edges.sort_unstable();
    for (u, v) in sorted_edges {
        midpoint_index(&mut cache, &mut vertices, u, v);
    }

    let mut triangles = Vec::new();
    for t in 0..nt {
        let [a, b, c] = mesh.triangles[t];
        if red[t] {
            let ab = midpoint_index(&mut cache, &mut vertices, a, b);
            let bc = midpoint_index(&mut cache, &mut vertices, b, c);
            let ca = midpoint_index(&mut cache, &mut vertices, c, a);
            triangles.push([a, ab, ca]);
            triangles.push([ab, b, bc]);
            triangles.push([ca, bc, c]);
            triangles.push([ab, bc, ca]);
        } else {
            let splits: Vec<(usize, usize, usize)> = [(a, b, c), (b, c, a), (c, a, b)]
                .iter()
                .filter(|&&(u, v, _)| split_edge.contains(&(u.min(v), u.max(v))))
                .copied()
                .collect();
            match splits.len() {
                0 => triangles.push([a, b, c]),
                1 => {
                    // Green bisection across the single split edge (u, v),
                    // opposite vertex w.
                    let (u, v, w) = splits[0];
                    let m = midpoint_index(&mut cache, &mut vertices, u, v);
                    triangles.push([u, m, w]);
                    triangles.push([m, v, w]);
                }
                _ => unreachable!("closure leaves at most one split edge"),
            }
        }
    }
    Ok(TriMesh {
        vertices,
        triangles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn icosahedron_counts() {
        let m = build_icosphere(0).unwrap();
        assert_eq!(m.n_vertices(), 12);
        assert_eq!(m.n_triangles(), 20);
        m.validate().unwrap();
    }

    #[test]
    fn subdivision_counts_follow_formula() {
        for k in [1u32, 2, 4] {
            let m = build_icosphere(k).unwrap();
            assert_eq!(m.n_vertices(), 10 * 4usize.pow(k) + 2);
            assert_eq!(m.n_triangles(), 20 * 4usize.pow(k));
            m.validate().unwrap();
        }
    }

    #[test]
    fn excess_subdivision_is_resource_error() {
        assert!(matches!(
            build_icosphere(8),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn spherical_areas_sum_to_sphere() {
        for k in [0u32, 1, 3] {
            let m = build_icosphere(k).unwrap();
            let total: f64 = (0..m.n_triangles()).map(|t| m.spherical_area(t)).sum();
            assert_relative_eq!(total, 4.0 * std::f64::consts::PI, max_relative = 1e-6);
        }
    }

    #[test]
    fn refine_zero_levels_is_identity() {
        let m = build_icosphere(1).unwrap();
        let r = refine_near(&m, &[GeoPoint::new(10.0, 10.0)], 0).unwrap();
        assert_eq!(r.n_triangles(), m.n_triangles());
        assert_eq!(r.n_vertices(), m.n_vertices());
    }

    #[test]
    fn refine_grows_and_stays_manifold() {
        let m = build_icosphere(0).unwrap();
        let r = refine_near(&m, &[GeoPoint::new(0.0, 0.0)], 1).unwrap();
        assert!(r.n_triangles() > 20);
        r.validate().unwrap();
        let total: f64 = (0..r.n_triangles()).map(|t| r.spherical_area(t)).sum();
        assert_relative_eq!(total, 4.0 * std::f64::consts::PI, max_relative = 1e-6);
    }

    #[test]
    fn refine_shrinks_local_edges() {
        let site = GeoPoint::new(0.0, 0.0);
        let m = build_icosphere(2).unwrap();
        let r = refine_near(&m, &[site], 2).unwrap();
        r.validate().unwrap();
        let local_max_edge = |mesh: &TriMesh| -> f64 {
            let s = site.to_unit_vector();
            let mut max_len: f64 = 0.0;
            for &[a, b, c] in &mesh.triangles {
                let (va, vb, vc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
                let near = [va, vb, vc]
                    .iter()
                    .any(|v| v.angle_to(s) * crate::geo::EARTH_RADIUS_KM < 500.0);
                if near {
                    for (p, q) in [(va, vb), (vb, vc), (vc, va)] {
                        max_len = max_len.max(p.angle_to(q));
                    }
                }
            }
            max_len
        };
        assert!(local_max_edge(&r) < local_max_edge(&m));
    }

    #[test]
    fn text_round_trip_is_bit_stable() {
        let m = build_icosphere(1).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let back = TriMesh::read_text(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(m.n_vertices(), back.n_vertices());
        for (a, b) in m.vertices.iter().zip(back.vertices.iter()) {
            assert_eq!(a.x.to_bits(), b.x.to_bits());
            assert_eq!(a.y.to_bits(), b.y.to_bits());
            assert_eq!(a.z.to_bits(), b.z.to_bits());
        }
        assert_eq!(m.triangles, back.triangles);
        let mut buf2 = Vec::new();
        back.write_text(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }
}
