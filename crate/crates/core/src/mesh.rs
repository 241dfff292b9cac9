//! Triangulated measurement grid: unique-edge connectivity, region-of-interest
//! restriction and 4-way midpoint refinement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vertex coordinates in the (r, z) plane.
pub type Point = [f64; 2];

/// Unstructured 2D triangle mesh.
///
/// `edges` is derived from `triangles`: every undirected edge once, as `(min, max)`,
/// sorted lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point>,
    triangles: Vec<[u32; 3]>,
    edges: Vec<[u32; 2]>,
}

/// Unique-edge list plus, for every triangle, the index of each of its three edges.
///
/// Edge slot `k` of triangle `[a, b, c]` is `(a, b)`, `(b, c)`, `(c, a)` for `k = 0, 1, 2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeIndex {
    pub edges: Vec<[u32; 2]>,
    pub triangle_edges: Vec<[u32; 3]>,
}

/// Sorts the 3T half-edges and removes duplicates.
pub fn build_edges(vertex_count: usize, triangles: &[[u32; 3]]) -> Result<EdgeIndex> {
    validate_triangles(vertex_count, triangles)?;

    let mut keyed: Vec<(u64, u32)> = Vec::with_capacity(triangles.len() * 3);
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let key = ((a.min(b) as u64) << 32) | a.max(b) as u64;
            keyed.push((key, (t * 3 + k) as u32));
        }
    }
    keyed.sort_unstable();

    let mut edges: Vec<[u32; 2]> = Vec::with_capacity(keyed.len() / 2 + 1);
    let mut triangle_edges = vec![[0u32; 3]; triangles.len()];
    let mut last = None;
    for (key, slot) in keyed {
        if last != Some(key) {
            edges.push([(key >> 32) as u32, key as u32]);
            last = Some(key);
        }
        let slot = slot as usize;
        triangle_edges[slot / 3][slot % 3] = (edges.len() - 1) as u32;
    }
    Ok(EdgeIndex {
        edges,
        triangle_edges,
    })
}

fn validate_triangles(vertex_count: usize, triangles: &[[u32; 3]]) -> Result<()> {
    for (t, tri) in triangles.iter().enumerate() {
        if let Some(&bad) = tri.iter().find(|&&v| v as usize >= vertex_count) {
            return Err(Error::Structure(format!(
                "triangle {t} {tri:?} references vertex {bad} but the mesh has {vertex_count} vertices"
            )));
        }
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return Err(Error::Structure(format!(
                "triangle {t} {tri:?} repeats a vertex"
            )));
        }
    }
    Ok(())
}

impl TriMesh {
    pub fn new(vertices: Vec<Point>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if vertices.len() > u32::MAX as usize {
            return Err(Error::Structure("more than 2^32 - 1 vertices".into()));
        }
        let edges = build_edges(vertices.len(), &triangles)?.edges;
        Ok(Self {
            vertices,
            triangles,
            edges,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[[u32; 2]] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// `V - E + T`; equals 1 for a connected triangulated disk.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.triangles.len() as i64
    }

    pub fn edge_index(&self) -> EdgeIndex {
        build_edges(self.vertices.len(), &self.triangles).expect("mesh was validated on construction")
    }
}

/// Axis-aligned box in the (r, z) plane. Bounds are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionOfInterest {
    pub r_min: f64,
    pub r_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl RegionOfInterest {
    pub fn new(r_min: f64, r_max: f64, z_min: f64, z_max: f64) -> Result<Self> {
        let roi = Self {
            r_min,
            r_max,
            z_min,
            z_max,
        };
        roi.validate()?;
        Ok(roi)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_min < self.r_max) || !(self.z_min < self.z_max) {
            return Err(Error::Argument(format!(
                "region of interest needs r_min < r_max and z_min < z_max, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.r_min && p[0] <= self.r_max && p[1] >= self.z_min && p[1] <= self.z_max
    }
}

/// Per-vertex scalar field at one (time, plane) coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub time_index: usize,
    pub plane_index: usize,
    pub values: Vec<f64>,
    /// Seconds between consecutive time indices.
    pub dt: f64,
}

impl Frame {
    pub fn new(time_index: usize, plane_index: usize, values: Vec<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Argument(format!("frame dt must be positive, got {dt}")));
        }
        Ok(Self {
            time_index,
            plane_index,
            values,
            dt,
        })
    }
}

/// Result of cutting a mesh down to a region of interest.
#[derive(Debug, Clone)]
pub struct Restriction {
    pub mesh: TriMesh,
    /// `old_to_new[i]` is the new index of original vertex `i`, if it survived.
    pub old_to_new: Vec<Option<u32>>,
    /// Original index of every surviving vertex, in new-index order.
    pub kept: Vec<u32>,
}

impl Restriction {
    /// Pulls the surviving entries out of a field defined on the original mesh.
    pub fn restrict_values(&self, values: &[f64]) -> Vec<f64> {
        self.kept.iter().map(|&i| values[i as usize]).collect()
    }
}

/// Keeps the vertices inside `roi` and the triangles whose three vertices all survive.
pub fn restrict(mesh: &TriMesh, roi: &RegionOfInterest) -> Result<Restriction> {
    roi.validate()?;
    let mut old_to_new = vec![None; mesh.vertex_count()];
    let mut kept = Vec::new();
    let mut vertices = Vec::new();
    for (i, &p) in mesh.vertices.iter().enumerate() {
        if roi.contains(p) {
            old_to_new[i] = Some(kept.len() as u32);
            kept.push(i as u32);
            vertices.push(p);
        }
    }
    if kept.is_empty() {
        return Err(Error::Structure("ROI excludes entire mesh".into()));
    }
    let triangles = mesh
        .triangles
        .iter()
        .filter_map(|t| {
            Some([
                old_to_new[t[0] as usize]?,
                old_to_new[t[1] as usize]?,
                old_to_new[t[2] as usize]?,
            ])
        })
        .collect();
    Ok(Restriction {
        mesh: TriMesh::new(vertices, triangles)?,
        old_to_new,
        kept,
    })
}

/// Precomputed multi-level refinement of one mesh.
///
/// The refined mesh keeps the original vertices at their indices; every new vertex is
/// appended with the pair of (already existing) vertices it bisects, so a field can be
/// carried to the fine mesh with one linear pass per frame.
#[derive(Debug, Clone)]
pub struct RefinementPlan {
    pub mesh: TriMesh,
    base_vertices: usize,
    parents: Vec<[u32; 2]>,
}

impl RefinementPlan {
    pub fn new(mesh: &TriMesh, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Argument("refinement levels must be at least 1".into()));
        }
        if mesh.vertex_count() == 0 || mesh.triangle_count() == 0 {
            return Err(Error::Structure("cannot refine an empty mesh".into()));
        }
        let mut current = mesh.clone();
        let mut parents = Vec::new();
        for _ in 0..levels {
            let (next, level_parents) = split_once(&current)?;
            parents.extend(level_parents);
            current = next;
        }
        Ok(Self {
            mesh: current,
            base_vertices: mesh.vertex_count(),
            parents,
        })
    }

    /// The identity plan: no refinement.
    pub fn identity(mesh: &TriMesh) -> Self {
        Self {
            mesh: mesh.clone(),
            base_vertices: mesh.vertex_count(),
            parents: Vec::new(),
        }
    }

    pub fn base_vertices(&self) -> usize {
        self.base_vertices
    }

    /// Extends a coarse field to the refined mesh by midpoint averaging.
    pub fn interpolate(&self, field: &[f64]) -> Result<Vec<f64>> {
        if field.len() != self.base_vertices {
            return Err(Error::Argument(format!(
                "field has {} values but the mesh has {} vertices",
                field.len(),
                self.base_vertices
            )));
        }
        let mut out = Vec::with_capacity(self.base_vertices + self.parents.len());
        out.extend_from_slice(field);
        for &[a, b] in &self.parents {
            let v = (out[a as usize] + out[b as usize]) * 0.5;
            out.push(v);
        }
        Ok(out)
    }
}

fn split_once(mesh: &TriMesh) -> Result<(TriMesh, Vec<[u32; 2]>)> {
    let EdgeIndex {
        edges,
        triangle_edges,
    } = mesh.edge_index();
    let base = mesh.vertex_count() as u32;

    let mut vertices = Vec::with_capacity(mesh.vertex_count() + edges.len());
    vertices.extend_from_slice(&mesh.vertices);
    for &[a, b] in &edges {
        let (pa, pb) = (mesh.vertices[a as usize], mesh.vertices[b as usize]);
        vertices.push([(pa[0] + pb[0]) * 0.5, (pa[1] + pb[1]) * 0.5]);
    }

    let mut triangles = Vec::with_capacity(mesh.triangle_count() * 4);
    for (&[a, b, c], e) in mesh.triangles.iter().zip(&triangle_edges) {
        let (ab, bc, ca) = (base + e[0], base + e[1], base + e[2]);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }
    Ok((TriMesh::new(vertices, triangles)?, edges))
}

/// Refines `mesh` `levels` times, interpolating `field` onto the new vertices.
pub fn refine(mesh: &TriMesh, field: &[f64], levels: usize) -> Result<(TriMesh, Vec<f64>)> {
    if field.len() != mesh.vertex_count() {
        return Err(Error::Argument(format!(
            "field has {} values but the mesh has {} vertices",
            field.len(),
            mesh.vertex_count()
        )));
    }
    let plan = RefinementPlan::new(mesh, levels)?;
    let values = plan.interpolate(field)?;
    Ok((plan.mesh, values))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn unit_triangle() -> TriMesh {
        TriMesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap()
    }

    fn two_triangles() -> TriMesh {
        TriMesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
            vec![[0, 1, 2], [1, 2, 3]],
        )
        .unwrap()
    }

    /// Random triangle soup with distinct vertex triples and no repeated triangle.
    fn random_soup(rng: &mut ChaCha8Rng, vertices: usize, triangles: usize) -> TriMesh {
        let pts = (0..vertices).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let mut seen = BTreeSet::new();
        let mut tris = Vec::new();
        while tris.len() < triangles {
            let mut t = [
                rng.random_range(0..vertices as u32),
                rng.random_range(0..vertices as u32),
                rng.random_range(0..vertices as u32),
            ];
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                continue;
            }
            let mut key = t;
            key.sort();
            if seen.insert(key) {
                t.swap(1, 2);
                tris.push(t);
            }
        }
        TriMesh::new(pts, tris).unwrap()
    }

    #[test]
    fn single_triangle_has_three_edges() {
        assert_eq!(unit_triangle().edges(), &[[0, 1], [0, 2], [1, 2]]);
    }

    #[test]
    fn shared_edge_counted_once() {
        let mesh = two_triangles();
        assert_eq!(mesh.edge_count(), 5);
        assert_eq!(mesh.edges(), &[[0, 1], [0, 2], [1, 2], [1, 3], [2, 3]]);
    }

    #[test]
    fn edge_map_points_back_to_edges() {
        let mesh = two_triangles();
        let idx = mesh.edge_index();
        for (tri, e) in mesh.triangles().iter().zip(&idx.triangle_edges) {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                assert_eq!(idx.edges[e[k] as usize], [a.min(b), a.max(b)]);
            }
        }
    }

    #[test]
    fn out_of_range_vertex_names_triangle() {
        let err = TriMesh::new(vec![[0.0, 0.0]; 3], vec![[0, 1, 2], [1, 2, 7]]).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Structure(_)));
        assert!(msg.contains("triangle 1"), "{msg}");
    }

    #[test]
    fn edges_match_bruteforce_hash() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mesh = random_soup(&mut rng, 60, 100);
        let mut oracle = std::collections::HashSet::new();
        for t in mesh.triangles() {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                oracle.insert([a.min(b), a.max(b)]);
            }
        }
        let mut expected: Vec<_> = oracle.into_iter().collect();
        expected.sort();
        assert_eq!(mesh.edges(), expected.as_slice());
    }

    #[test]
    fn refine_single_triangle_interpolates_midpoints() {
        let (fine, values) = refine(&unit_triangle(), &[1.0, 2.0, 3.0], 1).unwrap();
        assert_eq!(fine.vertex_count(), 6);
        assert_eq!(fine.triangle_count(), 4);
        // edges (0,1), (0,2), (1,2) in sorted order
        assert_eq!(&values[3..], &[1.5, 2.0, 2.5]);
        assert_eq!(&fine.vertices()[3..], &[[0.5, 0.0], [0.0, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn two_levels_equal_two_single_levels() {
        let mesh = two_triangles();
        let field = [0.3, -1.0, 4.0, 2.5];
        let (twice, v2) = refine(&mesh, &field, 2).unwrap();
        let (once, v1) = refine(&mesh, &field, 1).unwrap();
        let (again, v11) = refine(&once, &v1, 1).unwrap();
        assert_eq!(twice.triangle_count(), 16 * mesh.triangle_count());
        assert_eq!(twice, again);
        assert_eq!(v2, v11);
        assert_eq!(&v2[..4], &field);
    }

    #[test]
    fn refine_rejects_zero_levels_and_empty_mesh() {
        assert!(matches!(
            refine(&unit_triangle(), &[1.0, 2.0, 3.0], 0),
            Err(Error::Argument(_))
        ));
        let empty = TriMesh::new(vec![], vec![]).unwrap();
        assert!(matches!(refine(&empty, &[], 1), Err(Error::Structure(_))));
    }

    #[test]
    fn restrict_whole_mesh_is_identity() {
        let mesh = two_triangles();
        let r = restrict(&mesh, &RegionOfInterest::new(-1.0, 2.0, -1.0, 2.0).unwrap()).unwrap();
        assert_eq!(r.mesh, mesh);
        assert_eq!(r.kept, vec![0, 1, 2, 3]);
    }

    #[test]
    fn restrict_to_nothing_fails() {
        let mesh = two_triangles();
        let err = restrict(&mesh, &RegionOfInterest::new(5.0, 6.0, 5.0, 6.0).unwrap()).unwrap_err();
        assert!(err.to_string().contains("ROI excludes entire mesh"));
    }

    #[test]
    fn restrict_left_half_matches_point_in_box() {
        let n = 10;
        let mut pts = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                pts.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        let mut tris = Vec::new();
        let id = |i: u32, j: u32| j * (n + 1) + i;
        for j in 0..n {
            for i in 0..n {
                tris.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                tris.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let mesh = TriMesh::new(pts.clone(), tris).unwrap();
        let roi = RegionOfInterest::new(0.0, 0.5, 0.0, 1.0).unwrap();
        let r = restrict(&mesh, &roi).unwrap();
        let oracle: Vec<u32> = (0..pts.len() as u32)
            .filter(|&i| {
                let p = pts[i as usize];
                p[0] >= 0.0 && p[0] <= 0.5 && p[1] >= 0.0 && p[1] <= 1.0
            })
            .collect();
        assert_eq!(r.kept, oracle);
        assert_eq!(r.mesh.triangle_count(), 2 * 5 * 10);
        assert_eq!(r.mesh.euler_characteristic(), 1);
    }

    #[test]
    fn restrict_then_edges_equals_filtered_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let mesh = random_soup(&mut rng, 20, 25);
            let roi = RegionOfInterest::new(0.0, 0.6, 0.2, 1.0).unwrap();
            let Ok(r) = restrict(&mesh, &roi) else { continue };
            // edges of surviving triangles, mapped through old_to_new
            let mut oracle = BTreeSet::new();
            for t in mesh.triangles() {
                let m: Option<Vec<u32>> = t.iter().map(|&v| r.old_to_new[v as usize]).collect();
                if let Some(m) = m {
                    for k in 0..3 {
                        let (a, b) = (m[k], m[(k + 1) % 3]);
                        oracle.insert([a.min(b), a.max(b)]);
                    }
                }
            }
            assert_eq!(r.mesh.edges(), oracle.into_iter().collect::<Vec<_>>().as_slice());
        }
    }

    proptest! {
        #[test]
        fn refinement_counts_and_bounds(seed in any::<u64>(), v in 4usize..40, t in 1usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = t.min(v * (v - 1) * (v - 2) / 6);
            let mesh = random_soup(&mut rng, v, t);
            let field: Vec<f64> = (0..v).map(|_| rng.random_range(-5.0..5.0)).collect();
            let (fine, values) = refine(&mesh, &field, 1).unwrap();
            let (tc, ec, vc) = (mesh.triangle_count(), mesh.edge_count(), mesh.vertex_count());
            prop_assert_eq!(fine.triangle_count(), 4 * tc);
            prop_assert_eq!(fine.vertex_count(), vc + ec);
            prop_assert_eq!(fine.edge_count(), 2 * ec + 3 * tc);
            prop_assert_eq!(&values[..vc], field.as_slice());
            let lo = field.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = field.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(values.iter().all(|&x| x >= lo && x <= hi));
        }

        #[test]
        fn edges_ignore_triangle_order(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mesh = random_soup(&mut rng, 15, 30);
            let mut tris = mesh.triangles().to_vec();
            for i in (1..tris.len()).rev() {
                let j = rng.random_range(0..=i);
                tris.swap(i, j);
            }
            let shuffled = TriMesh::new(mesh.vertices().to_vec(), tris).unwrap();
            prop_assert_eq!(shuffled.edges(), mesh.edges());
            let again = build_edges(mesh.vertex_count(), mesh.triangles()).unwrap();
            prop_assert_eq!(again.edges.as_slice(), mesh.edges());
        }
    }
}
