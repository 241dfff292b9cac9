//! Per-blob geometry: density-weighted center, convex hull and area.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSummary {
    pub center: Point,
    /// Counter-clockwise hull vertices.
    pub hull: Vec<Point>,
    /// Member vertex count. This is the blob area used for tracking.
    pub area: usize,
    /// Sum of the density weights over the members.
    pub mass: f64,
}

impl BlobSummary {
    /// `points` and `density` are parallel arrays over the blob members.
    pub fn from_members(points: &[Point], density: &[f64]) -> Result<Self> {
        assert_eq!(points.len(), density.len());
        let (center, mass) = weighted_center_and_mass(points, density)?;
        Ok(Self {
            center,
            hull: convex_hull(points),
            area: blob_area(points),
            mass,
        })
    }

    /// Shoelace area of the hull polygon, for plotting.
    pub fn hull_area(&self) -> f64 {
        polygon_area(&self.hull)
    }
}

fn weighted_center_and_mass(points: &[Point], density: &[f64]) -> Result<(Point, f64)> {
    if points.is_empty() {
        return Err(Error::Numerical("weighted center of an empty blob".into()));
    }
    let (mut m, mut sr, mut sz) = (0.0, 0.0, 0.0);
    for (p, &w) in points.iter().zip(density) {
        m += w;
        sr += p[0] * w;
        sz += p[1] * w;
    }
    if !(m > 0.0) {
        return Err(Error::Numerical(format!(
            "blob density sum must be positive, got {m}"
        )));
    }
    Ok(([sr / m, sz / m], m))
}

/// `sum(p * n) / sum(n)` over the members.
pub fn weighted_center(points: &[Point], density: &[f64]) -> Result<Point> {
    weighted_center_and_mass(points, density).map(|(c, _)| c)
}

pub fn blob_area(members: &[Point]) -> usize {
    members.len()
}

#[inline]
fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain. Returns the hull counter-clockwise starting from the
/// lowest-r (then lowest-z) point, without collinear boundary points. One distinct
/// point gives a single point; collinear input gives the two extreme points.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }

    let mut hull: Vec<Point> = Vec::with_capacity(pts.len() + 1);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

pub fn polygon_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        twice += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * twice
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[allow(clippy::needless_range_loop)]
    /// O(n^3): p is extreme iff it is not inside or on any triangle of other points
    /// and not strictly between two other points on a segment.
    fn brute_force_extreme(points: &[Point]) -> Vec<Point> {
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        pts.dedup();
        let n = pts.len();
        let mut out = Vec::new();
        'outer: for i in 0..n {
            let p = pts[i];
            for a in 0..n {
                for b in 0..n {
                    if a == i || b == i || a == b {
                        continue;
                    }
                    // on the open segment a-b
                    let (pa, pb) = (pts[a], pts[b]);
                    if cross(pa, pb, p) == 0.0
                        && (p[0] - pa[0]) * (p[0] - pb[0]) + (p[1] - pa[1]) * (p[1] - pb[1]) < 0.0
                    {
                        continue 'outer;
                    }
                    for c in 0..n {
                        if c == i || c == a || c == b {
                            continue;
                        }
                        let pc = pts[c];
                        let (d1, d2, d3) = (cross(pa, pb, p), cross(pb, pc, p), cross(pc, pa, p));
                        let all_pos = d1 >= 0.0 && d2 >= 0.0 && d3 >= 0.0;
                        let all_neg = d1 <= 0.0 && d2 <= 0.0 && d3 <= 0.0;
                        if (all_pos || all_neg) && cross(pa, pb, pc) != 0.0 {
                            continue 'outer;
                        }
                    }
                }
            }
            out.push(p);
        }
        out
    }

    #[test]
    fn center_examples() {
        assert_eq!(weighted_center(&[[1.4, -0.2]], &[7.0]).unwrap(), [1.4, -0.2]);
        assert_eq!(
            weighted_center(&[[0.0, 0.0], [1.0, 0.0]], &[1.0, 3.0]).unwrap(),
            [0.75, 0.0]
        );
        assert!(matches!(
            weighted_center(&[[0.0, 0.0]], &[0.0]),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn center_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pts: Vec<Point> = (0..50).map(|_| [rng.random_range(1.0..2.0), rng.random_range(-0.5..0.5)]).collect();
        let w: Vec<f64> = (0..50).map(|_| rng.random_range(0.5..4.0)).collect();
        let c = weighted_center(&pts, &w).unwrap();
        let m: f64 = w.iter().sum();
        let r = pts.iter().zip(&w).map(|(p, w)| p[0] * w).sum::<f64>() / m;
        let z = pts.iter().zip(&w).map(|(p, w)| p[1] * w).sum::<f64>() / m;
        assert!(((c[0] - r) / r).abs() < 1e-12);
        assert!(((c[1] - z) / z).abs() < 1e-12);
    }

    #[test]
    fn square_with_center_point() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        assert_eq!(convex_hull(&pts), vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
        assert_eq!(polygon_area(&convex_hull(&pts)), 1.0);
    }

    #[test]
    fn degenerate_hulls() {
        assert_eq!(convex_hull(&[[0.0, 0.0], [2.0, 2.0], [1.0, 1.0]]), vec![[0.0, 0.0], [2.0, 2.0]]);
        assert_eq!(convex_hull(&[[3.0, 1.0]]), vec![[3.0, 1.0]]);
        assert_eq!(convex_hull(&[[3.0, 1.0], [3.0, 1.0]]), vec![[3.0, 1.0]]);
    }

    #[test]
    fn hull_matches_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let pts: Vec<Point> = (0..200)
                .map(|_| [rng.random_range(0..40) as f64 * 0.25, rng.random_range(0..40) as f64 * 0.25])
                .collect();
            let mut hull = convex_hull(&pts);
            let mut oracle = brute_force_extreme(&pts);
            hull.sort_by(|a, b| a.partial_cmp(b).unwrap());
            oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(hull, oracle);
        }
    }

    #[test]
    fn area_is_member_count() {
        assert_eq!(blob_area(&[[0.0, 0.0]]), 1);
        assert_eq!(blob_area(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), 3);
    }

    proptest! {
        #[test]
        fn hull_properties(seed in any::<u64>(), n in 1usize..60, dr in -5.0f64..5.0, dz in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // quarter-unit lattice keeps translations exact
            let pts: Vec<Point> = (0..n).map(|_| [rng.random_range(0..20) as f64 * 0.25, rng.random_range(0..20) as f64 * 0.25]).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
            let s = BlobSummary::from_members(&pts, &w).unwrap();

            // convex, counter-clockwise
            let h = &s.hull;
            if h.len() >= 3 {
                for i in 0..h.len() {
                    prop_assert!(cross(h[i], h[(i + 1) % h.len()], h[(i + 2) % h.len()]) > 0.0);
                }
                for &p in &pts {
                    for i in 0..h.len() {
                        prop_assert!(cross(h[i], h[(i + 1) % h.len()], p) >= 0.0);
                    }
                }
            }

            // center inside the member bounding box
            let (rmin, rmax) = pts.iter().fold((f64::MAX, f64::MIN), |a, p| (a.0.min(p[0]), a.1.max(p[0])));
            let (zmin, zmax) = pts.iter().fold((f64::MAX, f64::MIN), |a, p| (a.0.min(p[1]), a.1.max(p[1])));
            prop_assert!(s.center[0] >= rmin - 1e-12 && s.center[0] <= rmax + 1e-12);
            prop_assert!(s.center[1] >= zmin - 1e-12 && s.center[1] <= zmax + 1e-12);

            // translation equivariance (dr, dz snapped to the lattice)
            let (dr, dz) = ((dr * 4.0).round() / 4.0, (dz * 4.0).round() / 4.0);
            let moved: Vec<Point> = pts.iter().map(|p| [p[0] + dr, p[1] + dz]).collect();
            let t = BlobSummary::from_members(&moved, &w).unwrap();
            let shifted: Vec<Point> = s.hull.iter().map(|p| [p[0] + dr, p[1] + dz]).collect();
            prop_assert_eq!(&t.hull, &shifted);
            prop_assert!((t.center[0] - s.center[0] - dr).abs() < 1e-9);
            prop_assert!((t.center[1] - s.center[1] - dz).abs() < 1e-9);

            // uniform weights give the centroid
            let c = weighted_center(&pts, &vec![2.0; n]).unwrap();
            let cr = pts.iter().map(|p| p[0]).sum::<f64>() / n as f64;
            prop_assert!((c[0] - cr).abs() < 1e-9);
        }
    }
}
