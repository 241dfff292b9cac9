//! Synthetic frames with drifting Gaussian bumps and known ground truth.
//!
//! The background `b(r, z)` is an annulus around the domain center. Frame `t = 1`
//! is `b` itself; later frames are
//! `b * (1 + sum_k A_k exp(-d_k^2 / (2 w^2)) + noise * eps)` with standard normal
//! `eps`, so the normalized field is `1 + bumps + noise`. Every (seed, time, plane)
//! triple owns its own random stream, which makes frames reproducible one at a time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{check_frame_index, FrameContainer, FrameSource};
use crate::mesh::{Point, RegionOfInterest, TriMesh};
use crate::track::Blob;

const JITTER_STREAM: u64 = u64::MAX;
const AMPLITUDE_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub bumps: usize,
    /// Displacement along +z per time step, in coordinate units.
    pub drift: f64,
    /// Standard deviation of the relative noise.
    pub noise: f64,
    /// Time steps, including the baseline frame.
    pub frames: usize,
    pub planes: usize,
    /// Grid cells per coordinate unit.
    pub resolution: f64,
    /// Gaussian width `w` of every bump.
    pub width: f64,
    /// Fixed bump amplitude; `None` draws each bump uniformly from 1.5 to 3.0.
    pub amplitude: Option<f64>,
    pub dt: f64,
    pub domain: RegionOfInterest,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            bumps: 3,
            drift: 0.02,
            noise: 0.01,
            frames: 64,
            planes: 1,
            resolution: 100.0,
            width: 0.05,
            amplitude: None,
            dt: 2.5e-6,
            domain: RegionOfInterest {
                r_min: 1.0,
                r_max: 2.0,
                z_min: -0.8,
                z_max: 0.8,
            },
        }
    }
}

impl SynthSpec {
    fn cells(&self) -> (usize, usize) {
        let d = &self.domain;
        (
            ((d.r_max - d.r_min) * self.resolution).round().max(1.0) as usize,
            ((d.z_max - d.z_min) * self.resolution).round().max(1.0) as usize,
        )
    }

    /// Largest grid cell edge.
    pub fn spacing(&self) -> f64 {
        let (nr, nz) = self.cells();
        let d = &self.domain;
        ((d.r_max - d.r_min) / nr as f64).max((d.z_max - d.z_min) / nz as f64)
    }

    fn z_band(&self) -> (f64, f64) {
        (self.domain.z_min + 2.0 * self.width, self.domain.z_max - 2.0 * self.width)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        self.domain.validate()?;
        if self.frames < 2 {
            return bad(format!("need at least 2 frames (baseline plus one), got {}", self.frames));
        }
        if self.planes == 0 {
            return bad("need at least one plane".into());
        }
        if !(self.resolution >= 2.0 && self.resolution.is_finite()) {
            return bad(format!("resolution must be at least 2 cells per unit, got {}", self.resolution));
        }
        if !(self.width > self.spacing()) {
            return bad(format!(
                "bump width {} must exceed the mesh spacing {}",
                self.width,
                self.spacing()
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be non-negative, got {}", self.noise));
        }
        if !self.drift.is_finite() {
            return bad("drift must be finite".into());
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if let Some(a) = self.amplitude {
            if !(a > 0.0 && a.is_finite()) {
                return bad(format!("amplitude must be positive, got {a}"));
            }
        }
        let (lo, hi) = self.z_band();
        if !(hi > lo) {
            return bad("domain is too short in z for the bump width".into());
        }
        if self.bumps > 0 {
            let gap = (self.domain.r_max - self.domain.r_min) / (self.bumps + 1) as f64;
            if gap < 4.0 * self.width {
                return bad(format!(
                    "{} bumps of width {} do not fit side by side (spacing {gap})",
                    self.bumps, self.width
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpState {
    pub center: Point,
    pub amplitude: f64,
    pub width: f64,
    /// Coarse-mesh vertices where this bump adds at least 3 noise deviations and
    /// lies within two widths of its center.
    pub members: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub time_index: usize,
    pub bumps: Vec<BumpState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    /// Units per time step and units per second.
    pub drift_per_frame: [f64; 2],
    pub drift_velocity: [f64; 2],
    /// Identical for every plane.
    pub frames: Vec<FrameTruth>,
}

impl GroundTruth {
    pub fn frame(&self, time_index: usize) -> Option<&FrameTruth> {
        self.frames.get(time_index.checked_sub(1)?)
    }
}

/// Lazily generated synthetic data set.
#[derive(Debug, Clone)]
pub struct Synthetic {
    spec: SynthSpec,
    mesh: TriMesh,
    baseline: Vec<f64>,
    amplitudes: Vec<f64>,
    starts: Vec<Point>,
}

fn grid_mesh(spec: &SynthSpec) -> TriMesh {
    let (nr, nz) = spec.cells();
    let d = &spec.domain;
    let (hr, hz) = ((d.r_max - d.r_min) / nr as f64, (d.z_max - d.z_min) / nz as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(JITTER_STREAM);
    let mut vertices = Vec::with_capacity((nr + 1) * (nz + 1));
    for j in 0..=nz {
        for i in 0..=nr {
            let mut p = [d.r_min + i as f64 * hr, d.z_min + j as f64 * hz];
            if i > 0 && i < nr && j > 0 && j < nz {
                p[0] += hr * rng.random_range(-0.2..0.2);
                p[1] += hz * rng.random_range(-0.2..0.2);
            }
            vertices.push(p);
        }
    }
    let id = |i: usize, j: usize| (j * (nr + 1) + i) as u32;
    let mut triangles = Vec::with_capacity(2 * nr * nz);
    for j in 0..nz {
        for i in 0..nr {
            let (a, b, c, e) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([a, b, c]);
                triangles.push([a, c, e]);
            } else {
                triangles.push([a, b, e]);
                triangles.push([b, c, e]);
            }
        }
    }
    TriMesh::new(vertices, triangles).expect("grid triangulation is valid")
}

impl Synthetic {
    pub fn new(spec: SynthSpec) -> Result<Self> {
        spec.validate()?;
        let mesh = grid_mesh(&spec);
        let d = spec.domain;
        let (rc, zc) = (0.5 * (d.r_min + d.r_max), 0.5 * (d.z_min + d.z_max));
        let ring = 0.35 * (d.r_max - d.r_min).min(d.z_max - d.z_min);
        let baseline = mesh
            .vertices()
            .iter()
            .map(|p| {
                let rho = (p[0] - rc).hypot(p[1] - zc);
                1.0 + 0.3 * (-((rho - ring) / 0.3).powi(2)).exp()
            })
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(AMPLITUDE_STREAM);
        let amplitudes = (0..spec.bumps)
            .map(|_| spec.amplitude.unwrap_or_else(|| rng.random_range(1.5..=3.0)))
            .collect();
        let (lo, hi) = spec.z_band();
        let z0 = if spec.drift >= 0.0 { lo } else { hi };
        let gap = (d.r_max - d.r_min) / (spec.bumps + 1) as f64;
        let starts = (0..spec.bumps).map(|k| [d.r_min + (k + 1) as f64 * gap, z0]).collect();
        Ok(Self {
            spec,
            mesh,
            baseline,
            amplitudes,
            starts,
        })
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    pub fn baseline(&self) -> &[f64] {
        &self.baseline
    }

    /// Bump centers at `time_index`; empty for the baseline frame. Centers wrap
    /// around inside the band that keeps two widths clear of the z boundaries.
    pub fn centers(&self, time_index: usize) -> Vec<Point> {
        if time_index < 2 {
            return Vec::new();
        }
        let (lo, hi) = self.spec.z_band();
        let shift = self.spec.drift * (time_index - 2) as f64;
        self.starts
            .iter()
            .map(|s| [s[0], lo + (s[1] + shift - lo).rem_euclid(hi - lo)])
            .collect()
    }

    fn bump_sum(&self, centers: &[Point], p: Point) -> f64 {
        let two_w2 = 2.0 * self.spec.width * self.spec.width;
        centers
            .iter()
            .zip(&self.amplitudes)
            .map(|(c, a)| {
                let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                a * (-d2 / two_w2).exp()
            })
            .sum()
    }

    pub fn frame_values(&self, time_index: usize, plane: usize) -> Vec<f64> {
        if time_index == 1 {
            return self.baseline.clone();
        }
        let centers = self.centers(time_index);
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(((time_index - 1) * self.spec.planes + plane) as u64);
        self.mesh
            .vertices()
            .iter()
            .zip(&self.baseline)
            .map(|(&p, &b)| {
                let eps: f64 = rng.sample(StandardNormal);
                b * (1.0 + self.bump_sum(&centers, p) + self.spec.noise * eps)
            })
            .collect()
    }

    pub fn truth(&self) -> GroundTruth {
        let w = self.spec.width;
        let floor = 3.0 * self.spec.noise;
        let frames = (1..=self.spec.frames)
            .map(|t| {
                let bumps = self
                    .centers(t)
                    .into_iter()
                    .zip(&self.amplitudes)
                    .map(|(c, &a)| {
                        let members = self
                            .mesh
                            .vertices()
                            .iter()
                            .enumerate()
                            .filter(|(_, p)| {
                                let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                                d2 <= 4.0 * w * w && a * (-d2 / (2.0 * w * w)).exp() >= floor
                            })
                            .map(|(i, _)| i as u32)
                            .collect();
                        BumpState {
                            center: c,
                            amplitude: a,
                            width: w,
                            members,
                        }
                    })
                    .collect();
                FrameTruth { time_index: t, bumps }
            })
            .collect();
        GroundTruth {
            drift_per_frame: [0.0, self.spec.drift],
            drift_velocity: [0.0, self.spec.drift / self.spec.dt],
            spec: self.spec.clone(),
            frames,
        }
    }

    pub fn to_container(&self) -> FrameContainer {
        let mut frames = Vec::with_capacity(self.spec.frames * self.spec.planes);
        for t in 1..=self.spec.frames {
            for p in 0..self.spec.planes {
                frames.push(self.frame_values(t, p));
            }
        }
        FrameContainer::new(
            self.mesh.clone(),
            self.spec.planes,
            self.spec.dt,
            format!("synthetic seed {}, relative density", self.spec.seed),
            frames,
        )
        .expect("generated frames are consistent")
    }
}

impl FrameSource for Synthetic {
    fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    fn time_steps(&self) -> usize {
        self.spec.frames
    }

    fn planes(&self) -> usize {
        self.spec.planes
    }

    fn dt(&self) -> f64 {
        self.spec.dt
    }

    fn load(&self, time_index: usize, plane: usize) -> Result<Vec<f64>> {
        check_frame_index(self, time_index, plane)?;
        Ok(self.frame_values(time_index, plane))
    }
}

pub fn generate_synthetic(spec: SynthSpec) -> Result<(FrameContainer, GroundTruth)> {
    let s = Synthetic::new(spec)?;
    Ok((s.to_container(), s.truth()))
}

/// Detection quality against ground truth over time indices >= 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub frames: usize,
    pub truth_bumps: usize,
    pub recovered: usize,
    pub false_blobs: usize,
}

impl Score {
    pub fn recall(&self) -> f64 {
        if self.truth_bumps == 0 {
            1.0
        } else {
            self.recovered as f64 / self.truth_bumps as f64
        }
    }

    pub fn false_per_frame(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.false_blobs as f64 / self.frames as f64
        }
    }
}

/// A bump counts as recovered when some blob center lies within `radius` of it. A
/// blob is false when it lies farther than `radius` from every bump.
pub fn score(truth: &GroundTruth, blobs: &[Blob], radius: f64) -> Score {
    let planes = truth.spec.planes;
    let mut s = Score {
        frames: 0,
        truth_bumps: 0,
        recovered: 0,
        false_blobs: 0,
    };
    let near = |a: Point, b: Point| (a[0] - b[0]).hypot(a[1] - b[1]) <= radius;
    for ft in truth.frames.iter().filter(|f| f.time_index >= 2) {
        for plane in 0..planes {
            let here: Vec<Point> = blobs
                .iter()
                .filter(|b| b.time_index == ft.time_index && b.plane_index == plane)
                .map(|b| b.center())
                .collect();
            s.frames += 1;
            s.truth_bumps += ft.bumps.len();
            s.recovered += ft.bumps.iter().filter(|k| here.iter().any(|&c| near(c, k.center))).count();
            s.false_blobs += here.iter().filter(|&&c| !ft.bumps.iter().any(|k| near(c, k.center))).count();
        }
    }
    s
}
