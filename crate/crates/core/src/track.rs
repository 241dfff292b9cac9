//! Greedy nearest-center tracking of blobs across consecutive frames.
//!
//! A blob may continue a track when its center is within `max_jump` of the
//! track's last center and its area changed by no more than `max_area_change`.
//! Among all eligible (blob, track) pairs the closest is committed first, then the
//! next closest among the remaining ones, and so on. Tracks never bridge a missing
//! frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BlobSummary;
use crate::mesh::Point;
use crate::params::{AreaGate, TrackParams};

/// An accepted blob in one (time, plane) frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub time_index: usize,
    pub plane_index: usize,
    /// Position of the blob within its frame's blob list.
    pub id: u32,
    #[serde(flatten)]
    pub summary: BlobSummary,
    /// Median normalized density.
    pub median: f64,
    /// Vertex indices on the detection mesh.
    pub members: Vec<u32>,
}

impl Blob {
    pub fn center(&self) -> Point {
        self.summary.center
    }

    pub fn area(&self) -> usize {
        self.summary.area
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackStatus {
    Active,
    Ended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub plane_index: usize,
    pub status: TrackStatus,
    /// Consecutive blobs, one per time index.
    pub blobs: Vec<Blob>,
    /// `(dr/dt, dz/dt)` between consecutive blobs, in coordinate units per second.
    pub velocities: Vec<[f64; 2]>,
}

impl Track {
    fn start(id: u64, blob: Blob) -> Self {
        Self {
            id,
            plane_index: blob.plane_index,
            status: TrackStatus::Active,
            blobs: vec![blob],
            velocities: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }

    pub fn first_time(&self) -> usize {
        self.blobs[0].time_index
    }

    pub fn last(&self) -> &Blob {
        self.blobs.last().expect("tracks are never empty")
    }

    pub fn mean_velocity(&self) -> Option<[f64; 2]> {
        if self.velocities.is_empty() {
            return None;
        }
        let n = self.velocities.len() as f64;
        let s = self
            .velocities
            .iter()
            .fold([0.0, 0.0], |a, v| [a[0] + v[0], a[1] + v[1]]);
        Some([s[0] / n, s[1] / n])
    }
}

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn area_ok(params: &TrackParams, previous: usize, current: usize) -> bool {
    let diff = previous.abs_diff(current) as f64;
    match params.area_gate {
        AreaGate::Absolute => diff <= params.max_area_change,
        AreaGate::Relative => diff <= params.max_area_change / 100.0 * previous as f64,
    }
}

/// Whether `blob` may continue `track` under both gates.
pub fn eligible(params: &TrackParams, blob: &Blob, track: &Track) -> Option<f64> {
    if track.status != TrackStatus::Active || track.plane_index != blob.plane_index {
        return None;
    }
    let tail = track.last();
    let d = distance(blob.center(), tail.center());
    (d <= params.max_jump && area_ok(params, tail.area(), blob.area())).then_some(d)
}

/// Greedy assignment of `current` blobs to `tracks`. Entry `i` of the result is the
/// index into `tracks` that blob `i` continues, or `None` for a new track.
///
/// Ties in distance go to the lower blob id, then the lower track id.
pub fn match_blobs(current: &[Blob], tracks: &[Track], params: &TrackParams) -> Result<Vec<Option<usize>>> {
    if let Some(first) = current.first() {
        if let Some(b) = current.iter().find(|b| b.time_index != first.time_index) {
            return Err(Error::Contract(format!(
                "blobs from time {} and {} passed to one matching step",
                first.time_index, b.time_index
            )));
        }
    }

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (bi, blob) in current.iter().enumerate() {
        for (ti, track) in tracks.iter().enumerate() {
            if let Some(d) = eligible(params, blob, track) {
                pairs.push((d, bi, ti));
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| (current[a.1].plane_index, current[a.1].id).cmp(&(current[b.1].plane_index, current[b.1].id)))
            .then_with(|| tracks[a.2].id.cmp(&tracks[b.2].id))
    });

    let mut assignment = vec![None; current.len()];
    let mut taken = vec![false; tracks.len()];
    for (_, bi, ti) in pairs {
        if assignment[bi].is_none() && !taken[ti] {
            assignment[bi] = Some(ti);
            taken[ti] = true;
        }
    }
    Ok(assignment)
}

/// Sequential tracker state. Feed it one time index at a time, in increasing order.
#[derive(Debug, Clone)]
pub struct Tracker {
    params: TrackParams,
    dt: f64,
    active: Vec<Track>,
    finished: Vec<Track>,
    next_id: u64,
    last_time: Option<usize>,
    pruned: usize,
}

impl Tracker {
    pub fn new(params: TrackParams, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0) {
            return Err(Error::Argument(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            params,
            dt,
            active: Vec::new(),
            finished: Vec::new(),
            next_id: 0,
            last_time: None,
            pruned: 0,
        })
    }

    pub fn active(&self) -> &[Track] {
        &self.active
    }

    /// Number of tracks deleted for being shorter than `min_frames`.
    pub fn pruned(&self) -> usize {
        self.pruned
    }

    /// Consumes the blobs of every plane at `time_index`.
    pub fn step(&mut self, time_index: usize, mut blobs: Vec<Blob>) -> Result<()> {
        if let Some(b) = blobs.iter().find(|b| b.time_index != time_index) {
            return Err(Error::Contract(format!(
                "blob stamped with time {} passed for time {time_index}",
                b.time_index
            )));
        }
        if let Some(last) = self.last_time {
            if time_index <= last {
                return Err(Error::Contract(format!(
                    "frame {time_index} arrived after frame {last}"
                )));
            }
            if time_index > last + 1 {
                self.end_all();
            }
        }
        self.last_time = Some(time_index);
        blobs.sort_by_key(|b| (b.plane_index, b.id));

        let assignment = match_blobs(&blobs, &self.active, &self.params)?;
        let mut continued = vec![false; self.active.len()];
        let mut spawned = Vec::new();
        for (blob, slot) in blobs.into_iter().zip(assignment) {
            match slot {
                Some(ti) => {
                    let track = &mut self.active[ti];
                    let (c0, c1) = (track.last().center(), blob.center());
                    track
                        .velocities
                        .push([(c1[0] - c0[0]) / self.dt, (c1[1] - c0[1]) / self.dt]);
                    track.blobs.push(blob);
                    continued[ti] = true;
                }
                None => spawned.push(blob),
            }
        }

        let max_frames = self.params.max_frames;
        let previous = std::mem::take(&mut self.active);
        for (track, kept) in previous.into_iter().zip(continued) {
            if kept && track.len() < max_frames {
                self.active.push(track);
            } else {
                self.retire(track);
            }
        }
        for blob in spawned {
            let track = Track::start(self.next_id, blob);
            self.next_id += 1;
            if max_frames <= 1 {
                self.retire(track);
            } else {
                self.active.push(track);
            }
        }
        Ok(())
    }

    fn retire(&mut self, mut track: Track) {
        track.status = TrackStatus::Ended;
        if track.len() >= self.params.min_frames {
            self.finished.push(track);
        } else {
            self.pruned += 1;
        }
    }

    fn end_all(&mut self) {
        for track in std::mem::take(&mut self.active) {
            self.retire(track);
        }
    }

    /// Ends every active track, drops short ones and returns the report sorted by
    /// first time index, then id.
    pub fn finalize(mut self) -> Vec<Track> {
        self.end_all();
        let mut out = self.finished;
        out.sort_by_key(|t| (t.first_time(), t.id));
        out
    }
}
