//! End-to-end runs: frames are split into contiguous per-worker ranges, analyzed
//! independently and handed to the tracker in time order.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::{Condvar, Mutex};
use std::time::Instant;

use serde::Serialize;

use crate::detect::{detect_normalized, normalize_values, FrameStats};
use crate::error::{Error, Result};
use crate::geometry::BlobSummary;
use crate::io::FrameSource;
use crate::label::{accept_blobs, blob_candidates};
use crate::mesh::{restrict, RefinementPlan, RegionOfInterest, Restriction, TriMesh};
use crate::params::Params;
use crate::track::{Blob, Track, Tracker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Execution {
    Sequential,
    /// Worker pool. Without the `parallel` feature this runs sequentially.
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// `None` keeps the whole mesh.
    pub roi: Option<RegionOfInterest>,
    /// First time index to analyze, 1-based.
    pub t_start: usize,
    /// Last time index to analyze, inclusive; `None` means the last available.
    pub t_end: Option<usize>,
    pub workers: usize,
    pub params: Params,
    /// Midpoint refinement levels applied to the restricted mesh.
    pub refine_levels: usize,
    pub execution: Execution,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            roi: None,
            t_start: 1,
            t_end: None,
            workers: 1,
            params: Params::default(),
            refine_levels: 1,
            execution: Execution::Parallel,
        }
    }
}

impl RunConfig {
    /// Checks the configuration against a source and returns the inclusive time range.
    pub fn time_range(&self, source: &impl FrameSource) -> Result<(usize, usize)> {
        self.params.validate()?;
        if let Some(roi) = &self.roi {
            roi.validate()?;
        }
        if self.workers == 0 {
            return Err(Error::Argument("worker count must be at least 1".into()));
        }
        let available = source.time_steps();
        let t_end = self.t_end.unwrap_or(available);
        if self.t_start == 0 || self.t_start > t_end {
            return Err(Error::Argument(format!(
                "time range {}..={t_end} is empty or starts before 1",
                self.t_start
            )));
        }
        if t_end > available {
            return Err(Error::input(
                None,
                format!("time range ends at {t_end} but the input holds {available} time steps"),
            ));
        }
        Ok((self.t_start, t_end))
    }
}

/// Splits `0..frame_count` into `workers` contiguous ranges whose lengths differ by
/// at most one, longer ranges first.
pub fn partition(frame_count: usize, workers: usize) -> Vec<Range<usize>> {
    assert!(workers >= 1, "at least one worker");
    let (base, extra) = (frame_count / workers, frame_count % workers);
    let mut start = 0;
    (0..workers)
        .map(|w| {
            let len = base + usize::from(w < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Bounded buffer that releases items strictly in key order.
///
/// `push` blocks while the buffer holds `capacity` items, unless the pushed key is
/// the next one due, so at most `capacity + 1` items are held. `pop` blocks until
/// the next key arrives.
#[derive(Debug)]
pub struct ReorderBuffer<T> {
    state: Mutex<ReorderState<T>>,
    changed: Condvar,
    capacity: usize,
}

#[derive(Debug)]
struct ReorderState<T> {
    next: usize,
    end: usize,
    pending: BTreeMap<usize, T>,
    closed: bool,
}

impl<T> ReorderBuffer<T> {
    /// Accepts keys in `keys.start..keys.end`.
    pub fn new(keys: Range<usize>, capacity: usize) -> Self {
        Self {
            state: Mutex::new(ReorderState {
                next: keys.start,
                end: keys.end,
                pending: BTreeMap::new(),
                closed: false,
            }),
            changed: Condvar::new(),
            capacity: capacity.max(1),
        }
    }

    /// Returns false if the buffer was closed and the item dropped.
    pub fn push(&self, key: usize, item: T) -> bool {
        let mut s = self.state.lock().unwrap();
        assert!(key >= s.next && key < s.end, "key {key} outside the pending range");
        while !s.closed && key != s.next && s.pending.len() >= self.capacity {
            s = self.changed.wait(s).unwrap();
        }
        if s.closed {
            return false;
        }
        s.pending.insert(key, item);
        self.changed.notify_all();
        true
    }

    /// Next item in key order, or `None` once every key was delivered or the buffer
    /// was closed.
    pub fn pop(&self) -> Option<(usize, T)> {
        let mut s = self.state.lock().unwrap();
        loop {
            if s.next >= s.end {
                return None;
            }
            let key = s.next;
            if let Some(item) = s.pending.remove(&key) {
                s.next += 1;
                self.changed.notify_all();
                return Some((key, item));
            }
            if s.closed {
                return None;
            }
            s = self.changed.wait(s).unwrap();
        }
    }

    /// Wakes every waiter; later pushes are dropped.
    pub fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.changed.notify_all();
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Detections of one time index, all planes.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub time_index: usize,
    pub worker: usize,
    /// Sorted by (plane, id).
    pub blobs: Vec<Blob>,
    /// One entry per plane, empty if the frame failed.
    pub stats: Vec<FrameStats>,
    /// Γ₃ size per plane.
    pub candidates: Vec<usize>,
    /// Set when analysis failed; the frame then has no blobs.
    pub error: Option<String>,
    /// Analysis time without loading, seconds.
    pub detect_seconds: f64,
}

/// Shared read-only state for analyzing frames: the detection mesh, the refinement
/// plan and the baseline frame of every plane.
#[derive(Debug)]
pub struct DetectionContext {
    restriction: Option<Restriction>,
    plan: RefinementPlan,
    /// Baseline per plane on the restricted coarse mesh.
    baseline: Vec<Vec<f64>>,
    params: Params,
    pub setup_seconds: f64,
    pub baseline_seconds: f64,
}

impl DetectionContext {
    pub fn new(source: &impl FrameSource, roi: Option<&RegionOfInterest>, refine_levels: usize, params: Params) -> Result<Self> {
        let t0 = Instant::now();
        let restriction = roi.map(|roi| restrict(source.mesh(), roi)).transpose()?;
        let coarse = restriction.as_ref().map_or(source.mesh(), |r| &r.mesh);
        let plan = if refine_levels == 0 {
            RefinementPlan::identity(coarse)
        } else {
            RefinementPlan::new(coarse, refine_levels)?
        };
        let setup_seconds = t0.elapsed().as_secs_f64();

        let t0 = Instant::now();
        let mut baseline = Vec::with_capacity(source.planes());
        for plane in 0..source.planes() {
            let raw = source.load(1, plane)?;
            let values = match &restriction {
                Some(r) => r.restrict_values(&raw),
                None => raw,
            };
            if let Some(i) = values.iter().position(|&v| v == 0.0) {
                return Err(Error::Numerical(format!(
                    "baseline frame of plane {plane} is zero at vertex {i}"
                )));
            }
            baseline.push(values);
        }
        Ok(Self {
            restriction,
            plan,
            baseline,
            params,
            setup_seconds,
            baseline_seconds: t0.elapsed().as_secs_f64(),
        })
    }

    /// The mesh on which blobs are labeled and measured.
    pub fn mesh(&self) -> &TriMesh {
        &self.plan.mesh
    }

    pub fn planes(&self) -> usize {
        self.baseline.len()
    }

    /// Loads every plane of `time_index`.
    pub fn load(&self, source: &impl FrameSource, time_index: usize) -> Result<Vec<Vec<f64>>> {
        (0..self.planes()).map(|p| source.load(time_index, p)).collect()
    }

    /// Analyzes one time step from raw per-plane values on the input mesh.
    pub fn analyze(&self, time_index: usize, raw: &[Vec<f64>]) -> Result<(Vec<Blob>, Vec<FrameStats>, Vec<usize>)> {
        if raw.len() != self.planes() {
            return Err(Error::Argument(format!("expected {} planes, got {}", self.planes(), raw.len())));
        }
        let mut normalized = Vec::with_capacity(raw.len());
        let mut density = Vec::with_capacity(raw.len());
        for (values, base) in raw.iter().zip(&self.baseline) {
            let values = match &self.restriction {
                Some(r) => {
                    if values.len() != r.old_to_new.len() {
                        return Err(Error::Argument(format!(
                            "frame has {} values, input mesh has {} vertices",
                            values.len(),
                            r.old_to_new.len()
                        )));
                    }
                    r.restrict_values(values)
                }
                None => values.clone(),
            };
            let norm = normalize_values(&values, base)?;
            normalized.push(self.plan.interpolate(&norm)?);
            density.push(self.plan.interpolate(&values)?);
        }

        let refs: Vec<&[f64]> = normalized.iter().map(Vec::as_slice).collect();
        let detections = detect_normalized(&refs, &self.params.detection)?;
        let mesh = self.mesh();
        let mut blobs = Vec::new();
        let mut stats = Vec::with_capacity(detections.len());
        let mut counts = Vec::with_capacity(detections.len());
        for (plane, (candidates, st)) in detections.into_iter().enumerate() {
            stats.push(st);
            counts.push(candidates.count);
            let Some(mu2) = st.mu2 else { continue };
            let components = blob_candidates(mesh, &candidates.mask, &normalized[plane]);
            for (id, c) in accept_blobs(components, mu2, &self.params.blob).into_iter().enumerate() {
                let points: Vec<_> = c.members.iter().map(|&v| mesh.vertices()[v as usize]).collect();
                let weights: Vec<f64> = c.members.iter().map(|&v| density[plane][v as usize]).collect();
                blobs.push(Blob {
                    time_index,
                    plane_index: plane,
                    id: id as u32,
                    summary: BlobSummary::from_members(&points, &weights)?,
                    median: c.median,
                    members: c.members,
                });
            }
        }
        Ok((blobs, stats, counts))
    }

    /// Loads and analyzes one time step. Load failures are returned as errors;
    /// analysis failures are recorded in the result.
    pub fn process(&self, source: &impl FrameSource, time_index: usize, worker: usize) -> Result<FrameResult> {
        let raw = self.load(source, time_index)?;
        let t0 = Instant::now();
        let analyzed = self.analyze(time_index, &raw);
        let detect_seconds = t0.elapsed().as_secs_f64();
        Ok(match analyzed {
            Ok((blobs, stats, candidates)) => FrameResult {
                time_index,
                worker,
                blobs,
                stats,
                candidates,
                error: None,
                detect_seconds,
            },
            Err(e) => {
                log::warn!("time index {time_index} skipped: {e}");
                FrameResult {
                    time_index,
                    worker,
                    blobs: Vec::new(),
                    stats: Vec::new(),
                    candidates: Vec::new(),
                    error: Some(e.to_string()),
                    detect_seconds,
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameTiming {
    pub time_index: usize,
    pub worker: usize,
    pub detect_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    pub workers: usize,
    pub execution: Execution,
    pub frames: Vec<FrameTiming>,
    /// Restriction and refinement of the mesh.
    pub setup_seconds: f64,
    /// Loading and sharing the baseline frame.
    pub baseline_seconds: f64,
    /// Whole run, setup included.
    pub total_seconds: f64,
    pub worker_frames: Vec<usize>,
}

impl TimingReport {
    /// Wall time spent on frames: total minus mesh setup and baseline loading.
    pub fn processing_seconds(&self) -> f64 {
        (self.total_seconds - self.setup_seconds - self.baseline_seconds).max(0.0)
    }

    pub fn detect_seconds(&self) -> f64 {
        self.frames.iter().map(|f| f.detect_seconds).sum()
    }

    pub fn median_detect_seconds(&self) -> Option<f64> {
        let v: Vec<f64> = self.frames.iter().map(|f| f.detect_seconds).collect();
        crate::label::median(&v).ok()
    }

    /// Comma-separated per-frame table followed by no summary rows.
    pub fn table(&self) -> String {
        let mut out = String::from("time_index,worker,detect_seconds\n");
        for f in &self.frames {
            out.push_str(&format!("{},{},{}\n", f.time_index, f.worker, f.detect_seconds));
        }
        out
    }

    /// One JSON summary record, then one record per frame.
    pub fn records(&self) -> String {
        let summary = serde_json::json!({
            "record": "summary",
            "workers": self.workers,
            "execution": self.execution,
            "setup_seconds": self.setup_seconds,
            "baseline_seconds": self.baseline_seconds,
            "total_seconds": self.total_seconds,
            "worker_frames": self.worker_frames,
        });
        let mut out = summary.to_string();
        out.push('\n');
        for f in &self.frames {
            let mut v = serde_json::to_value(f).expect("timing serializes");
            v["record"] = "frame".into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// One entry per analyzed time index, ascending.
    pub frames: Vec<FrameResult>,
    pub tracks: Vec<Track>,
    /// Tracks dropped for being shorter than `min_frames`.
    pub pruned: usize,
    pub detection_vertices: usize,
    pub timing: TimingReport,
}

impl RunOutput {
    pub fn blobs(&self) -> Vec<Blob> {
        self.frames.iter().flat_map(|f| f.blobs.iter().cloned()).collect()
    }

    pub fn failed_frames(&self) -> impl Iterator<Item = &FrameResult> {
        self.frames.iter().filter(|f| f.error.is_some())
    }
}

/// Runs detection over the configured time range and tracks the result.
pub fn run(config: &RunConfig, source: &impl FrameSource) -> Result<RunOutput> {
    let started = Instant::now();
    let (t_start, t_end) = config.time_range(source)?;
    let ctx = DetectionContext::new(source, config.roi.as_ref(), config.refine_levels, config.params)?;
    let mut tracker = Tracker::new(config.params.track, source.dt())?;
    let count = t_end - t_start + 1;
    let ranges: Vec<Range<usize>> = partition(count, config.workers)
        .into_iter()
        .map(|r| r.start + t_start..r.end + t_start)
        .collect();

    let mut frames = Vec::with_capacity(count);
    let mut consume = |result: FrameResult| -> Result<()> {
        tracker.step(result.time_index, result.blobs.clone())?;
        frames.push(result);
        Ok(())
    };

    match effective_execution(config) {
        Execution::Sequential => {
            for (worker, range) in ranges.iter().enumerate() {
                for t in range.clone() {
                    consume(ctx.process(source, t, worker)?)?;
                }
            }
        }
        Execution::Parallel => run_parallel(&ctx, source, &ranges, t_start..t_end + 1, &mut consume)?,
    }

    let timing = TimingReport {
        workers: config.workers,
        execution: effective_execution(config),
        frames: frames
            .iter()
            .map(|f| FrameTiming {
                time_index: f.time_index,
                worker: f.worker,
                detect_seconds: f.detect_seconds,
            })
            .collect(),
        setup_seconds: ctx.setup_seconds,
        baseline_seconds: ctx.baseline_seconds,
        total_seconds: 0.0,
        worker_frames: ranges.iter().map(|r| r.len()).collect(),
    };
    let pruned = tracker.pruned();
    let tracks = tracker.finalize();
    Ok(RunOutput {
        frames,
        tracks,
        pruned,
        detection_vertices: ctx.mesh().vertex_count(),
        timing: TimingReport {
            total_seconds: started.elapsed().as_secs_f64(),
            ..timing
        },
    })
}

fn effective_execution(config: &RunConfig) -> Execution {
    if cfg!(feature = "parallel") && config.workers > 1 {
        config.execution
    } else {
        Execution::Sequential
    }
}

#[cfg(feature = "parallel")]
fn run_parallel(
    ctx: &DetectionContext,
    source: &impl FrameSource,
    ranges: &[Range<usize>],
    keys: Range<usize>,
    consume: &mut dyn FnMut(FrameResult) -> Result<()>,
) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ranges.len())
        .thread_name(|i| format!("blobtrack-worker-{i}"))
        .build()
        .map_err(|e| Error::Argument(format!("cannot start worker pool: {e}")))?;
    // Contiguous ranges mean the consumer waits on worker 0 while later workers run
    // ahead, so every frame may need to be buffered.
    let buffer: ReorderBuffer<Result<FrameResult>> = ReorderBuffer::new(keys.clone(), keys.len());
    pool.in_place_scope(|scope| {
        for (worker, range) in ranges.iter().enumerate().filter(|(_, r)| !r.is_empty()) {
            let buffer = &buffer;
            let range = range.clone();
            scope.spawn(move |_| {
                for t in range {
                    let result = ctx.process(source, t, worker);
                    let failed = result.is_err();
                    if !buffer.push(t, result) || failed {
                        break;
                    }
                }
            });
        }
        let mut outcome = Ok(());
        while let Some((_, result)) = buffer.pop() {
            if let Err(e) = result.and_then(&mut *consume) {
                outcome = Err(e);
                break;
            }
        }
        buffer.close();
        outcome
    })
}

#[cfg(not(feature = "parallel"))]
fn run_parallel(
    _ctx: &DetectionContext,
    _source: &impl FrameSource,
    _ranges: &[Range<usize>],
    _keys: Range<usize>,
    _consume: &mut dyn FnMut(FrameResult) -> Result<()>,
) -> Result<()> {
    unreachable!("parallel execution requires the `parallel` feature")
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;
    use std::time::Duration;

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::io::{SynthSpec, Synthetic};

    #[test]
    fn partition_examples() {
        let sizes = |n, w| partition(n, w).iter().map(|r| r.len()).collect::<Vec<_>>();
        assert_eq!(sizes(8, 4), vec![2, 2, 2, 2]);
        assert_eq!(sizes(10, 4), vec![3, 3, 2, 2]);
        assert_eq!(sizes(3, 8), vec![1, 1, 1, 0, 0, 0, 0, 0]);
    }

    proptest! {
        #[test]
        fn partition_covers_once(n in 0usize..500, w in 1usize..40) {
            let parts = partition(n, w);
            prop_assert_eq!(parts.len(), w);
            let mut next = 0;
            for r in &parts {
                prop_assert_eq!(r.start, next);
                next = r.end;
            }
            prop_assert_eq!(next, n);
            let lens: Vec<usize> = parts.iter().map(|r| r.len()).collect();
            prop_assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn reorder_buffer_delivers_in_order_under_random_delays() {
        for seed in 0..20u64 {
            let n = 60;
            let buffer = Arc::new(ReorderBuffer::new(5..5 + n, 4));
            let workers = 4;
            let handles: Vec<_> = partition(n, workers)
                .into_iter()
                .enumerate()
                .map(|(w, r)| {
                    let buffer = Arc::clone(&buffer);
                    std::thread::spawn(move || {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed * 100 + w as u64);
                        for k in r.map(|k| k + 5) {
                            std::thread::sleep(Duration::from_micros(rng.random_range(0..300)));
                            assert!(buffer.push(k, k * 10));
                        }
                    })
                })
                .collect();
            let mut seen = Vec::new();
            while let Some((k, v)) = buffer.pop() {
                assert_eq!(v, k * 10);
                seen.push(k);
                assert!(buffer.len() <= 5);
            }
            for h in handles {
                h.join().unwrap();
            }
            assert_eq!(seen, (5..5 + n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn reorder_buffer_close_releases_waiters() {
        let buffer = Arc::new(ReorderBuffer::new(0..10, 1));
        assert!(buffer.push(3, ()));
        let b = Arc::clone(&buffer);
        let blocked = std::thread::spawn(move || b.push(4, ()));
        std::thread::sleep(Duration::from_millis(20));
        buffer.close();
        assert!(!blocked.join().unwrap());
        assert_eq!(buffer.pop(), None);
    }

    fn small_source() -> Synthetic {
        Synthetic::new(SynthSpec {
            frames: 12,
            resolution: 40.0,
            amplitude: Some(3.0),
            ..SynthSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn tracker_sees_every_frame_in_order() {
        let source = small_source();
        let out = run(
            &RunConfig {
                workers: 3,
                ..RunConfig::default()
            },
            &source,
        )
        .unwrap();
        let times: Vec<usize> = out.frames.iter().map(|f| f.time_index).collect();
        assert_eq!(times, (1..=12).collect::<Vec<_>>());
        assert_eq!(out.timing.worker_frames, vec![4, 4, 4]);
        assert!(out.frames[0].blobs.is_empty());
        assert_eq!(out.tracks.len(), 3);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let source = small_source();
        let seq = run(
            &RunConfig {
                execution: Execution::Sequential,
                ..RunConfig::default()
            },
            &source,
        )
        .unwrap();
        let par = run(
            &RunConfig {
                workers: 5,
                ..RunConfig::default()
            },
            &source,
        )
        .unwrap();
        assert_eq!(seq.blobs(), par.blobs());
        assert_eq!(seq.tracks, par.tracks);
    }

    #[test]
    fn roi_restricts_detection() {
        let source = small_source();
        let roi = RegionOfInterest::new(1.4, 1.6, -0.8, 0.8).unwrap();
        let out = run(
            &RunConfig {
                roi: Some(roi),
                t_start: 2,
                t_end: Some(8),
                ..RunConfig::default()
            },
            &source,
        )
        .unwrap();
        assert_eq!(out.frames.len(), 7);
        for b in out.blobs() {
            assert!(roi.contains(b.center()));
        }
        assert_eq!(out.tracks.len(), 1);
    }

    #[test]
    fn bad_ranges_fail_up_front() {
        let source = small_source();
        let err = run(
            &RunConfig {
                t_end: Some(13),
                ..RunConfig::default()
            },
            &source,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Input { .. }));
        let err = run(
            &RunConfig {
                t_start: 5,
                t_end: Some(4),
                ..RunConfig::default()
            },
            &source,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    /// Wraps a source and corrupts one frame.
    struct Poisoned<S>(S, usize);

    impl<S: FrameSource> FrameSource for Poisoned<S> {
        fn mesh(&self) -> &TriMesh {
            self.0.mesh()
        }
        fn time_steps(&self) -> usize {
            self.0.time_steps()
        }
        fn planes(&self) -> usize {
            self.0.planes()
        }
        fn dt(&self) -> f64 {
            self.0.dt()
        }
        fn load(&self, t: usize, p: usize) -> Result<Vec<f64>> {
            let mut v = self.0.load(t, p)?;
            if t == self.1 {
                v.pop();
            }
            Ok(v)
        }
    }

    #[test]
    fn failed_frame_is_recorded_and_breaks_tracks() {
        let source = Poisoned(small_source(), 7);
        let out = run(
            &RunConfig {
                workers: 2,
                ..RunConfig::default()
            },
            &source,
        )
        .unwrap();
        let failed: Vec<usize> = out.failed_frames().map(|f| f.time_index).collect();
        assert_eq!(failed, vec![7]);
        // 2..=6 and 8..=12 each give three tracks of five frames
        assert_eq!(out.tracks.len(), 6);
        assert!(out.tracks.iter().all(|t| t.len() == 5));
    }

    #[test]
    fn timing_outputs() {
        let source = small_source();
        let out = run(&RunConfig::default(), &source).unwrap();
        let t = &out.timing;
        assert_eq!(t.table().lines().count(), 13);
        assert_eq!(t.records().lines().count(), 13);
        assert!(t.total_seconds >= t.detect_seconds());
        assert!(t.frames.iter().all(|f| f.detect_seconds >= 0.0));
    }
}
