//! Strong and weak scaling sweeps over worker counts.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{FrameSource, Replicated};
use crate::label::median;
use crate::pipeline::{run, Execution, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingMode {
    /// Fixed total frames.
    Strong,
    /// Fixed frames per worker; the input is replicated to grow with the workers.
    Weak { frames_per_worker: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRow {
    pub workers: usize,
    pub frames: usize,
    /// Median processing wall time over the repeats, setup excluded.
    pub seconds: f64,
    /// Strong: `T(1) / T(P)`. Weak: `P * T(1) / T(P)`.
    pub speedup: f64,
    /// `speedup / P`.
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingTable {
    pub mode: ScalingMode,
    pub rows: Vec<ScalingRow>,
}

impl ScalingTable {
    pub fn csv(&self) -> String {
        let mut out = String::from("workers,frames,seconds,speedup,efficiency\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.workers, r.frames, r.seconds, r.speedup, r.efficiency
            ));
        }
        out
    }

    /// Largest relative deviation of the time column from its first entry.
    pub fn time_variation(&self) -> f64 {
        let Some(first) = self.rows.first() else { return 0.0 };
        self.rows
            .iter()
            .map(|r| (r.seconds - first.seconds).abs() / first.seconds)
            .fold(0.0, f64::max)
    }

    pub fn row(&self, workers: usize) -> Option<&ScalingRow> {
        self.rows.iter().find(|r| r.workers == workers)
    }
}

fn timed(config: &RunConfig, source: &impl FrameSource, repeats: usize) -> Result<f64> {
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats.max(1) {
        let out = run(config, source)?;
        times.push(out.timing.processing_seconds());
    }
    median(&times)
}

/// Runs the pipeline for every worker count in `workers` and reports speedup
/// relative to the first entry, which should be 1.
pub fn benchmark(
    config: &RunConfig,
    source: &impl FrameSource,
    workers: &[usize],
    mode: ScalingMode,
    repeats: usize,
) -> Result<ScalingTable> {
    if workers.is_empty() || workers.contains(&0) {
        return Err(Error::Argument("worker list must be non-empty and positive".into()));
    }
    let mut rows = Vec::with_capacity(workers.len());
    for &p in workers {
        let cfg = RunConfig {
            workers: p,
            execution: if p == 1 { Execution::Sequential } else { config.execution },
            ..config.clone()
        };
        let (frames, seconds) = match mode {
            ScalingMode::Strong => {
                let (a, b) = cfg.time_range(source)?;
                (b - a + 1, timed(&cfg, source, repeats)?)
            }
            ScalingMode::Weak { frames_per_worker } => {
                let frames = frames_per_worker * p;
                let copies = (frames + cfg.t_start - 1).div_ceil(source.time_steps());
                let grown = Replicated::new(source, copies);
                let cfg = RunConfig {
                    t_end: Some(cfg.t_start + frames - 1),
                    ..cfg
                };
                (frames, timed(&cfg, &grown, repeats)?)
            }
        };
        rows.push(ScalingRow {
            workers: p,
            frames,
            seconds,
            speedup: 0.0,
            efficiency: 0.0,
        });
    }
    let (p0, t0) = (rows[0].workers as f64, rows[0].seconds);
    for r in &mut rows {
        let ratio = t0 / r.seconds;
        r.speedup = match mode {
            ScalingMode::Strong => ratio * p0,
            ScalingMode::Weak { .. } => ratio * r.workers as f64 / p0,
        };
        r.efficiency = r.speedup / r.workers as f64;
    }
    Ok(ScalingTable { mode, rows })
}
