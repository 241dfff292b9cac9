//! Frame containers, result files and the synthetic data generator.

pub mod container;
pub mod results;
pub mod synth;

pub use container::{read_container, ContainerFile, ContainerHeader, Encoding, FrameContainer, FrameIter};
pub use results::{write_results, ResultFiles};
pub use synth::{generate_synthetic, score, BumpState, FrameTruth, GroundTruth, Score, SynthSpec, Synthetic};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Random-access view of a time series of per-vertex frames on one mesh.
///
/// Time indices are 1-based; time 1 is the baseline frame. Planes are 0-based.
pub trait FrameSource: Sync {
    fn mesh(&self) -> &TriMesh;
    fn time_steps(&self) -> usize;
    fn planes(&self) -> usize;
    /// Seconds between consecutive time indices.
    fn dt(&self) -> f64;
    fn load(&self, time_index: usize, plane: usize) -> Result<Vec<f64>>;
}

pub(crate) fn check_frame_index(source: &impl FrameSource, time_index: usize, plane: usize) -> Result<()> {
    if time_index == 0 || time_index > source.time_steps() || plane >= source.planes() {
        return Err(Error::input(
            None,
            format!(
                "frame (time {time_index}, plane {plane}) is outside 1..={} x 0..{}",
                source.time_steps(),
                source.planes()
            ),
        ));
    }
    Ok(())
}

/// Repeats the time series of `inner` `copies` times back to back. Used to grow
/// the input for weak-scaling runs.
#[derive(Debug)]
pub struct Replicated<S> {
    inner: S,
    copies: usize,
}

impl<S: FrameSource> Replicated<S> {
    pub fn new(inner: S, copies: usize) -> Self {
        Self {
            inner,
            copies: copies.max(1),
        }
    }
}

impl<S: FrameSource> FrameSource for Replicated<S> {
    fn mesh(&self) -> &TriMesh {
        self.inner.mesh()
    }

    fn time_steps(&self) -> usize {
        self.inner.time_steps() * self.copies
    }

    fn planes(&self) -> usize {
        self.inner.planes()
    }

    fn dt(&self) -> f64 {
        self.inner.dt()
    }

    fn load(&self, time_index: usize, plane: usize) -> Result<Vec<f64>> {
        check_frame_index(self, time_index, plane)?;
        let base = self.inner.time_steps();
        self.inner.load((time_index - 1) % base + 1, plane)
    }
}

impl<S: FrameSource + ?Sized> FrameSource for &S {
    fn mesh(&self) -> &TriMesh {
        (**self).mesh()
    }

    fn time_steps(&self) -> usize {
        (**self).time_steps()
    }

    fn planes(&self) -> usize {
        (**self).planes()
    }

    fn dt(&self) -> f64 {
        (**self).dt()
    }

    fn load(&self, time_index: usize, plane: usize) -> Result<Vec<f64>> {
        (**self).load(time_index, plane)
    }
}
