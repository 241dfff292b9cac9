//! Detection and tracking of blob-filaments in time-ordered scalar fields sampled
//! on unstructured 2D triangular meshes.
//!
//! The processing chain per time frame is:
//!
//! 1. normalize the frame against the initial (baseline) frame and optionally
//!    refine the mesh ([`mesh`]),
//! 2. select outlier vertices with a two-phase moment test and density floors ([`detect`]),
//! 3. group outlier vertices into connected regions with a two-pass union-find scan
//!    over triangles and accept regions by size and median density ([`label`]),
//! 4. summarize each region by weighted center, convex hull and vertex count ([`geometry`]).
//!
//! Frames are independent, so [`pipeline`] fans them out over workers and hands the
//! results in time order to the sequential greedy tracker in [`track`].

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod detect;
pub mod error;
pub mod geometry;
pub mod io;
pub mod label;
pub mod mesh;
pub mod params;
pub mod pipeline;
pub mod scaling;
pub mod track;

pub use error::{Error, Result};
pub use mesh::{Frame, RegionOfInterest, TriMesh};
pub use params::{AreaGate, BlobParams, DetectionParams, Params, Pooling, TrackParams};
