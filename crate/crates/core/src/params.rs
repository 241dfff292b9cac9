//! Detection, blob-acceptance and tracking thresholds.
//!
//! The shipped defaults live in `params/default.toml` and are compiled in; a
//! user file only needs to list the values it changes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Text of the shipped default parameter file.
pub const DEFAULT_PARAMS_TOML: &str = include_str!("../params/default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// Moments over every plane of one time frame together.
    Pooled,
    PerPlane,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AreaGate {
    /// `|a1 - a2| <= max_area_change` in vertices.
    Absolute,
    /// `|a1 - a2| <= max_area_change / 100 * a1`.
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionParams {
    /// Multiplier of sigma in the first (whole-domain) outlier test.
    pub alpha: f64,
    /// Multiplier of sigma2 in the second test over the phase-1 survivors.
    pub beta: f64,
    pub min_abs_density: f64,
    pub min_rel_density: f64,
    pub pooling: Pooling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobParams {
    /// Minimum member count of an accepted blob.
    pub min_area: usize,
    pub min_abs_median: f64,
    pub min_rel_median: f64,
    pub max_abs_median: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackParams {
    pub max_area_change: f64,
    pub area_gate: AreaGate,
    /// Largest center displacement between consecutive frames, in mesh coordinates.
    pub max_jump: f64,
    pub max_frames: usize,
    pub min_frames: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub detection: DetectionParams,
    pub blob: BlobParams,
    pub track: TrackParams,
}

impl Default for Params {
    fn default() -> Self {
        toml::from_str(DEFAULT_PARAMS_TOML).expect("shipped parameter file parses")
    }
}

impl Default for DetectionParams {
    fn default() -> Self {
        Params::default().detection
    }
}

impl Default for BlobParams {
    fn default() -> Self {
        Params::default().blob
    }
}

impl Default for TrackParams {
    fn default() -> Self {
        Params::default().track
    }
}

/// Same shape as [`Params`] with every field optional, for layering a user file
/// over the defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialParams {
    #[serde(default)]
    detection: PartialDetection,
    #[serde(default)]
    blob: PartialBlob,
    #[serde(default)]
    track: PartialTrack,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialDetection {
    alpha: Option<f64>,
    beta: Option<f64>,
    min_abs_density: Option<f64>,
    min_rel_density: Option<f64>,
    pooling: Option<Pooling>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialBlob {
    min_area: Option<usize>,
    min_abs_median: Option<f64>,
    min_rel_median: Option<f64>,
    max_abs_median: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialTrack {
    max_area_change: Option<f64>,
    area_gate: Option<AreaGate>,
    max_jump: Option<f64>,
    max_frames: Option<usize>,
    min_frames: Option<usize>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($field:ident),+) => {
        $( if let Some(v) = $src.$field { $dst.$field = v; } )+
    };
}

impl Params {
    /// Parses a (possibly partial) parameter file and layers it over the defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let partial: PartialParams =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut p = Params::default();
        overlay!(p.detection, partial.detection, alpha, beta, min_abs_density, min_rel_density, pooling);
        overlay!(p.blob, partial.blob, min_area, min_abs_median, min_rel_median, max_abs_median);
        overlay!(p.track, partial.track, max_area_change, area_gate, max_jump, max_frames, min_frames);
        p.validate()?;
        Ok(p)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("params serialize")
    }

    pub fn validate(&self) -> Result<()> {
        self.detection.validate()?;
        self.blob.validate()?;
        self.track.validate()
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl DetectionParams {
    pub fn validate(&self) -> Result<()> {
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        positive("min_abs_density", self.min_abs_density)?;
        positive("min_rel_density", self.min_rel_density)
    }
}

impl BlobParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_area < 3 {
            return Err(Error::Config(format!(
                "min_area must be at least 3, got {}",
                self.min_area
            )));
        }
        positive("min_abs_median", self.min_abs_median)?;
        positive("min_rel_median", self.min_rel_median)?;
        positive("max_abs_median", self.max_abs_median)?;
        if !(self.min_abs_median < self.max_abs_median) {
            return Err(Error::Config(
                "min_abs_median must be below max_abs_median".into(),
            ));
        }
        Ok(())
    }
}

impl TrackParams {
    pub fn validate(&self) -> Result<()> {
        positive("max_area_change", self.max_area_change)?;
        positive("max_jump", self.max_jump)?;
        if self.min_frames == 0 || self.max_frames == 0 {
            return Err(Error::Config("min_frames and max_frames must be positive".into()));
        }
        if self.min_frames > self.max_frames {
            return Err(Error::Config(format!(
                "min_frames ({}) exceeds max_frames ({})",
                self.min_frames, self.max_frames
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_defaults_reproduce_published_table() {
        let p = Params::default();
        assert_eq!(p.blob.min_area, 3);
        assert_eq!(p.detection.min_rel_density, 1.2);
        assert_eq!(p.detection.min_abs_density, 2.05);
        assert_eq!(p.blob.max_abs_median, 2.75);
        assert_eq!(p.blob.min_rel_median, 1.3);
        assert_eq!(p.blob.min_abs_median, 2.15);
        assert_eq!(p.track.max_area_change, 25.0);
        assert_eq!(p.track.max_jump, 0.04);
        assert_eq!(p.track.max_frames, 100);
        assert_eq!(p.track.min_frames, 3);
        assert_eq!(p.track.area_gate, AreaGate::Absolute);
        assert_eq!(p.detection.alpha, 2.0);
        assert_eq!(p.detection.beta, 1.0);
        assert_eq!(p.detection.pooling, Pooling::Pooled);
    }

    #[test]
    fn partial_file_overlays_defaults() {
        let p = Params::from_toml_str("[track]\nmax_jump = 0.1\n").unwrap();
        assert_eq!(p.track.max_jump, 0.1);
        assert_eq!(p.track.min_frames, 3);
        assert_eq!(p.blob, BlobParams::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let p = Params::default();
        assert_eq!(Params::from_toml_str(&p.to_toml_string()).unwrap(), p);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Params::from_toml_str("[detection]\nalpha = 0.0\n").is_err());
        assert!(Params::from_toml_str("[blob]\nmin_area = 2\n").is_err());
        assert!(Params::from_toml_str("[track]\nmin_frames = 200\n").is_err());
        assert!(Params::from_toml_str("[track]\nbogus = 1\n").is_err());
        assert!(Params::from_toml_str("[blob]\nmin_abs_median = 3.0\n").is_err());
    }
}
