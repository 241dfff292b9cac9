//! Point-outlier selection: normalization against the baseline frame, a two-phase
//! moment test and absolute/relative density floors.
//!
//! The nested domains are
//!
//! * Γ: every vertex of the (restricted) mesh,
//! * Γ₂: vertices with `N - mu > alpha * sigma`, moments taken over Γ,
//! * Γ₃: vertices of Γ₂ with `N - mu2 > beta * sigma2` (moments over Γ₂)
//!   and `N > max(min_abs_density, min_rel_density * mu2)`.
//!
//! All comparisons are strict.

mod fit;

pub use fit::{fit_distribution, fit_gumbel, fit_lognormal, Family, FitReport, GumbelFit, LogNormalFit};

use crate::error::{Error, Result};
use crate::mesh::Frame;
use crate::params::{DetectionParams, Pooling};

/// Moments over Γ and Γ₂ for one frame (or one pooled time step).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameStats {
    pub mu: f64,
    pub sigma: f64,
    /// `None` when fewer than two vertices survived phase 1.
    pub mu2: Option<f64>,
    pub sigma2: Option<f64>,
}

/// Output masks of the detection stage for one plane.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    /// Γ₂ membership.
    pub phase1: Vec<bool>,
    /// Γ₃ membership.
    pub mask: Vec<bool>,
    pub phase1_count: usize,
    pub count: usize,
}

impl CandidateSet {
    fn new(phase1: Vec<bool>, mask: Vec<bool>) -> Self {
        let phase1_count = phase1.iter().filter(|&&b| b).count();
        let count = mask.iter().filter(|&&b| b).count();
        Self {
            phase1,
            mask,
            phase1_count,
            count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// Point-wise ratio `values / baseline`.
pub fn normalize_values(values: &[f64], baseline: &[f64]) -> Result<Vec<f64>> {
    if values.len() != baseline.len() {
        return Err(Error::Argument(format!(
            "frame has {} values, baseline has {}",
            values.len(),
            baseline.len()
        )));
    }
    if let Some(i) = baseline.iter().position(|&b| b == 0.0) {
        return Err(Error::Numerical(format!(
            "baseline is zero at vertex {i}; cannot normalize"
        )));
    }
    Ok(values.iter().zip(baseline).map(|(v, b)| v / b).collect())
}

pub fn normalize(frame: &Frame, baseline: &Frame) -> Result<Frame> {
    Ok(Frame {
        values: normalize_values(&frame.values, &baseline.values)?,
        ..frame.clone()
    })
}

/// Single-pass (Welford) population mean and variance.
#[derive(Debug, Default, Clone, Copy)]
struct Running {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Running {
    #[inline]
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn finish(self) -> Result<(f64, f64)> {
        if self.n < 2 {
            return Err(Error::Statistics(format!(
                "need at least 2 selected vertices for moments, got {}",
                self.n
            )));
        }
        Ok((self.mean, (self.m2.max(0.0) / self.n as f64).sqrt()))
    }
}

/// Population mean and standard deviation over the vertices where `mask` is set.
pub fn moments(values: &[f64], mask: &[bool]) -> Result<(f64, f64)> {
    debug_assert_eq!(values.len(), mask.len());
    let mut acc = Running::default();
    for (&v, &m) in values.iter().zip(mask) {
        if m {
            acc.push(v);
        }
    }
    acc.finish()
}

fn moments_unmasked<'a>(planes: impl IntoIterator<Item = &'a [f64]>) -> Result<(f64, f64)> {
    let mut acc = Running::default();
    for plane in planes {
        for &v in plane {
            acc.push(v);
        }
    }
    acc.finish()
}

fn moments_pooled<'a>(planes: impl IntoIterator<Item = (&'a [f64], &'a [bool])>) -> Result<(f64, f64)> {
    let mut acc = Running::default();
    for (values, mask) in planes {
        for (&v, &m) in values.iter().zip(mask) {
            if m {
                acc.push(v);
            }
        }
    }
    acc.finish()
}

/// Γ₂: `N_i - mu > alpha * sigma`.
pub fn phase1(values: &[f64], mu: f64, sigma: f64, alpha: f64) -> Vec<bool> {
    let cut = alpha * sigma;
    values.iter().map(|&v| v - mu > cut).collect()
}

/// Members of `gamma2` with `N_i - mu2 > beta * sigma2`.
pub fn phase2(values: &[f64], gamma2: &[bool], mu2: f64, sigma2: f64, beta: f64) -> Vec<bool> {
    let cut = beta * sigma2;
    values
        .iter()
        .zip(gamma2)
        .map(|(&v, &m)| m && v - mu2 > cut)
        .collect()
}

/// `max(min_abs_density, min_rel_density * mu2)`.
pub fn density_floor_threshold(params: &DetectionParams, mu2: f64) -> f64 {
    params.min_abs_density.max(params.min_rel_density * mu2)
}

/// Γ₃: members of `mask` above the density floor.
pub fn density_floor(values: &[f64], mask: &[bool], mu2: f64, params: &DetectionParams) -> Vec<bool> {
    let floor = density_floor_threshold(params, mu2);
    values.iter().zip(mask).map(|(&v, &m)| m && v > floor).collect()
}

/// Runs both phases and the floor on already-normalized planes of one time step.
///
/// With [`Pooling::Pooled`] the moments are taken over all planes together; the
/// thresholds are then applied plane by plane.
pub fn detect_normalized(
    planes: &[&[f64]],
    params: &DetectionParams,
) -> Result<Vec<(CandidateSet, FrameStats)>> {
    match params.pooling {
        Pooling::PerPlane => planes
            .iter()
            .map(|p| detect_group(std::slice::from_ref(p), params).map(|mut v| v.remove(0)))
            .collect(),
        Pooling::Pooled => detect_group(planes, params),
    }
}

fn detect_group(planes: &[&[f64]], params: &DetectionParams) -> Result<Vec<(CandidateSet, FrameStats)>> {
    let (mu, sigma) = moments_unmasked(planes.iter().copied())?;
    let gamma2: Vec<Vec<bool>> = planes
        .iter()
        .map(|p| phase1(p, mu, sigma, params.alpha))
        .collect();

    let second = moments_pooled(planes.iter().copied().zip(gamma2.iter().map(Vec::as_slice)));
    let (mu2, sigma2) = match second {
        Ok(m) => m,
        Err(Error::Statistics(_)) => {
            // fewer than two phase-1 survivors: nothing can pass phase 2
            let stats = FrameStats {
                mu,
                sigma,
                mu2: None,
                sigma2: None,
            };
            return Ok(planes
                .iter()
                .zip(gamma2)
                .map(|(p, g)| (CandidateSet::new(g, vec![false; p.len()]), stats))
                .collect());
        }
        Err(e) => return Err(e),
    };
    let stats = FrameStats {
        mu,
        sigma,
        mu2: Some(mu2),
        sigma2: Some(sigma2),
    };
    Ok(planes
        .iter()
        .zip(gamma2)
        .map(|(p, g)| {
            let outliers = phase2(p, &g, mu2, sigma2, params.beta);
            let gamma3 = density_floor(p, &outliers, mu2, params);
            (CandidateSet::new(g, gamma3), stats)
        })
        .collect())
}

/// normalize, then moments over Γ, phase 1, moments over Γ₂, phase 2 and density floor.
pub fn detect_candidates(
    frame: &Frame,
    baseline: &Frame,
    params: &DetectionParams,
) -> Result<(CandidateSet, FrameStats)> {
    let norm = normalize_values(&frame.values, &baseline.values)?;
    let params = DetectionParams {
        pooling: Pooling::PerPlane,
        ..*params
    };
    Ok(detect_normalized(&[&norm], &params)?.remove(0))
}
