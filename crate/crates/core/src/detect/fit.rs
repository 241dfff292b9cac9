//! Maximum-likelihood fits of the two candidate families for the normalized
//! density distribution. Exploratory only; detection never calls this.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};

const MIN_SAMPLES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Gumbel (maximum) extreme-value distribution.
    ExtremeValue,
    LogNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GumbelFit {
    pub location: f64,
    pub scale: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogNormalFit {
    /// Mean of `ln x`.
    pub mu: f64,
    /// Standard deviation of `ln x`.
    pub sigma: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitReport {
    pub samples: usize,
    pub extreme_value: GumbelFit,
    pub log_normal: LogNormalFit,
    pub best: Family,
}

fn check_samples(values: &[f64]) -> Result<()> {
    if values.len() < MIN_SAMPLES {
        return Err(Error::Statistics(format!(
            "distribution fit needs at least {MIN_SAMPLES} samples, got {}",
            values.len()
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Statistics(format!("sample {i} is not finite")));
    }
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return Err(Error::Statistics("degenerate variance: all samples are equal".into()));
    }
    Ok(())
}

pub fn fit_lognormal(values: &[f64]) -> Result<LogNormalFit> {
    check_samples(values)?;
    if let Some(i) = values.iter().position(|&v| v <= 0.0) {
        return Err(Error::Statistics(format!(
            "log-normal fit needs positive samples; sample {i} is {}",
            values[i]
        )));
    }
    let n = values.len() as f64;
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mu = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mu) * (l - mu)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::Statistics("degenerate variance of log samples".into()));
    }
    let sigma = var.sqrt();
    let sum_log = logs.iter().sum::<f64>();
    let log_likelihood = -sum_log - n * sigma.ln() - 0.5 * n * (2.0 * PI).ln() - 0.5 * n;
    Ok(LogNormalFit {
        mu,
        sigma,
        log_likelihood,
    })
}

/// Gumbel (max) fit. The scale solves
/// `scale = mean(x) - sum(x e^{-x/scale}) / sum(e^{-x/scale})` by bisection;
/// the location follows in closed form.
pub fn fit_gumbel(values: &[f64]) -> Result<GumbelFit> {
    check_samples(values)?;
    let n = values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    // shift so every exponent is <= 0
    let shifted: Vec<f64> = values.iter().map(|v| v - min).collect();
    let mean = shifted.iter().sum::<f64>() / n;

    let score = |scale: f64| {
        let (mut sw, mut swx) = (0.0, 0.0);
        for &x in &shifted {
            let w = (-x / scale).exp();
            sw += w;
            swx += w * x;
        }
        mean - scale - swx / sw
    };

    let sd = (shifted.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    let mut lo = sd * 1e-3;
    let mut hi = sd * 2.0;
    while score(lo) < 0.0 {
        lo *= 0.5;
    }
    while score(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    let scale = 0.5 * (lo + hi);
    let mean_w = shifted.iter().map(|x| (-x / scale).exp()).sum::<f64>() / n;
    let location = min - scale * mean_w.ln();

    let log_likelihood = values
        .iter()
        .map(|&x| {
            let z = (x - location) / scale;
            -scale.ln() - z - (-z).exp()
        })
        .sum();
    Ok(GumbelFit {
        location,
        scale,
        log_likelihood,
    })
}

/// Fits both families and flags the one with the higher log-likelihood.
pub fn fit_distribution(values: &[f64]) -> Result<FitReport> {
    let log_normal = fit_lognormal(values)?;
    let extreme_value = fit_gumbel(values)?;
    let best = if log_normal.log_likelihood >= extreme_value.log_likelihood {
        Family::LogNormal
    } else {
        Family::ExtremeValue
    };
    Ok(FitReport {
        samples: values.len(),
        extreme_value,
        log_normal,
        best,
    })
}
