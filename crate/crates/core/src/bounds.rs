//! Moving-block estimation of the intercept interval and the resulting prediction bands.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::{check_len, Dataset, WindowPlan};
use crate::error::{EmmbError, Result};
use crate::estimator::EmFit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundsSource {
    /// Sliding blocks of length `w`.
    MovingBlock { w: usize },
    /// One intercept per known group.
    KnownGroups,
}

/// Extreme block intercepts: `mu_lower_hat = min a_l`, `mu_upper_hat = max a_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsEstimate {
    pub block_intercepts: Vec<f64>,
    pub mu_lower_hat: f64,
    pub mu_upper_hat: f64,
    pub source: BoundsSource,
}

impl BoundsEstimate {
    pub fn w(&self) -> Option<usize> {
        match self.source {
            BoundsSource::MovingBlock { w } => Some(w),
            BoundsSource::KnownGroups => None,
        }
    }

    pub fn width(&self) -> f64 {
        self.mu_upper_hat - self.mu_lower_hat
    }
}

/// Mean of every length-`w` window of `values`, in order; `values.len() - w + 1` entries.
///
/// Each block sum is a difference of prefix sums of the centered series, so a block's value
/// does not depend on where a scan over the blocks starts.
pub fn sliding_means(values: &[f64], w: usize) -> Result<Vec<f64>> {
    let n = values.len();
    if w < 2 || w > n {
        return Err(EmmbError::InvalidBlockLength { w, n });
    }
    let center = values.iter().sum::<f64>() / n as f64;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in values {
        acc += v - center;
        prefix.push(acc);
    }
    Ok((0..=n - w)
        .map(|l| center + (prefix[l + w] - prefix[l]) / w as f64)
        .collect())
}

/// `a_l`: the mean of `y_i - x_i' beta` over block `l` (rows `l..l + w`).
pub fn moving_block_intercepts(data: &Dataset, beta: &DVector<f64>, w: usize) -> Result<Vec<f64>> {
    let r = data.partial_residuals(beta)?;
    sliding_means(r.as_slice(), w)
}

/// Min and max of the moving-block intercepts.
pub fn intercept_bounds(block_intercepts: Vec<f64>, w: usize) -> Result<BoundsEstimate> {
    let (lo, hi) = min_max(&block_intercepts)?;
    Ok(BoundsEstimate {
        block_intercepts,
        mu_lower_hat: lo,
        mu_upper_hat: hi,
        source: BoundsSource::MovingBlock { w },
    })
}

/// Bounds for a known-group fit: the extremes of the group intercepts themselves.
pub fn group_bounds(fit: &EmFit) -> Result<BoundsEstimate> {
    let a = fit.window_intercepts.as_slice().to_vec();
    let (lo, hi) = min_max(&a)?;
    Ok(BoundsEstimate {
        block_intercepts: a,
        mu_lower_hat: lo,
        mu_upper_hat: hi,
        source: BoundsSource::KnownGroups,
    })
}

fn min_max(v: &[f64]) -> Result<(f64, f64)> {
    if v.is_empty() {
        return Err(EmmbError::Empty("block intercepts"));
    }
    Ok(v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a))))
}

/// Moving-block bounds at fixed slopes. With a fixed-`n0` plan the block must be longer
/// than the window.
pub fn estimate_bounds(
    data: &Dataset,
    beta: &DVector<f64>,
    plan: &WindowPlan,
    w: usize,
) -> Result<BoundsEstimate> {
    if let Some(n0) = plan.n0() {
        if w <= n0 {
            return Err(EmmbError::BlockNotLongerThanWindow { w, n0 });
        }
    }
    intercept_bounds(moving_block_intercepts(data, beta, w)?, w)
}

/// Population targets of the moving-block bounds for a known intercept path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WRobustTargets {
    pub lower: f64,
    pub upper: f64,
}

/// Extreme expected block-average intercepts over all length-`w` blocks of `intercept_path`.
pub fn w_robust_targets(intercept_path: &[f64], w: usize) -> Result<WRobustTargets> {
    let means = sliding_means(intercept_path, w)?;
    let (lower, upper) = min_max(&means)?;
    Ok(WRobustTargets { lower, upper })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
    pub point_center: f64,
}

/// `[x' beta + mu_lower_hat, x' beta + mu_upper_hat]`.
pub fn predict_interval(x_new: &[f64], beta: &DVector<f64>, bounds: &BoundsEstimate) -> Result<PredictionInterval> {
    check_len("new covariate row", beta.len(), x_new.len())?;
    let xb: f64 = x_new.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
    let lower = xb + bounds.mu_lower_hat;
    let upper = xb + bounds.mu_upper_hat;
    Ok(PredictionInterval {
        lower,
        upper,
        point_center: 0.5 * (lower + upper),
    })
}
