//! Robust spread of touchdown placements.

use crate::error::{Error, Result};

use super::RolloutLog;

/// Median; the mean of the two central values for even counts.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Statistic("median of an empty sample".into()));
    }
    if let Some(v) = values.iter().find(|v| v.is_nan()) {
        return Err(Error::Statistic(format!("sample contains {v}")));
    }
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    let (lower, &mut upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    if values.len() % 2 == 1 {
        return Ok(upper);
    }
    let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(0.5 * (below + upper))
}

/// Median absolute deviation about the median.
pub fn median_abs_deviation(values: &[f64]) -> Result<f64> {
    let m = median(values)?;
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    median(&dev)
}

/// MAD of the within-tread touchdown coordinates, pooled over feet.
pub fn touchdown_mad(log: &RolloutLog) -> Result<f64> {
    if log.touchdowns.is_empty() {
        return Err(Error::Statistic("log contains no touchdowns".into()));
    }
    let coords: Vec<f64> = log.touchdowns.iter().map(|t| t.tread_coord).collect();
    median_abs_deviation(&coords)
}
