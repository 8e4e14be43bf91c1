//! Group-relative advantage normalization.
//!
//! Rollout rewards are normalized within their sampling group: each reward
//! has the group mean subtracted and is divided by the group's population
//! standard deviation, with a small epsilon added to the deviation so a
//! constant group yields zero advantages instead of dividing by zero.

use crate::error::{Error, Result};

/// Default stabilizer added to the standard deviation.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Normalizes one group of rollout rewards.
///
/// Returns `(r_i - mean) / (std + epsilon)` for each reward, where `std`
/// is the population standard deviation (divisor `n`). Groups need at
/// least two rewards; a singleton has no relative signal.
pub fn group_advantages(rewards: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::GroupTooSmall { len: rewards.len() });
    }
    // A constant group carries no relative signal. Short-circuit to exact
    // zeros: summing n copies of r and dividing by n can round the mean a
    // final-place digit away from r, and that dust would otherwise survive
    // the stabilized division.
    if rewards.windows(2).all(|w| w[0] == w[1]) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let variance = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let denom = variance.sqrt() + epsilon;
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}

/// Normalizes a flat batch laid out as consecutive groups of `group_size`.
///
/// The batch length must be a positive multiple of `group_size`; group
/// boundaries fall every `group_size` entries in order.
pub fn batch_advantages(rewards: &[f64], group_size: usize, epsilon: f64) -> Result<Vec<f64>> {
    if group_size < 2 {
        return Err(Error::GroupTooSmall { len: group_size });
    }
    if rewards.is_empty() || !rewards.len().is_multiple_of(group_size) {
        return Err(Error::ShapeMismatch {
            len: rewards.len(),
            group_size,
        });
    }
    let mut out = Vec::with_capacity(rewards.len());
    for group in rewards.chunks(group_size) {
        out.extend(group_advantages(group, epsilon)?);
    }
    Ok(out)
}
