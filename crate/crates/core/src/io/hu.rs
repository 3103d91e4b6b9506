//! Hounsfield-unit normalization to [-1, 1].

use crate::error::{Error, Result};

pub const DEFAULT_HU_LOW: f64 = -1000.0;
pub const DEFAULT_HU_HIGH: f64 = 600.0;

fn check(low: f64, high: f64) -> Result<()> {
    if !(low < high) {
        return Err(Error::InvalidRange(format!(
            "HU window needs low < high, got [{low}, {high}]"
        )));
    }
    Ok(())
}

/// Clips to `[low, high]` and maps affinely onto `[-1, 1]`.
pub fn normalize_hu(hu: f64, low: f64, high: f64) -> Result<f64> {
    check(low, high)?;
    let clipped = hu.clamp(low, high);
    Ok(2.0 * (clipped - low) / (high - low) - 1.0)
}

/// Inverse of [`normalize_hu`] on `[-1, 1]`; inputs outside are clipped.
pub fn denormalize_hu(value: f64, low: f64, high: f64) -> Result<f64> {
    check(low, high)?;
    Ok(low + (value.clamp(-1.0, 1.0) + 1.0) * 0.5 * (high - low))
}
