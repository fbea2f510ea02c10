use crate::error::{Error, Result};

// Guards against representation error such as 0.25 / 0.1 = 2.4999999999999996.
const ROUNDING_SLACK: f64 = 1e-9;

/// Converts a duration in seconds to whole samples, rounding half up.
pub fn seconds_to_samples(t: f64, ts: f64) -> Result<usize> {
    if !(ts > 0.0) || !ts.is_finite() || !t.is_finite() || t < 0.0 {
        return Err(Error::TimeGrid { tn: t, ts });
    }
    Ok((t / ts + 0.5 + ROUNDING_SLACK).floor() as usize)
}

/// Smallest whole number of samples covering `t` seconds.
pub fn seconds_to_samples_ceil(t: f64, ts: f64) -> Result<usize> {
    if !(ts > 0.0) || !ts.is_finite() || !t.is_finite() || t < 0.0 {
        return Err(Error::TimeGrid { tn: t, ts });
    }
    Ok((t / ts - ROUNDING_SLACK).ceil().max(0.0) as usize)
}
