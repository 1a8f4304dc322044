//! Small helpers shared by the file exporters.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// 17 significant digits, enough for an exact `f64` round trip.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // Keeps the sign of -0.0 without scientific clutter.
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    format!("{x:.16e}")
}

/// Formats an optional metric; undefined values become empty cells.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatted_floats_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, -0.0] {
            let back: f64 = fmt_f64(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
