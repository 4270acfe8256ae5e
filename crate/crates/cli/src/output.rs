//! Output formatting: 6 significant digits for human-facing text, full
//! round-trip precision (`Display` on f64) for CSV and JSON.

use std::path::Path;

use anyhow::Context;

/// Render with 6 significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if magnitude >= 6 {
        return format!("{x:.5e}");
    }
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Full-precision CSV cell; `None` renders empty.
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Optional value with 6 significant digits, `-` when absent.
pub fn sig6_opt(v: Option<f64>) -> String {
    v.map(sig6).unwrap_or_else(|| "-".to_string())
}

/// Write a JSON manifest echoing the effective configuration of a command
/// that produced files, so a run can be reproduced from its outputs alone.
pub fn write_manifest(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::sig6;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0), "1.00000");
        assert_eq!(sig6(0.97), "0.970000");
        assert_eq!(sig6(1234.5678), "1234.57");
        assert_eq!(sig6(-0.00012345678), "-0.000123457");
        assert_eq!(sig6(1234567.0), "1.23457e6");
    }
}
