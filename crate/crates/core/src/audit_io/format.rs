//! Fixed float formatting for reports.

/// Rounds to six significant digits, ties to even on the decimal value.
///
/// Round-tripping the result through JSON reproduces it exactly, so every
/// float in a report is stable byte for byte.
pub fn sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

pub fn sig6_opt(x: Option<f64>) -> Option<f64> {
    x.map(sig6)
}
