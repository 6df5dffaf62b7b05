//! Deterministic number formatting shared by every CSV/JSON emitter.
//!
//! All measured values are written with 6 significant digits so repeated
//! runs with the same inputs produce byte-identical artifacts.

/// Format with 6 significant digits, plain decimal notation.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (5 - mag).max(0) as usize;
    format!("{:.*}", decimals, x)
}

/// Round to 6 significant digits, for values embedded in JSON numbers.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(5 - mag);
    (x * scale).round() / scale
}
