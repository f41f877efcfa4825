//! Fixed-width decimal text for CSV output.

/// `x` with 12 significant digits. Zero prints as `0`, non-finite values
/// as `NaN`. Magnitudes outside [1e-4, 1e12) use exponent notation.
pub fn sig12(x: f64) -> String {
    if !x.is_finite() {
        return "NaN".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    // exponent after rounding, so 9.9999999999999 is treated as 10
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-4..12).contains(&exp) {
        let decimals = (11 - exp) as usize;
        format!("{x:.decimals$}")
    } else {
        sci
    }
}

pub fn opt12(x: Option<f64>) -> String {
    x.map_or_else(|| "NaN".into(), sig12)
}

/// Parses a CSV cell written by [`sig12`].
pub fn parse_cell(s: &str) -> f64 {
    s.trim().parse().unwrap_or(f64::NAN)
}
