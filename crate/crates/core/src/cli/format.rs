//! Numeric formatting for CLI output.

/// `x` with six significant digits, trailing zeros trimmed (like `%g`).
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&exp) {
        let s = format!("{:.5e}", x);
        let (mant, e) = s.split_once('e').expect("exponent form");
        return format!("{}e{}", trim(mant), e);
    }
    let decimals = (5 - exp).max(0) as usize;
    trim(&format!("{:.*}", decimals, x))
}

fn trim(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}
