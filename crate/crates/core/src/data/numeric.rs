/// Values above this are compressed by [`transform_numeric`].
pub const LOG_THRESHOLD: f64 = 2.0;

/// `x` for `x <= 2`, `(ln x)^2` above.
///
/// Callers map negative and missing raw values to zero before this point.
pub fn transform_numeric(x: f64) -> f64 {
    if x > LOG_THRESHOLD {
        let l = x.ln();
        l * l
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_and_log_square() {
        assert_eq!(transform_numeric(1.0), 1.0);
        assert_eq!(transform_numeric(2.0), 2.0);
        assert_eq!(transform_numeric(0.0), 0.0);
        assert!((transform_numeric(std::f64::consts::E.powi(2)) - 4.0).abs() < 1e-12);
        // continuity is not expected at the threshold: (ln 2)^2 < 2
        assert!(transform_numeric(2.0 + 1e-9) < 1.0);
    }
}
