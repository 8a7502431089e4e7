/// Rounds `v` to 9 significant decimal digits and returns the nearest `f64`.
pub(crate) fn quantize9(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.8e}").parse().expect("formatted float re-parses")
}

/// Formats `v` with at most 9 significant digits, as a plain decimal that
/// parses back to the same `f64` as [`quantize9`] gives.
pub fn format_sig9(v: f64) -> String {
    let q = quantize9(v);
    // Display emits the shortest round-trip representation.
    let s = format!("{q}");
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_examples() {
        assert_eq!(format_sig9(0.25), "0.25");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(2.0 / 3844.0), "0.000520291363");
        assert_eq!(format_sig9(123456789012.0), "123456789000");
    }

    #[test]
    fn quantized_values_round_trip() {
        for i in 1..10_000u32 {
            let v = 1.0 / f64::from(i);
            let q = quantize9(v);
            let back: f64 = format_sig9(q).parse().unwrap();
            assert_eq!(back.to_bits(), q.to_bits());
            assert_eq!(quantize9(q).to_bits(), q.to_bits());
        }
    }
}
