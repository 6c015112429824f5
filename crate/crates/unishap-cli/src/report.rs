//! CSV assembly and order statistics shared by the runners.

/// Quotes a field when it contains a comma, quote, or newline; inner
/// quotes are doubled. All other fields pass through unchanged.
pub fn csv_field(text: &str) -> String {
    if text.contains(',') || text.contains('"') || text.contains('\n') {
        let mut out = String::with_capacity(text.len() + 2);
        out.push('"');
        for ch in text.chars() {
            if ch == '"' {
                out.push('"');
            }
            out.push(ch);
        }
        out.push('"');
        out
    } else {
        text.to_string()
    }
}

/// Shortest round-trip decimal form with a `.` decimal point.
pub fn fmt_f64(value: f64) -> String {
    value.to_string()
}

/// Linear-interpolation quantile of pre-sorted values, `q` in [0, 1].
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty slice");
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn median(sorted: &[f64]) -> f64 {
    quantile(sorted, 0.5)
}

/// Interquartile range: the 0.75 quantile minus the 0.25 quantile.
pub fn iqr(sorted: &[f64]) -> f64 {
    quantile(sorted, 0.75) - quantile(sorted, 0.25)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_fields_pass_through() {
        assert_eq!(csv_field("regression"), "regression");
        assert_eq!(csv_field("1.25"), "1.25");
    }

    #[test]
    fn fields_with_separators_get_quoted() {
        assert_eq!(csv_field("adversarial:d=8,n=2"), "\"adversarial:d=8,n=2\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
        assert_eq!(csv_field("a\nb"), "\"a\nb\"");
    }

    #[test]
    fn float_formatting_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 123456.789, -0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn quantiles_interpolate_linearly() {
        let data = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(median(&data), 2.5);
        assert_eq!(quantile(&data, 0.0), 1.0);
        assert_eq!(quantile(&data, 1.0), 4.0);
        assert_eq!(iqr(&data), quantile(&data, 0.75) - quantile(&data, 0.25));
        assert_eq!(median(&[5.0]), 5.0);
        assert_eq!(iqr(&[5.0]), 0.0);
    }

    #[test]
    fn odd_length_median_is_the_middle_element() {
        assert_eq!(median(&[1.0, 10.0, 100.0]), 10.0);
    }
}
