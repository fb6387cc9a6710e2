//! Locale-independent number formatting and small CSV helpers.

use std::io::Write;

use crate::system::PhysicalParams;
use crate::{Result, C64};

/// Twelve significant digits in scientific notation, `.` as decimal separator.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Writes `# key=value` metadata lines, a header row and data rows.
pub fn write_csv<W: Write>(
    out: &mut W,
    metadata: &[(String, String)],
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    for (k, v) in metadata {
        writeln!(out, "# {k}={v}")?;
    }
    writeln!(out, "{}", columns.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Metadata lines echoing every physical parameter.
pub fn params_metadata(p: &PhysicalParams) -> Vec<(String, String)> {
    [
        ("B_ext", p.b_ext),
        ("g_h_x", p.g_h_x),
        ("g_e_x", p.g_e_x),
        ("gamma", p.gamma),
        ("omega_V", p.omega_v),
        ("omega_H", p.omega_h),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), fmt_num(v)))
    .collect()
}

/// `(basis_label, re, im)` rows for a state vector.
pub fn write_state_csv<W: Write>(out: &mut W, labels: &[String], amps: &[C64]) -> Result<()> {
    writeln!(out, "basis_label,re,im")?;
    for (l, a) in labels.iter().zip(amps) {
        writeln!(out, "{},{},{}", l, fmt_num(a.re), fmt_num(a.im))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(1.0), "1.00000000000e0");
        assert_eq!(fmt_num(-3.592e-4), "-3.59200000000e-4");
        assert_eq!(fmt_num(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(fmt_num(f64::NAN), "nan");
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(
            &mut buf,
            &[("n".into(), "4".into())],
            &["a", "b"],
            &[vec!["1".into(), "2".into()]],
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "# n=4\na,b\n1,2\n");
    }
}
