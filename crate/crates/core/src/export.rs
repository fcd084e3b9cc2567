//! Text serializations shared by the model exports.

use std::fmt::Write;

/// Full-precision float: 17 significant digits in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Two-column CSV with a header row.
pub fn xy_csv(header: (&str, &str), xs: &[f64], ys: &[f64]) -> String {
    let mut out = format!("{},{}\n", header.0, header.1);
    for (x, y) in xs.iter().zip(ys) {
        let _ = writeln!(out, "{},{}", fmt_f64(*x), fmt_f64(*y));
    }
    out
}

/// CSV with a header and arbitrary float rows.
pub fn rows_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt_f64).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
