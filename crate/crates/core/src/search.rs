//! Scalar search: golden-section minimization and bisection.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the minimum of a unimodal `f` on `[lo, hi]`.
///
/// Returns the best evaluated point and its value once the bracket is narrower
/// than `xtol`.
pub fn golden_section(f: impl Fn(f64) -> f64, lo: f64, hi: f64, xtol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    if b - a <= xtol {
        let m = 0.5 * (a + b);
        return (m, f(m));
    }
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > xtol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Root of an increasing or decreasing `f` on `[lo, hi]` by bisection.
pub fn bisect(f: impl Fn(f64) -> f64, lo: f64, hi: f64, xtol: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::Bracketing(format!(
            "f({lo}) = {fa} and f({hi}) = {fb} have the same sign"
        )));
    }
    let rising = fa < 0.0;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if b - a <= xtol || m == a || m == b {
            return Ok(m);
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if (fm < 0.0) == rising {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn golden_finds_smooth_minimum() {
        let (x, fx) = golden_section(|x| (x - 0.3).powi(2) + 1.0, 0.0, 1.0, 1e-12);
        assert_abs_diff_eq!(x, 0.3, epsilon = 1e-7);
        assert_abs_diff_eq!(fx, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn golden_handles_kinks_and_boundary_minima() {
        let (x, _) = golden_section(|x| (x - 0.7).abs(), 0.0, 1.0, 1e-12);
        assert_abs_diff_eq!(x, 0.7, epsilon = 1e-10);
        let (x, _) = golden_section(|x| x, 0.2, 0.5, 1e-12);
        assert_abs_diff_eq!(x, 0.2, epsilon = 1e-10);
    }

    #[test]
    fn bisect_roots_and_bracketing_errors() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-15).unwrap();
        assert_abs_diff_eq!(r, 2f64.sqrt(), epsilon = 1e-14);
        let r = bisect(|x| 1.0 - x, 0.0, 3.0, 1e-15).unwrap();
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-14);
        assert!(matches!(
            bisect(|x| x + 1.0, 0.0, 1.0, 1e-12),
            Err(Error::Bracketing(_))
        ));
    }
}
