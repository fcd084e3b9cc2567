use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::search::bisect;

/// A strictly convex per-period loss (or cost) with an explicit derivative.
pub trait Loss: Send + Sync + fmt::Debug {
    fn value(&self, a: f64) -> f64;

    fn deriv(&self, a: f64) -> f64;

    /// Solves `deriv(a) = slope` on `[0, upper]`; returns 0 when `slope <= deriv(0)`
    /// and `upper` when `slope >= deriv(upper)`.
    fn deriv_inverse(&self, slope: f64, upper: f64) -> f64 {
        if slope <= self.deriv(0.0) {
            return 0.0;
        }
        if slope >= self.deriv(upper) {
            return upper;
        }
        bisect(
            |a| self.deriv(a) - slope,
            0.0,
            upper,
            1e-15 * upper.max(1.0),
        )
        .unwrap_or(upper)
    }
}

/// `linear * a + scale * a^exponent` with `exponent > 1`.
///
/// Covers every closed-form family in this crate: `a + a^2`, the span-of-control
/// cost `kappa * v^(1/eta)`, the learning cost `z^1.2` and the regularized
/// network cost `v^1.5 + 1e-6 v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLoss {
    pub linear: f64,
    pub scale: f64,
    pub exponent: f64,
}

impl PowerLoss {
    pub fn new(linear: f64, scale: f64, exponent: f64) -> Result<Self> {
        if !(linear.is_finite() && linear >= 0.0) {
            return Err(invalid("linear", format!("must be >= 0, got {linear}")));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(invalid("scale", format!("must be > 0, got {scale}")));
        }
        if !(exponent.is_finite() && exponent > 1.0) {
            return Err(invalid("exponent", format!("must be > 1, got {exponent}")));
        }
        Ok(Self {
            linear,
            scale,
            exponent,
        })
    }

    /// `kappa * v^(1/eta_span)`, the Cobb-Douglas span-of-control cost.
    pub fn span_of_control(kappa: f64, eta_span: f64) -> Result<Self> {
        if !(eta_span > 0.0 && eta_span < 1.0) {
            return Err(invalid(
                "eta_span",
                format!("must lie in (0, 1), got {eta_span}"),
            ));
        }
        Self::new(0.0, kappa, 1.0 / eta_span)
    }
}

impl Loss for PowerLoss {
    #[inline]
    fn value(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        self.linear * a + self.scale * a.powf(self.exponent)
    }

    #[inline]
    fn deriv(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return self.linear;
        }
        self.linear + self.scale * self.exponent * a.powf(self.exponent - 1.0)
    }

    fn deriv_inverse(&self, slope: f64, upper: f64) -> f64 {
        if slope <= self.linear {
            return 0.0;
        }
        let a = ((slope - self.linear) / (self.scale * self.exponent))
            .powf(1.0 / (self.exponent - 1.0));
        a.min(upper)
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A loss given by closures, for families without a closed form.
#[derive(Clone)]
pub struct FnLoss {
    label: String,
    value: ScalarFn,
    deriv: ScalarFn,
}

impl FnLoss {
    pub fn new(
        label: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            value: Arc::new(value),
            deriv: Arc::new(deriv),
        }
    }
}

impl fmt::Debug for FnLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnLoss")
            .field("label", &self.label)
            .finish()
    }
}

impl Loss for FnLoss {
    fn value(&self, a: f64) -> f64 {
        (self.value)(a)
    }

    fn deriv(&self, a: f64) -> f64 {
        (self.deriv)(a)
    }
}

/// A validated negative-discount problem: loss, discount `beta > 1`, task mass `xhat`.
#[derive(Debug, Clone)]
pub struct LossSpec {
    loss: Arc<dyn Loss>,
    beta: f64,
    xhat: f64,
}

const CHECK_SAMPLES: usize = 256;

impl LossSpec {
    pub fn new(loss: Arc<dyn Loss>, beta: f64, xhat: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 1.0) {
            return Err(invalid(
                "beta",
                format!("negative discounting needs beta > 1, got {beta}"),
            ));
        }
        if !(xhat.is_finite() && xhat > 0.0) {
            return Err(invalid("xhat", format!("must be positive, got {xhat}")));
        }
        validate_loss(loss.as_ref(), xhat)?;
        Ok(Self { loss, beta, xhat })
    }

    pub fn power(loss: PowerLoss, beta: f64, xhat: f64) -> Result<Self> {
        Self::new(Arc::new(loss), beta, xhat)
    }

    pub fn loss(&self) -> &Arc<dyn Loss> {
        &self.loss
    }

    #[inline]
    pub fn beta(&self) -> f64 {
        self.beta
    }

    #[inline]
    pub fn xhat(&self) -> f64 {
        self.xhat
    }

    #[inline]
    pub fn value(&self, a: f64) -> f64 {
        self.loss.value(a)
    }

    #[inline]
    pub fn deriv(&self, a: f64) -> f64 {
        self.loss.deriv(a)
    }

    /// Inverse of `l'` on `[0, upper]`.
    pub fn deriv_inverse(&self, slope: f64, upper: f64) -> f64 {
        self.loss.deriv_inverse(slope, upper)
    }

    /// Same loss and discount on a different task mass.
    pub fn with_xhat(&self, xhat: f64) -> Result<Self> {
        Self::new(self.loss.clone(), self.beta, xhat)
    }

    /// Lower bound of the order interval, `phi(x) = l'(0) x`.
    pub fn phi(&self, x: f64) -> f64 {
        self.deriv(0.0) * x
    }

    /// Upper bound of the order interval, `psi(x) = l(x)`.
    pub fn psi(&self, x: f64) -> f64 {
        self.value(x)
    }
}

fn validate_loss(loss: &dyn Loss, xhat: f64) -> Result<()> {
    let l0 = loss.value(0.0);
    if l0.abs() > 1e-14 {
        return Err(Error::InvalidLoss(format!("l(0) must be 0, got {l0}")));
    }
    let d0 = loss.deriv(0.0);
    if !(d0.is_finite() && d0 >= 0.0) {
        return Err(Error::InvalidLoss(format!("l'(0) must be >= 0, got {d0}")));
    }
    let h = 1e-6 * xhat;
    let mut prev = d0;
    for m in 1..=CHECK_SAMPLES {
        let a = xhat * m as f64 / CHECK_SAMPLES as f64;
        let d = loss.deriv(a);
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::InvalidLoss(format!(
                "l'({a}) = {d} must be positive"
            )));
        }
        if d <= prev {
            return Err(Error::InvalidLoss(format!(
                "l' not strictly increasing near a = {a} (not strictly convex)"
            )));
        }
        prev = d;
        if m < CHECK_SAMPLES {
            let fd = (loss.value(a + h) - loss.value(a - h)) / (2.0 * h);
            if (fd - d).abs() > 1e-5 * (1.0 + d.abs()) {
                return Err(Error::InvalidLoss(format!(
                    "derivative inconsistent with value at a = {a}: finite difference {fd}, deriv {d}"
                )));
            }
        }
    }
    Ok(())
}
