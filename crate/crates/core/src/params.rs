use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants for the quartic free energy
/// `F(φ) = (α/4)(φ² - β/α)²` and the Burgers coupling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub nu: f64,
    /// Coupling constant `K` multiplying the capillary force.
    pub coupling: f64,
    pub half_length: f64,
    /// Only `M ≡ 1` is supported; kept so configurations can state it.
    pub mobility: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            alpha: 1.0,
            beta: 1.0,
            kappa: 1e-3,
            nu: 0.006,
            coupling: 1.0,
            half_length: 1.0,
            mobility: 1.0,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("kappa", self.kappa),
            ("nu", self.nu),
            ("half_length", self.half_length),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !self.coupling.is_finite() {
            return Err(Error::InvalidParameter("coupling must be finite".into()));
        }
        if self.mobility != 1.0 {
            return Err(Error::InvalidParameter(format!(
                "only unit mobility is supported, got {}",
                self.mobility
            )));
        }
        if !self.binodal().is_finite() {
            return Err(Error::InvalidParameter("binodal value not finite".into()));
        }
        Ok(())
    }

    pub fn with_kappa(self, kappa: f64) -> Self {
        Params { kappa, ..self }
    }

    /// The binodal value `√(β/α)`.
    pub fn binodal(&self) -> f64 {
        (self.beta / self.alpha).sqrt()
    }

    #[inline]
    pub fn f(&self, phi: f64) -> f64 {
        let d = phi * phi - self.beta / self.alpha;
        0.25 * self.alpha * d * d
    }

    #[inline]
    pub fn df(&self, phi: f64) -> f64 {
        self.alpha * phi * phi * phi - self.beta * phi
    }

    #[inline]
    pub fn d2f(&self, phi: f64) -> f64 {
        3.0 * self.alpha * phi * phi - self.beta
    }
}
