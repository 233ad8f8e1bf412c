//! Stationary solutions of the Cahn–Hilliard equation for the quartic free
//! energy: odd periodic waves `φ̄(x; a) = a·sn(h x, k)` and the kink.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use serde::Serialize;

use crate::elliptic::{ellip_k_complement, sncndn};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::params::Params;
use crate::quadrature;

/// A periodic stationary wave with `φ̄(0) = 0`, odd in `x`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WaveProfile {
    pub amplitude: f64,
    pub period: f64,
    pub modulus: f64,
    /// Complementary modulus `√(1-k²)`, kept separately for accuracy near the kink.
    pub modulus_c: f64,
    pub scale: f64,
    alpha: f64,
    beta: f64,
    kappa: f64,
}

impl WaveProfile {
    pub fn sample(&self, x: f64) -> f64 {
        let (sn, _, _) = sncndn(self.scale * x, self.modulus, self.modulus_c);
        self.amplitude * sn
    }

    /// `(φ̄, φ̄′, φ̄″)` at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let (sn, cn, dn) = sncndn(self.scale * x, self.modulus, self.modulus_c);
        let phi = self.amplitude * sn;
        let d1 = self.amplitude * self.scale * cn * dn;
        let d2 = (self.alpha * phi * phi * phi - self.beta * phi) / self.kappa;
        (phi, d1, d2)
    }

    /// `(b, b′, b″)` for `b = F″(φ̄)`.
    pub fn potential(&self, x: f64) -> (f64, f64, f64) {
        let (phi, d1, d2) = self.eval(x);
        let b = 3.0 * self.alpha * phi * phi - self.beta;
        let b1 = 6.0 * self.alpha * phi * d1;
        let b2 = 6.0 * self.alpha * (d1 * d1 + phi * d2);
        (b, b1, b2)
    }

    pub fn sample_on(&self, grid: Arc<Grid>) -> Field {
        Field::from_fn(grid, |x| self.sample(x))
    }
}

fn check_amplitude(a: f64, params: &Params) -> Result<()> {
    let top = params.binodal();
    if !a.is_finite() || a <= 0.0 || a >= top {
        return Err(Error::out_of_range(a, format!("(0, {top})")));
    }
    Ok(())
}

/// `(k, k′, h)` for amplitude `a`, with `k² = αa²/(2β-αa²)`.
fn modulus_and_scale(a: f64, params: &Params) -> (f64, f64, f64) {
    let (al, be, ka) = (params.alpha, params.beta, params.kappa);
    let denom = 2.0 * be - al * a * a;
    let k = (al * a * a / denom).sqrt();
    let kc = (2.0 * (be - al * a * a) / denom).max(0.0).sqrt();
    let h = (denom / (2.0 * ka)).sqrt();
    (k, kc, h)
}

pub fn periodic_wave(a: f64, params: &Params) -> Result<WaveProfile> {
    check_amplitude(a, params)?;
    let (k, kc, h) = modulus_and_scale(a, params);
    Ok(WaveProfile {
        amplitude: a,
        period: 4.0 * ellip_k_complement(kc) / h,
        modulus: k,
        modulus_c: kc,
        scale: h,
        alpha: params.alpha,
        beta: params.beta,
        kappa: params.kappa,
    })
}

/// Period `p(a) = 4𝒦(k)/h(a)`.
pub fn period_of_amplitude(a: f64, params: &Params) -> Result<f64> {
    check_amplitude(a, params)?;
    Ok(period_unchecked(a, params))
}

/// Continuous extension to `[0, √(β/α)]`: `p_min` at zero, infinity at the binodal.
fn period_unchecked(a: f64, params: &Params) -> f64 {
    if a <= 0.0 {
        return min_period(params);
    }
    if a >= params.binodal() {
        return f64::INFINITY;
    }
    let (_, kc, h) = modulus_and_scale(a, params);
    4.0 * ellip_k_complement(kc) / h
}

pub fn min_period(params: &Params) -> f64 {
    2.0 * PI * (params.kappa / params.beta).sqrt()
}

/// Inverse of [`period_of_amplitude`] by bisection, to `1e-12` in amplitude.
pub fn amplitude_of_period(p: f64, params: &Params) -> Result<f64> {
    let p_min = min_period(params);
    if !p.is_finite() || p <= p_min {
        return Err(Error::out_of_range(p, format!("({p_min}, inf)")));
    }
    let mut lo = 0.0;
    let mut hi = params.binodal();
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if period_unchecked(mid, params) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The wave of period `p`. Near the kink limit the amplitude is no longer
/// resolvable in floating point (for small `κ` a period of order one needs
/// `√(β/α) - a` far below machine precision), so there the wave is located
/// through the complementary modulus `k′`, in which `a`, `h` and `F(a)` all
/// have cancellation-free closed forms.
pub fn wave_of_period(p: f64, params: &Params) -> Result<WaveProfile> {
    let a = amplitude_of_period(p, params)?;
    let top = params.binodal();
    if a < top * (1.0 - 1e-6) {
        return periodic_wave(a, params);
    }
    let (_, kc_hi, _) = modulus_and_scale(top * (1.0 - 1e-6), params);
    let period_c = |kc: f64| 4.0 * ellip_k_complement(kc) * (params.kappa * (2.0 - kc * kc) / params.beta).sqrt();
    let (mut lo, mut hi) = (1e-300f64.ln(), kc_hi.ln());
    if period_c(lo.exp()) < p {
        return Err(Error::out_of_range(p, "periods representable in floating point"));
    }
    // p(k′) decreases in k′; bisect in ln k′.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if period_c(mid.exp()) > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * lo.abs().max(1.0) {
            break;
        }
    }
    Ok(from_complement((0.5 * (lo + hi)).exp(), params))
}

fn from_complement(kc: f64, params: &Params) -> WaveProfile {
    let kc2 = kc * kc;
    let a = (2.0 * params.beta / params.alpha * (1.0 - kc2) / (2.0 - kc2)).sqrt();
    let h = (params.beta / (params.kappa * (2.0 - kc2))).sqrt();
    WaveProfile {
        amplitude: a,
        period: 4.0 * ellip_k_complement(kc) / h,
        modulus: ((1.0 - kc) * (1.0 + kc)).sqrt(),
        modulus_c: kc,
        scale: h,
        alpha: params.alpha,
        beta: params.beta,
        kappa: params.kappa,
    }
}

impl WaveProfile {
    /// `F(a)` evaluated without cancellation: `β/α - a² = (β/α) k′²/(2 - k′²)`.
    pub fn f_amplitude(&self) -> f64 {
        let kc2 = self.modulus_c * self.modulus_c;
        let d = self.beta / self.alpha * kc2 / (2.0 - kc2);
        0.25 * self.alpha * d * d
    }
}

/// `p′(a)` from the differentiated quadrature representation of the period.
pub fn period_derivative(a: f64, params: &Params) -> Result<f64> {
    check_amplitude(a, params)?;
    let al = params.alpha;
    let be = params.beta;
    let f0_minus_fa = params.f(0.0) - params.f(a);
    let c = (0.25 * al).powf(1.5) * a.sqrt();
    // Substituting y = a sin θ removes the inverse square root at y = a.
    let integrand = |theta: f64| {
        let s = theta.sin();
        let y = a * s;
        let q = 2.0 * be / al - a * a - y * y;
        let w = (a + y) * q;
        -(al * (y * y + a * y + a * a) - be) * a * (1.0 + s).sqrt() / (c * w * w.sqrt())
    };
    let (j, _) = quadrature::adaptive(&integrand, 0.0, FRAC_PI_2, 1e-13, 1e-13);
    let s2k = (2.0 * params.kappa).sqrt();
    Ok(2.0 * s2k / f0_minus_fa.sqrt() - s2k * j)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Spinodal {
    pub p_min: f64,
    pub p_s: f64,
    pub a_s: f64,
    pub lambda_top: f64,
}

pub fn spinodal(params: &Params) -> Result<Spinodal> {
    let p_min = min_period(params);
    let p_s = 2.0 * PI * (2.0 * params.kappa / params.beta).sqrt();
    Ok(Spinodal {
        p_min,
        p_s,
        a_s: amplitude_of_period(p_s, params)?,
        lambda_top: params.beta * params.beta / (4.0 * params.kappa),
    })
}

/// The monotone heteroclinic `K(x) = √(β/α) tanh(√(β/(2κ)) x)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Kink {
    pub height: f64,
    pub rate: f64,
    /// Energy of one kink on `[-L, L]`.
    pub e_min: f64,
    /// Limit of `e_min` as `L → ∞`.
    pub e_min_inf: f64,
}

impl Kink {
    pub fn sample(&self, x: f64) -> f64 {
        self.height * (self.rate * x).tanh()
    }
}

pub fn kink(params: &Params) -> Kink {
    let height = params.binodal();
    let rate = (params.beta / (2.0 * params.kappa)).sqrt();
    let kl = height * (rate * params.half_length).tanh();
    let ratio = params.beta / params.alpha;
    Kink {
        height,
        rate,
        e_min: (2.0 * params.kappa * params.alpha).sqrt() * kl * (ratio - kl * kl / 3.0),
        e_min_inf: (2.0 / 3.0) * (params.beta * params.beta / params.alpha) * (2.0 * params.kappa / params.beta).sqrt(),
    }
}
