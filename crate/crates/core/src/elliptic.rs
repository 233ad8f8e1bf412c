//! Complete elliptic integral of the first kind and the Jacobi elliptic
//! functions, both via the arithmetic–geometric mean.
//!
//! Functions take the modulus `k` (not the parameter `m = k²`). Internal
//! variants also take the complementary modulus `k' = √(1-k²)` so callers
//! that know it in closed form avoid the cancellation in `1 - k²` as
//! `k → 1`.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

const MAX_AGM: usize = 64;

fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..MAX_AGM {
        if (a - b).abs() <= 4.0 * f64::EPSILON * a {
            break;
        }
        let next = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = next;
    }
    0.5 * (a + b)
}

/// `𝒦(k) = ∫₀¹ ds / √((1-s²)(1-k²s²))` for `0 <= k < 1`.
pub fn ellip_k(k: f64) -> Result<f64> {
    if !k.is_finite() || !(0.0..1.0).contains(&k) {
        return Err(Error::out_of_range(k, "[0, 1)"));
    }
    Ok(ellip_k_complement(complement(k)))
}

/// `𝒦` expressed through the complementary modulus, `k' ∈ (0, 1]`.
pub fn ellip_k_complement(kc: f64) -> f64 {
    FRAC_PI_2 / agm(1.0, kc)
}

/// `√(1-k²)` without forming `k²`.
pub fn complement(k: f64) -> f64 {
    ((1.0 - k) * (1.0 + k)).max(0.0).sqrt()
}

/// `sn(u, k)` for `0 <= k <= 1`.
pub fn jacobi_sn(u: f64, k: f64) -> Result<f64> {
    jacobi_sncndn(u, k).map(|(sn, _, _)| sn)
}

/// `(sn, cn, dn)` at `(u, k)`.
pub fn jacobi_sncndn(u: f64, k: f64) -> Result<(f64, f64, f64)> {
    if !u.is_finite() {
        return Err(Error::NonFinite("jacobi_sncndn argument".into()));
    }
    if !k.is_finite() || !(0.0..=1.0).contains(&k) {
        return Err(Error::out_of_range(k, "[0, 1]"));
    }
    Ok(sncndn(u, k, complement(k)))
}

/// Descending Landen / AGM evaluation of `(sn, cn, dn)` given both the
/// modulus and its complement.
pub(crate) fn sncndn(u: f64, k: f64, kc: f64) -> (f64, f64, f64) {
    if k == 0.0 {
        return (u.sin(), u.cos(), 1.0);
    }
    if kc == 0.0 {
        let s = 1.0 / u.cosh();
        return (u.tanh(), s, s);
    }

    let mut a = [0.0f64; MAX_AGM + 1];
    let mut c = [0.0f64; MAX_AGM + 1];
    a[0] = 1.0;
    c[0] = k;
    let mut b = kc;
    let mut n = 0;
    while n < MAX_AGM && c[n].abs() > f64::EPSILON * a[n] {
        a[n + 1] = 0.5 * (a[n] + b);
        c[n + 1] = 0.5 * (a[n] - b);
        b = (a[n] * b).sqrt();
        n += 1;
    }

    // Reduce modulo the real period 4𝒦 = 2π / a_N.
    let quarter = FRAC_PI_2 / a[n];
    let period = 4.0 * quarter;
    let u = u - period * (u / period).round();

    let mut phi = (1u64 << n) as f64 * a[n] * u;
    for j in (1..=n).rev() {
        phi = 0.5 * (phi + (c[j] / a[j] * phi.sin()).asin());
    }
    let sn = phi.sin();
    let cn = phi.cos();
    let dn = (kc * kc + k * k * cn * cn).sqrt();
    (sn, cn, dn)
}
