//! Floquet analysis of the Cahn–Hilliard linearization about a periodic
//! wave: monodromy matrices, the Evans function and leading eigenvalues.
//!
//! The eigenvalue problem `λψ = -(κψ″ - bψ)″` with `b = F″(φ̄)` is written as
//! a first-order system. Integration uses the balanced coordinates
//! `zⱼ = κ^{(j-1)/2} ψ^{(j-1)}`, in which every coefficient is `O(1)`; the
//! monodromy in the original coordinates is recovered by a diagonal
//! similarity.

use std::f64::consts::PI;

use nalgebra::{Complex, Matrix4};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::Params;
use crate::waves::{min_period, period_of_amplitude, periodic_wave, WaveProfile};

pub type Complex64 = Complex<f64>;

pub const MIN_RK_STEPS: usize = 256;
const XI_GRID: usize = 128;
/// Target `step × rate` for the fixed-step integrator.
const STEP_RATE: f64 = 0.005;

#[derive(Clone, Debug)]
pub struct Monodromy {
    pub matrix: Matrix4<Complex64>,
    pub period: f64,
    pub lambda: f64,
}

impl Monodromy {
    pub fn determinant(&self) -> Complex64 {
        self.matrix.determinant()
    }

    pub fn norm(&self) -> f64 {
        self.matrix.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Coefficients of the balanced system sampled at the RK4 stage points of
/// one period: `(κb″, 2√κ b′, b)` at `x = j·h/2`.
struct Coefficients {
    steps: usize,
    step: f64,
    rate: f64,
    kappa: f64,
    samples: Vec<[f64; 3]>,
}

impl Coefficients {
    fn new(wave: &WaveProfile, params: &Params, rk_steps: usize) -> Coefficients {
        let rate = 2.0 * params.beta.sqrt().max(1.0) / params.kappa.sqrt();
        let steps = rk_steps.max(MIN_RK_STEPS).max((wave.period * rate / STEP_RATE).ceil() as usize);
        let step = wave.period / steps as f64;
        let sk = params.kappa.sqrt();
        let samples = (0..=2 * steps)
            .map(|j| {
                let (b, b1, b2) = wave.potential(0.5 * step * j as f64);
                [params.kappa * b2, 2.0 * sk * b1, b]
            })
            .collect();
        Coefficients {
            steps,
            step,
            rate,
            kappa: params.kappa,
            samples,
        }
    }

    /// Monodromy of the balanced system at real `λ`.
    fn balanced_monodromy(&self, lambda: f64) -> Result<[[f64; 4]; 4]> {
        let inv = 1.0 / self.kappa.sqrt();
        let kl = self.kappa * lambda;
        let h = self.step;
        // Columns of Φ stored as rows for cache friendliness: y[c][r].
        let mut y = [[0.0f64; 4]; 4];
        for (c, col) in y.iter_mut().enumerate() {
            col[c] = 1.0;
        }
        let deriv = |s: &[f64; 3], v: &[f64; 4]| -> [f64; 4] {
            [
                inv * v[1],
                inv * v[2],
                inv * v[3],
                inv * ((s[0] - kl) * v[0] + s[1] * v[1] + s[2] * v[2]),
            ]
        };
        for i in 0..self.steps {
            let s0 = &self.samples[2 * i];
            let s1 = &self.samples[2 * i + 1];
            let s2 = &self.samples[2 * i + 2];
            for v in y.iter_mut() {
                let k1 = deriv(s0, v);
                let t: [f64; 4] = std::array::from_fn(|r| v[r] + 0.5 * h * k1[r]);
                let k2 = deriv(s1, &t);
                let t: [f64; 4] = std::array::from_fn(|r| v[r] + 0.5 * h * k2[r]);
                let k3 = deriv(s1, &t);
                let t: [f64; 4] = std::array::from_fn(|r| v[r] + h * k3[r]);
                let k4 = deriv(s2, &t);
                for r in 0..4 {
                    v[r] += h / 6.0 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r]);
                }
            }
        }
        if y.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Integration {
                steps: self.steps,
                reason: format!("monodromy overflowed at lambda = {lambda}"),
            });
        }
        // Transpose back to row-major M[r][c].
        Ok(std::array::from_fn(|r| std::array::from_fn(|c| y[c][r])))
    }
}

/// Monodromy `Φ(p; λ)` of `Φ′ = 𝔸(x; λ)Φ`, `Φ(0) = I`, in the original
/// coordinates `(ψ, ψ′, ψ″, ψ‴)`. The step count is raised above `rk_steps`
/// when the wave's stiffness requires it.
pub fn monodromy(lambda: f64, a: f64, params: &Params, rk_steps: usize) -> Result<Monodromy> {
    if rk_steps < MIN_RK_STEPS {
        return Err(Error::InvalidParameter(format!("rk_steps must be at least {MIN_RK_STEPS}")));
    }
    if !lambda.is_finite() {
        return Err(Error::NonFinite("monodromy spectral parameter".into()));
    }
    let wave = periodic_wave(a, params)?;
    let coeffs = Coefficients::new(&wave, params, rk_steps);
    let z = coeffs.balanced_monodromy(lambda)?;
    let sk = params.kappa.sqrt();
    let scale = [1.0, sk, params.kappa, params.kappa * sk];
    let matrix = Matrix4::from_fn(|r, c| Complex64::new(z[r][c] * scale[c] / scale[r], 0.0));
    Ok(Monodromy {
        matrix,
        period: wave.period,
        lambda,
    })
}

/// `D(λ, ξ) = det(M(λ; p) - e^{iξp} I)`.
pub fn evans(m: &Monodromy, xi: f64) -> Complex64 {
    let mu = Complex64::from_polar(1.0, xi * m.period);
    (m.matrix - Matrix4::from_diagonal_element(mu)).determinant()
}

/// `D(λ, ξ)` computed from scratch with the default step count.
pub fn evans_at(lambda: f64, xi: f64, a: f64, params: &Params) -> Result<Complex64> {
    Ok(evans(&monodromy(lambda, a, params, MIN_RK_STEPS)?, xi))
}

/// Floquet data at one `λ`. Because `tr 𝔸 = 0` and the operator is
/// reversible, the multipliers come in pairs `μ, 1/μ` and the
/// characteristic polynomial is palindromic; with `w = μ + 1/μ` it reduces
/// to `w² - c₃w + (c₂ - 2) = 0`. `λ` is in the spectrum iff a root `w` is
/// real and lies in `[-2, 2]`, i.e. `μ = e^{iξp}` for real `ξ`.
#[derive(Clone, Copy, Debug)]
struct Floquet {
    /// The root closest to `[-2, 2]` when both are real.
    w: f64,
    in_spectrum: bool,
}

fn floquet(m: &[[f64; 4]; 4]) -> Floquet {
    let c3 = m[0][0] + m[1][1] + m[2][2] + m[3][3];
    let mut c2 = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            c2 += m[i][i] * m[j][j] - m[i][j] * m[j][i];
        }
    }
    let q = c2 - 2.0;
    let disc = c3 * c3 - 4.0 * q;
    let slack = 1e-12 * (c3 * c3 + q.abs() + 1.0);
    if disc < -slack {
        return Floquet {
            w: 0.5 * c3,
            in_spectrum: false,
        };
    }
    let r = disc.max(0.0).sqrt();
    let big = 0.5 * (c3 + r.copysign(c3));
    let small = if big != 0.0 { q / big } else { 0.0 };
    let w = if small.abs() <= big.abs() { small } else { big };
    let in_band = |v: f64| v.abs() <= 2.0;
    Floquet {
        w: if in_band(small) { small } else if in_band(big) { big } else { w },
        in_spectrum: in_band(small) || in_band(big),
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LeadingEigenvalue {
    pub lambda: f64,
    /// Bloch wavenumber in `[0, π/p]` at which the top of the spectrum is attained.
    pub xi: f64,
    /// `min |D(λ, ξ)| / ‖M‖` over a 128-point grid in `[0, 2π/p)`.
    pub min_evans: f64,
    pub steps: usize,
}

/// Largest real `λ ≥ 0` in the spectrum of the linearization about the
/// wave of amplitude `a`. Starts from `bracket_hint`, doubles upward until
/// `λ` leaves the spectrum and halves downward (at most 40 times) until it
/// is inside, then bisects to `1e-6` relative.
pub fn leading_eigenvalue(a: f64, params: &Params, bracket_hint: f64) -> Result<LeadingEigenvalue> {
    leading_eigenvalue_with_steps(a, params, bracket_hint, MIN_RK_STEPS)
}

pub fn leading_eigenvalue_with_steps(
    a: f64,
    params: &Params,
    bracket_hint: f64,
    rk_steps: usize,
) -> Result<LeadingEigenvalue> {
    params.validate()?;
    let wave = periodic_wave(a, params)?;
    let coeffs = Coefficients::new(&wave, params, rk_steps);
    let test = |lambda: f64| -> Result<Floquet> { Ok(floquet(&coeffs.balanced_monodromy(lambda)?)) };

    let top = params.beta * params.beta / (4.0 * params.kappa);
    let mut hi = if bracket_hint.is_finite() && bracket_hint > 0.0 { bracket_hint } else { top };
    let mut doublings = 0;
    while test(hi)?.in_spectrum {
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::Bracket(format!("spectrum unbounded above at a = {a}")));
        }
    }
    let mut lo = hi;
    let mut found = false;
    for _ in 0..40 {
        lo *= 0.5;
        if test(lo)?.in_spectrum {
            found = true;
            break;
        }
    }
    if !found {
        return Err(Error::Bracket(format!(
            "no positive spectrum found below {hi} at a = {a} after 40 halvings"
        )));
    }
    // Guard against gaps: move lo to the highest in-spectrum sample.
    const SCAN: usize = 16;
    let width = hi - lo;
    for j in (1..SCAN).rev() {
        let l = lo + width * j as f64 / SCAN as f64;
        if test(l)?.in_spectrum {
            hi = (l + width / SCAN as f64).min(hi);
            lo = l;
            break;
        }
    }
    while hi - lo > 1e-7 * hi {
        let mid = 0.5 * (lo + hi);
        if test(mid)?.in_spectrum {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let m = coeffs.balanced_monodromy(lo)?;
    let fl = floquet(&m);
    let xi = (0.5 * fl.w).clamp(-1.0, 1.0).acos() / wave.period;
    let sk = params.kappa.sqrt();
    let scale = [1.0, sk, params.kappa, params.kappa * sk];
    let mono = Monodromy {
        matrix: Matrix4::from_fn(|r, c| Complex64::new(m[r][c] * scale[c] / scale[r], 0.0)),
        period: wave.period,
        lambda: lo,
    };
    let norm = mono.norm();
    let min_evans = (0..XI_GRID)
        .map(|j| evans(&mono, 2.0 * PI * j as f64 / (XI_GRID as f64 * wave.period)).norm() / norm)
        .fold(f64::INFINITY, f64::min);
    log::debug!("a = {a}: lambda_max = {lo}, xi = {xi}, rate = {}", coeffs.rate);
    Ok(LeadingEigenvalue {
        lambda: lo,
        xi,
        min_evans,
        steps: coeffs.steps,
    })
}

/// Leading eigenvalue against amplitude, computed at `kappa_ref`.
#[derive(Clone, Debug, Serialize)]
pub struct EigTable {
    pub amplitudes: Vec<f64>,
    pub periods: Vec<f64>,
    pub lambda_max: Vec<f64>,
    pub xi: Vec<f64>,
    pub kappa_ref: f64,
    pub params: Params,
}

impl EigTable {
    /// Table on `a = Δa, 2Δa, …` below the binodal, preceded by the
    /// homogeneous anchor `(p_min, β²/(4κ))` at `a = 0`. A coarse sequential
    /// continuation pass supplies brackets for a parallel fine pass.
    pub fn build(params: &Params, da: f64) -> Result<EigTable> {
        params.validate()?;
        if !(da > 0.0 && da < params.binodal()) {
            return Err(Error::InvalidParameter(format!("amplitude step {da}")));
        }
        let top = params.binodal();
        let count = ((top / da) - 1e-9).floor() as usize;
        let amps: Vec<f64> = (1..=count).map(|i| i as f64 * da).filter(|&a| a < top).collect();
        if amps.is_empty() {
            return Err(Error::InvalidParameter("amplitude step too large".into()));
        }
        let lambda_top = params.beta * params.beta / (4.0 * params.kappa);

        let stride = 10;
        let mut coarse = Vec::new();
        let mut hint = lambda_top;
        for (i, &a) in amps.iter().enumerate().step_by(stride) {
            let r = leading_eigenvalue(a, params, hint)?;
            hint = r.lambda;
            coarse.push((i, r));
        }
        let fine: Vec<LeadingEigenvalue> = amps
            .par_iter()
            .enumerate()
            .map(|(i, &a)| {
                if i % stride == 0 {
                    return Ok(coarse[i / stride].1);
                }
                let h = coarse[i / stride].1.lambda;
                leading_eigenvalue(a, params, h)
            })
            .collect::<Result<_>>()?;

        let mut amplitudes = vec![0.0];
        let mut periods = vec![min_period(params)];
        let mut lambda_max = vec![lambda_top];
        let mut xi = vec![(params.beta / (2.0 * params.kappa)).sqrt()];
        for (&a, r) in amps.iter().zip(&fine) {
            amplitudes.push(a);
            periods.push(period_of_amplitude(a, params)?);
            lambda_max.push(r.lambda);
            xi.push(r.xi);
        }
        let rises = lambda_max.windows(2).filter(|w| w[1] > w[0] * (1.0 + 1e-6)).count();
        if rises > 0 {
            log::warn!("leading eigenvalue increases at {rises} table steps");
        }
        Ok(EigTable {
            amplitudes,
            periods,
            lambda_max,
            xi,
            kappa_ref: params.kappa,
            params: *params,
        })
    }
}

/// Rescale a table to a new `κ`: at fixed amplitude `λ ↦ (κ_ref/κ_new) λ`,
/// periods recomputed at `κ_new`.
pub fn rescale_table(t: &EigTable, kappa_new: f64) -> Result<EigTable> {
    if !(kappa_new > 0.0 && kappa_new.is_finite()) {
        return Err(Error::InvalidParameter(format!("kappa {kappa_new}")));
    }
    let params = t.params.with_kappa(kappa_new);
    let ratio = t.kappa_ref / kappa_new;
    let periods = t
        .amplitudes
        .iter()
        .map(|&a| if a == 0.0 { Ok(min_period(&params)) } else { period_of_amplitude(a, &params) })
        .collect::<Result<_>>()?;
    Ok(EigTable {
        amplitudes: t.amplitudes.clone(),
        periods,
        lambda_max: t.lambda_max.iter().map(|l| l * ratio).collect(),
        xi: t.xi.iter().map(|x| x * ratio.sqrt()).collect(),
        kappa_ref: kappa_new,
        params,
    })
}
