//! Free energy, the period→energy map of stationary waves, its
//! pseudoinverse as a coarseness measure, and the Kohn–Otto length.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::elliptic::{ellip_k_complement, sncndn};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::params::Params;
use crate::quadrature;
use crate::waves::{kink, min_period, spinodal, wave_of_period};

/// `Σ [F(φᵢ) + (κ/2)(φ_x)ᵢ²] Δx` with a spectral derivative.
pub fn free_energy(phi: &Field, params: &Params) -> Result<f64> {
    if !phi.is_finite() {
        return Err(Error::NonFinite("free_energy input".into()));
    }
    let dphi = phi.derivative(1)?;
    Ok(free_energy_with_gradient(phi.values(), dphi.values(), phi.grid().dx(), params))
}

pub(crate) fn free_energy_with_gradient(phi: &[f64], dphi: &[f64], dx: f64, params: &Params) -> f64 {
    phi.iter()
        .zip(dphi)
        .map(|(&p, &d)| params.f(p) + 0.5 * params.kappa * d * d)
        .sum::<f64>()
        * dx
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnergyScale {
    /// Energy of the homogeneous state, `2L F(0)`.
    pub e_max: f64,
    /// Energy of a single kink on `[-L, L]`.
    pub e_min: f64,
    /// Energy of the wave at the spinodal period.
    pub e_spinodal: f64,
}

impl EnergyScale {
    pub fn new(params: &Params) -> Result<Self> {
        let s = spinodal(params)?;
        Ok(EnergyScale {
            e_max: 2.0 * params.half_length * params.f(0.0),
            e_min: kink(params).e_min,
            e_spinodal: energy_of_period(s.p_s, params)?,
        })
    }
}

/// Energy on `[-L, L]` of the stationary wave of period `p` centred so that
/// `φ̄(0) = 0`.
pub fn energy_of_period(p: f64, params: &Params) -> Result<f64> {
    let p_min = min_period(params);
    if !p.is_finite() || p < p_min {
        return Err(Error::out_of_range(p, format!("[{p_min}, inf)")));
    }
    if p == p_min {
        return Ok(2.0 * params.half_length * params.f(0.0));
    }
    let w = wave_of_period(p, params)?;
    let a = w.amplitude;
    let fa = w.f_amplitude();
    // On a stationary wave (κ/2)φ̄′² = F(φ̄) - F(a), so the density is 2F(φ̄) - F(a).
    let g = |u: f64| {
        let (sn, _, _) = sncndn(u, w.modulus, w.modulus_c);
        2.0 * params.f(a * sn) - fa
    };
    let half = 2.0 * ellip_k_complement(w.modulus_c);
    let end = w.scale * params.half_length;
    let full = (end / half).floor();
    let rem = end - full * half;
    let panels = |len: f64| (len / 0.5).ceil().max(1.0) as usize;
    let mut total = quadrature::composite(&g, 0.0, rem, panels(rem));
    if full > 0.0 {
        total += full * quadrature::composite(&g, 0.0, half, panels(half));
    }
    Ok(2.0 * total / w.scale)
}

/// Tabulated `𝓔(p)` on `[p_min, p_cap]`.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyPeriodTable {
    pub periods: Vec<f64>,
    pub energies: Vec<f64>,
    pub scale: EnergyScale,
    pub params: Params,
    /// Running minimum of `energies`; drives the pseudoinverse lookups.
    running_min: Vec<f64>,
}

/// Result of a pseudoinverse lookup; `clamped` is set when the energy was
/// outside `(e_min, e_max]` and had to be moved to the nearest admissible value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PeriodLookup {
    pub period: f64,
    pub clamped: bool,
}

const BASE_POINTS: usize = 2000;
const CAP_TOL: f64 = 1e-4;

impl EnergyPeriodTable {
    pub fn build(params: &Params) -> Result<Self> {
        params.validate()?;
        let scale = EnergyScale::new(params)?;
        let p_min = min_period(params);
        let range = scale.e_max - scale.e_min;

        let mut p_cap = 2.0 * params.half_length;
        loop {
            let e = energy_of_period(p_cap, params)?;
            if (e - scale.e_min).abs() <= range * CAP_TOL {
                break;
            }
            p_cap *= 1.25;
            if p_cap > 1e4 * params.half_length {
                return Err(Error::Degenerate("energy never approaches the kink energy".into()));
            }
        }

        let mut periods: Vec<f64> = (0..BASE_POINTS)
            .map(|i| p_min + (p_cap - p_min) * i as f64 / (BASE_POINTS - 1) as f64)
            .collect();
        let mut energies = eval_all(&periods, params)?;

        let max_gap = range / 200.0;
        for _ in 0..40 {
            let mids: Vec<(usize, f64)> = (0..periods.len() - 1)
                .filter(|&i| (energies[i + 1] - energies[i]).abs() >= max_gap)
                .map(|i| (i, 0.5 * (periods[i] + periods[i + 1])))
                .collect();
            if mids.is_empty() {
                break;
            }
            let new_p: Vec<f64> = mids.iter().map(|m| m.1).collect();
            let new_e = eval_all(&new_p, params)?;
            let mut p2 = Vec::with_capacity(periods.len() + mids.len());
            let mut e2 = Vec::with_capacity(periods.len() + mids.len());
            let mut k = 0;
            for i in 0..periods.len() {
                p2.push(periods[i]);
                e2.push(energies[i]);
                if k < mids.len() && mids[k].0 == i {
                    p2.push(new_p[k]);
                    e2.push(new_e[k]);
                    k += 1;
                }
            }
            periods = p2;
            energies = e2;
        }

        let exceed = energies.iter().filter(|&&e| e > scale.e_max * (1.0 + 1e-12)).count();
        if exceed > 0 {
            log::warn!("{exceed} tabulated wave energies exceed the homogeneous energy");
        }
        let running_min = running_min(&energies);
        Ok(EnergyPeriodTable {
            periods,
            energies,
            scale,
            params: *params,
            running_min,
        })
    }

    pub fn p_min(&self) -> f64 {
        self.periods[0]
    }

    pub fn p_cap(&self) -> f64 {
        *self.periods.last().expect("non-empty table")
    }

    fn clamp(&self, e: f64) -> (f64, bool) {
        if e.is_nan() {
            return (self.scale.e_max, true);
        }
        if e > self.scale.e_max {
            (self.scale.e_max, true)
        } else if e <= self.scale.e_min {
            (self.running_min.last().copied().unwrap_or(self.scale.e_min), true)
        } else {
            (e, false)
        }
    }

    /// Index of the first table entry with energy `<= e`.
    fn first_below(&self, e: f64) -> usize {
        self.running_min.partition_point(|&m| m > e).min(self.periods.len() - 1)
    }

    /// `inf { p ≥ p_min : 𝓔(p) ≤ e }`, refined by bisection on the first
    /// crossing bracketed by the table.
    pub fn period_from_energy(&self, e: f64) -> Result<PeriodLookup> {
        let (e, clamped) = self.clamp(e);
        let i = self.first_below(e);
        if i == 0 {
            return Ok(PeriodLookup { period: self.p_min(), clamped });
        }
        let (mut lo, mut hi) = (self.periods[i - 1], self.periods[i]);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-12 * hi {
                break;
            }
            if energy_of_period(mid, &self.params)? <= e {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(PeriodLookup { period: hi, clamped })
    }

    /// Fast pseudoinverse by linear interpolation across the first crossing;
    /// used for time series.
    pub fn period_at(&self, e: f64) -> PeriodLookup {
        let (e, clamped) = self.clamp(e);
        let i = self.first_below(e);
        if i == 0 {
            return PeriodLookup { period: self.p_min(), clamped };
        }
        let (p0, p1) = (self.periods[i - 1], self.periods[i]);
        let (e0, e1) = (self.energies[i - 1], self.energies[i]);
        let t = if e0 > e1 { ((e0 - e) / (e0 - e1)).clamp(0.0, 1.0) } else { 1.0 };
        PeriodLookup { period: p0 + t * (p1 - p0), clamped }
    }

    /// Energy on the monotone (running-minimum) envelope at period `p`,
    /// linearly interpolated; periods beyond the table map to its last value.
    pub fn envelope_energy(&self, p: f64) -> f64 {
        if p <= self.p_min() {
            return self.running_min[0];
        }
        let j = self.periods.partition_point(|&q| q < p);
        if j >= self.periods.len() {
            return *self.running_min.last().expect("non-empty table");
        }
        let (p0, p1) = (self.periods[j - 1], self.periods[j]);
        let t = (p - p0) / (p1 - p0);
        self.running_min[j - 1] + t * (self.running_min[j] - self.running_min[j - 1])
    }
}

fn eval_all(periods: &[f64], params: &Params) -> Result<Vec<f64>> {
    periods.par_iter().map(|&p| energy_of_period(p, params)).collect()
}

fn running_min(values: &[f64]) -> Vec<f64> {
    let mut m = f64::INFINITY;
    values
        .iter()
        .map(|&v| {
            m = m.min(v);
            m
        })
        .collect()
}

/// Builds a table and evaluates the pseudoinverse once. Prefer
/// [`EnergyPeriodTable::period_from_energy`] for repeated lookups.
pub fn period_from_energy(e: f64, params: &Params) -> Result<PeriodLookup> {
    EnergyPeriodTable::build(params)?.period_from_energy(e)
}

/// `ℓ = (1/2L) min_c ∫ |Φ - c| dx` with `Φ` a periodic antiderivative of `φ`.
pub fn kohn_otto_length(phi: &Field) -> Result<f64> {
    if !phi.is_finite() {
        return Err(Error::NonFinite("kohn_otto_length input".into()));
    }
    let mean = phi.mean();
    if mean.abs() > 1e-10 * phi.max_abs().max(1.0) {
        return Err(Error::InvalidParameter(format!("field must have zero mean, got {mean:e}")));
    }
    let grid = phi.grid();
    let n = grid.n();
    let mut spec = phi.to_spectral();
    let ks = grid.wavenumbers();
    for (j, c) in spec.iter_mut().enumerate() {
        *c = if j == 0 || j == n / 2 {
            Complex64::new(0.0, 0.0)
        } else {
            *c / Complex64::new(0.0, ks[j])
        };
    }
    let mut big = grid.inverse(&spec);
    let mut sorted = big.clone();
    sorted.sort_by(f64::total_cmp);
    let median = 0.5 * (sorted[(n - 1) / 2] + sorted[n / 2]);
    for v in big.iter_mut() {
        *v = (*v - median).abs();
    }
    Ok(big.iter().sum::<f64>() / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::waves::{amplitude_of_period, periodic_wave};
    use std::f64::consts::PI;
    use std::sync::OnceLock;

    fn table() -> &'static EnergyPeriodTable {
        static T: OnceLock<EnergyPeriodTable> = OnceLock::new();
        T.get_or_init(|| EnergyPeriodTable::build(&Params::default()).unwrap())
    }

    #[test]
    fn homogeneous_and_binodal_energies() {
        let p = Params::default();
        let g = Grid::new(64, 1.0).unwrap();
        let zero = Field::zeros(g.clone());
        assert!((free_energy(&zero, &p).unwrap() - 0.5).abs() < 1e-15);
        let one = Field::from_fn(g, |_| 1.0);
        assert!(free_energy(&one, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn kink_pair_energy_matches_closed_form() {
        // A kink at 0 and an anti-kink at ±L carry 2 E_min(L/2) each side; with
        // interfaces this narrow that is 2 E_min(L) to many digits.
        let p = Params::default();
        let k = kink(&p);
        let g = Grid::new(4096, 1.0).unwrap();
        let f = Field::from_fn(g, |x| k.sample(x) * k.sample(1.0 - x.abs()) / k.height);
        let e = free_energy(&f, &p).unwrap();
        assert!((e - 2.0 * k.e_min).abs() < 1e-6, "{e}");
        assert!((k.e_min - 0.0298).abs() < 1e-4);
    }

    #[test]
    fn energy_scale_ordering() {
        let s = table().scale;
        assert!(s.e_min < s.e_spinodal && s.e_spinodal < s.e_max);
        assert_eq!(s.e_max, 0.5);
    }

    #[test]
    fn energy_of_period_endpoints() {
        let p = Params::default();
        let pm = min_period(&p);
        assert_eq!(energy_of_period(pm, &p).unwrap(), 0.5);
        assert!((energy_of_period(pm * (1.0 + 1e-9), &p).unwrap() - 0.5).abs() < 1e-6);
        assert!(energy_of_period(0.5 * pm, &p).is_err());
    }

    #[test]
    fn energy_of_period_matches_sampled_free_energy() {
        // Direct grid evaluation of the energy functional on the sampled wave.
        let p = Params::default();
        for &per in &[0.3, 0.77, 1.4, 2.6] {
            let w = periodic_wave(amplitude_of_period(per, &p).unwrap(), &p).unwrap();
            let n = 1 << 16;
            let dx = 2.0 / n as f64;
            let s: f64 = (0..n)
                .map(|i| {
                    let x = -1.0 + (i as f64 + 0.5) * dx;
                    let (phi, d1, _) = w.eval(x);
                    p.f(phi) + 0.5 * p.kappa * d1 * d1
                })
                .sum::<f64>()
                * dx;
            let e = energy_of_period(per, &p).unwrap();
            assert!((e - s).abs() < 1e-7, "p={per}: {e} vs {s}");
        }
    }

    #[test]
    fn table_is_dense_and_bounded() {
        let t = table();
        let s = t.scale;
        assert!(((t.energies[0] - s.e_max) / s.e_max).abs() < 1e-6);
        for w in t.energies.windows(2) {
            assert!((w[1] - w[0]).abs() < (s.e_max - s.e_min) / 200.0);
        }
        assert!(t.energies.iter().all(|&e| e <= s.e_max * (1.0 + 1e-12)));
        assert!((t.energies.last().unwrap() - s.e_min).abs() <= (s.e_max - s.e_min) * 1e-4);
    }

    #[test]
    fn energy_is_not_monotone() {
        let t = table();
        assert!(t.energies.windows(2).any(|w| w[1] > w[0]));
    }

    #[test]
    fn plateau_bound_holds() {
        let t = table();
        let p = &t.params;
        let bound = |per: f64| {
            let a = amplitude_of_period(per, p).unwrap();
            let d = (2.0 * p.beta / (p.alpha * a * a) - 1.0).sqrt();
            a.powi(3) * (p.alpha * p.kappa).sqrt() * (1.0 + d).powf(1.5) * d.powi(3) * (d - 1.0) / (2.0 * p.half_length)
        };
        for i in 0..t.periods.len() - 1 {
            let slope = (t.energies[i + 1] - t.energies[i]) / (t.periods[i + 1] - t.periods[i]);
            if slope > 0.0 {
                let b = bound(t.periods[i]).max(bound(t.periods[i + 1]));
                assert!(slope <= b * (1.0 + 1e-6), "p={} slope {slope} bound {b}", t.periods[i]);
            }
        }
    }

    #[test]
    fn pseudoinverse_properties() {
        let t = table();
        let s = t.scale;
        let at_max = t.period_from_energy(s.e_max).unwrap();
        assert_eq!(at_max.period, t.p_min());
        assert!(!at_max.clamped);
        let mut prev = 0.0;
        for i in 0..200 {
            let e = s.e_max - (s.e_max - s.e_min) * (i as f64 + 0.5) / 200.0;
            let q = t.period_from_energy(e).unwrap().period;
            assert!(q >= prev);
            prev = q;
            let fast = t.period_at(e).period;
            assert!((fast - q).abs() < 1e-2 * q);
        }
        assert!(t.period_from_energy(2.0 * s.e_max).unwrap().clamped);
        assert!(t.period_from_energy(0.0).unwrap().clamped);
    }

    #[test]
    fn pseudoinverse_inverts_on_decreasing_segments() {
        let t = table();
        let p = &t.params;
        for &per in &[0.25, 0.45, 0.66] {
            let e = energy_of_period(per, p).unwrap();
            let h = 1e-4;
            let decreasing = energy_of_period(per + h, p).unwrap() < e && energy_of_period(per - h, p).unwrap() > e;
            let minimal = t.periods.iter().zip(&t.energies).all(|(&q, &ee)| q >= per || ee > e);
            if decreasing && minimal {
                let back = t.period_from_energy(e).unwrap().period;
                assert!((back - per).abs() < 1e-8, "{per} -> {back}");
            }
        }
    }

    #[test]
    fn kohn_otto_of_sine_and_scaling() {
        let g = Grid::new(256, 1.0).unwrap();
        let f = Field::from_fn(g.clone(), |x| (PI * x).sin());
        let l = kohn_otto_length(&f).unwrap();
        assert!((l - 2.0 / (PI * PI)).abs() < 1e-4);
        let f3 = Field::from_fn(g.clone(), |x| 3.0 * (PI * x).sin());
        assert!((kohn_otto_length(&f3).unwrap() - 3.0 * l).abs() < 1e-12);
        assert_eq!(kohn_otto_length(&Field::zeros(g.clone())).unwrap(), 0.0);
        assert!(kohn_otto_length(&Field::from_fn(g, |x| 1.0 + x.sin())).is_err());
    }

    /// Exact optimum of the discretized linear program
    /// max Σ φᵢ ζᵢ Δx / 2L subject to |ζᵢ₊₁ - ζᵢ| ≤ Δx cyclically, ζ₀ = 0.
    /// The constraint matrix is a network matrix, so an optimal vertex lies
    /// on the lattice Δx·ℤ and dynamic programming over lattice levels is exact.
    fn lp_brute_force(phi: &[f64], dx: f64, l: f64) -> f64 {
        let n = phi.len();
        let m = n as i64 / 2 + 1;
        let width = (2 * m + 1) as usize;
        let mut best = vec![f64::NEG_INFINITY; width];
        best[m as usize] = 0.0;
        for &p in &phi[1..n] {
            let mut next = vec![f64::NEG_INFINITY; width];
            for (lvl, slot) in next.iter_mut().enumerate() {
                let prev = best[lvl.saturating_sub(1)..=(lvl + 1).min(width - 1)]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                if prev > f64::NEG_INFINITY {
                    *slot = prev + p * (lvl as i64 - m) as f64 * dx;
                }
            }
            best = next;
        }
        let closing = best[m as usize - 1].max(best[m as usize]).max(best[m as usize + 1]);
        closing * dx / (2.0 * l)
    }

    #[test]
    fn kohn_otto_matches_lp_oracle() {
        let g = Grid::new(64, 1.0).unwrap();
        let f = Field::from_fn(g.clone(), |x| (PI * x).sin());
        let lp = lp_brute_force(f.values(), g.dx(), 1.0);
        assert!((kohn_otto_length(&f).unwrap() - lp).abs() < 1e-3, "{lp}");
        let f = Field::from_fn(g.clone(), |x| (PI * x).sin() + 0.5 * (3.0 * PI * x).cos());
        let lp = lp_brute_force(f.values(), g.dx(), 1.0);
        assert!((kohn_otto_length(&f).unwrap() - lp).abs() < 1e-3, "{lp}");
    }
}
