//! Initial data: dealiased phase noise relaxed onto a fixed energy level,
//! and the two velocity profiles.
//!
//! Every initializer is a pure function of its recipe and grid. The
//! generator is ChaCha8 seeded from the recipe seed; phase noise and
//! velocity coefficients draw from separate streams so that changing the
//! velocity recipe never perturbs the phase field.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::energy::free_energy;
use crate::error::{Error, Result};
use crate::grid::{dealias, Field, Grid};
use crate::params::Params;
use crate::solver::{CouplingMode, State, Stepper};

const PHASE_STREAM: u64 = 0;
const VELOCITY_STREAM: u64 = 1;

/// Smallest step the pre-evolution will halve down to.
const MIN_PRE_DT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitRecipe {
    pub seed: u64,
    /// Standard deviation of the pointwise phase noise.
    pub sigma: f64,
    /// Target energy as a fraction of the homogeneous energy.
    pub energy_target_frac: f64,
    pub energy_tol: f64,
    /// Largest `|k|` carrying a random velocity coefficient.
    pub fourier_cutoff: usize,
    /// First step size tried during pre-evolution.
    pub pre_dt: f64,
    /// Stabilizer used for the pre-evolution steps; `None` means `2β`.
    pub stabilizer: Option<f64>,
}

impl Default for InitRecipe {
    fn default() -> Self {
        InitRecipe {
            seed: 0,
            sigma: 0.1,
            energy_target_frac: 0.99,
            energy_tol: 1e-4,
            fourier_cutoff: 32,
            pre_dt: 1e-3,
            stabilizer: None,
        }
    }
}

impl InitRecipe {
    pub fn with_seed(self, seed: u64) -> Self {
        InitRecipe { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.energy_target_frac > 0.0 && self.energy_target_frac < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "energy target fraction must lie in (0, 1), got {}",
                self.energy_target_frac
            )));
        }
        if !(self.energy_tol.is_finite() && self.energy_tol > 0.0) {
            return Err(Error::InvalidParameter("energy tolerance must be positive".into()));
        }
        if !(self.pre_dt.is_finite() && self.pre_dt > 0.0) {
            return Err(Error::InvalidParameter("pre-evolution step must be positive".into()));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// I.i.d. `N(0, σ)` samples with every mode `|j| ≥ n/4` removed.
pub fn random_phase_init(recipe: &InitRecipe, grid: &Arc<Grid>) -> Field {
    let normal = Normal::new(0.0, recipe.sigma).expect("sigma validated positive");
    let mut rng = recipe.rng(PHASE_STREAM);
    let samples: Vec<f64> = (0..grid.n()).map(|_| normal.sample(&mut rng)).collect();
    let mut spec = grid.forward(&samples);
    dealias(&mut spec);
    Field::from_spectral(grid.clone(), &spec)
}

#[derive(Clone, Debug)]
pub struct PreEvolved {
    pub phi: Field,
    pub energy: f64,
    pub time: f64,
    pub accepted: usize,
    pub rejected: usize,
}

/// Relaxes `phi` under the uncoupled equation until its energy is within
/// `energy_tol` of `energy_target_frac · E_max`. A step that lands below
/// the band is discarded and retried at half the step size, and the
/// halved size is kept for the steps that follow.
pub fn pre_evolve_to_energy(phi: &Field, recipe: &InitRecipe, params: &Params) -> Result<PreEvolved> {
    recipe.validate()?;
    params.validate()?;
    let e_max = 2.0 * params.half_length * params.f(0.0);
    let target = recipe.energy_target_frac * e_max;
    let tol = recipe.energy_tol;

    let e0 = free_energy(phi, params)?;
    if (e0 - target).abs() <= tol || e0 < target {
        if e0 < target - tol {
            log::warn!("initial energy {e0} already below the pre-evolution target {target}");
        }
        return Ok(PreEvolved { phi: phi.clone(), energy: e0, time: 0.0, accepted: 0, rejected: 0 });
    }

    let state = State::new(phi.clone(), None, *params, CouplingMode::Uncoupled)?;
    let stabilizer = recipe.stabilizer.unwrap_or(2.0 * params.beta);
    let mut stepper = Stepper::new(&state, stabilizer)?;
    let mut dt = recipe.pre_dt;
    let mut accepted = 0;
    let mut rejected = 0;
    let mut best = e0;
    loop {
        let mut trial = stepper.clone();
        trial.step(dt)?;
        let e = trial.diagnostics().free_energy;
        if (e - target).abs() < (best - target).abs() {
            best = e;
        }
        if e < target - tol {
            rejected += 1;
            dt *= 0.5;
            if dt < MIN_PRE_DT {
                return Err(Error::Integration {
                    steps: accepted + rejected,
                    reason: format!(
                        "pre-evolution step underflow; closest energy {best} for target {target} ± {tol}"
                    ),
                });
            }
            continue;
        }
        stepper = trial;
        accepted += 1;
        if (e - target).abs() <= tol {
            let st = stepper.state();
            return Ok(PreEvolved { phi: st.phi, energy: e, time: st.t, accepted, rejected });
        }
    }
}

/// `C = (√(2−√3)·exp(1/(1−√3)))⁻¹`, normalising the bump to unit sup norm.
pub fn bump_constant() -> f64 {
    let s3 = 3f64.sqrt();
    1.0 / ((2.0 - s3).sqrt() * (1.0 / (1.0 - s3)).exp())
}

/// `v₀(x) = (C/L)·x·exp(1/((x/L)² − 1))` on `(−L, L)`, zero at `x = −L`.
pub fn bump_velocity(grid: &Arc<Grid>) -> Field {
    let l = grid.half_length();
    let c = bump_constant();
    Field::from_fn(grid.clone(), |x| {
        let s = x / l;
        if s.abs() >= 1.0 {
            0.0
        } else {
            c / l * x * (1.0 / (s * s - 1.0)).exp()
        }
    })
}

/// Real field from coefficients `c_k ~ N(0,1) + iN(0,1)` on
/// `1 ≤ |k| ≤ cutoff`, `c₋ₖ = conj(cₖ)`, through the `1/n` inverse DFT.
pub fn random_fourier_velocity(recipe: &InitRecipe, grid: &Arc<Grid>) -> Result<Field> {
    let n = grid.n();
    if recipe.fourier_cutoff >= n / 4 {
        return Err(Error::InvalidParameter(format!(
            "fourier cutoff {} must be below n/4 = {}",
            recipe.fourier_cutoff,
            n / 4
        )));
    }
    let mut rng = recipe.rng(VELOCITY_STREAM);
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    for k in 1..=recipe.fourier_cutoff {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        spec[k] = Complex64::new(re, im);
        spec[n - k] = Complex64::new(re, -im);
    }
    Ok(Field::from_spectral(grid.clone(), &spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::is_dealiased_mode;

    #[test]
    fn phase_noise_is_dealiased_and_deterministic() {
        let g = Grid::new(512, 1.0).unwrap();
        let r = InitRecipe::default().with_seed(7);
        let a = random_phase_init(&r, &g);
        let b = random_phase_init(&r, &g);
        assert_eq!(a.values(), b.values());
        let spec = a.to_spectral();
        let top = spec.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for (j, c) in spec.iter().enumerate() {
            if is_dealiased_mode(j, 512) {
                assert!(c.norm() < 1e-13 * top, "mode {j}: {}", c.norm());
            }
        }
        let other = random_phase_init(&r.with_seed(8), &g);
        assert_ne!(a.values(), other.values());
    }

    #[test]
    fn phase_noise_mean_within_clt_bound() {
        let g = Grid::new(8192, 1.0).unwrap();
        for seed in 0..5 {
            let r = InitRecipe::default().with_seed(seed);
            let f = random_phase_init(&r, &g);
            assert!(f.mean().abs() < 5.0 * r.sigma / (8192f64).sqrt());
        }
    }

    #[test]
    fn bump_constant_and_maximum() {
        assert!((bump_constant() - 7.5724).abs() < 5e-5);
        let g = Grid::new(8192, 1.0).unwrap();
        let v = bump_velocity(&g);
        assert_eq!(v.values()[0], 0.0);
        let (imax, vmax) = v
            .values()
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |m, (i, &x)| if x > m.1 { (i, x) } else { m });
        assert!((vmax - 1.0).abs() < 1e-6, "{vmax}");
        let xmax = g.points()[imax];
        let expect = 0.5 * (6f64.sqrt() - 2f64.sqrt());
        assert!((xmax - expect).abs() <= g.dx());
        // Odd about the origin.
        let vals = v.values();
        for i in 1..4096 {
            assert!((vals[4096 + i] + vals[4096 - i]).abs() < 1e-14);
        }
    }

    #[test]
    fn fourier_velocity_is_real_band_limited_and_mean_free() {
        let g = Grid::new(1024, 1.0).unwrap();
        let r = InitRecipe::default().with_seed(3);
        let v = random_fourier_velocity(&r, &g).unwrap();
        let spec = v.to_spectral();
        assert!(spec[0].norm() < 1e-12);
        for (j, c) in spec.iter().enumerate() {
            let k = crate::grid::signed_index(j, 1024).unsigned_abs() as usize;
            if k > 32 {
                assert!(c.norm() < 1e-12);
            } else if k >= 1 {
                assert!(c.norm() > 0.0);
            }
        }
        // Same spectrum, complex inverse: imaginary part vanishes.
        let mut buf = spec.clone();
        g.inverse_in_place(&mut buf);
        assert!(buf.iter().all(|c| c.im.abs() / 1024.0 < 1e-12));
        assert!(random_fourier_velocity(&InitRecipe { fourier_cutoff: 256, ..r }, &g).is_err());
    }

    #[test]
    fn pre_evolution_hits_band_and_is_idempotent() {
        let p = Params::default();
        let g = Grid::new(512, 1.0).unwrap();
        let r = InitRecipe::default().with_seed(1);
        let phi = random_phase_init(&r, &g);
        let out = pre_evolve_to_energy(&phi, &r, &p).unwrap();
        assert!((out.energy - 0.99 * 0.5).abs() <= 1e-4, "{}", out.energy);
        assert!(out.accepted > 0);
        let again = pre_evolve_to_energy(&out.phi, &r, &p).unwrap();
        assert_eq!(again.phi.values(), out.phi.values());
        assert_eq!(again.accepted, 0);
    }
}
