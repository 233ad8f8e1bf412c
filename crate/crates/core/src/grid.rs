//! Uniform periodic grid on `[-L, L)` with FFT-based spectral calculus.
//!
//! Transform convention: the forward transform is the plain DFT
//! `f̂_j = Σ_i f_i e^{-2πi ij/n}`; the inverse carries the `1/n` factor.
//! Wavenumbers are `k_j = π j / L` with `j` in the symmetric index set
//! `0, 1, …, n/2, -(n/2 - 1), …, -1` (storage order of the DFT).

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Relative size of the imaginary residue tolerated by [`Grid::inverse`].
const IMAG_RESIDUE_TOL: f64 = 1e-10;

pub struct Grid {
    n: usize,
    half_length: f64,
    dx: f64,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    backward: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("half_length", &self.half_length)
            .field("dx", &self.dx)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.half_length == other.half_length
    }
}

impl Grid {
    pub fn new(n: usize, half_length: f64) -> Result<Arc<Grid>> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "point count must be a power of two >= 4, got {n}"
            )));
        }
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half length must be positive, got {half_length}"
            )));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let backward = planner.plan_fft_inverse(n);
        let base = std::f64::consts::PI / half_length;
        let wavenumbers = (0..n).map(|j| base * signed_index(j, n) as f64).collect();
        Ok(Arc::new(Grid {
            n,
            half_length,
            dx: 2.0 * half_length / n as f64,
            wavenumbers,
            forward,
            backward,
        }))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Wavenumbers in DFT storage order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Grid abscissae `x_i = -L + i dx`.
    pub fn points(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| -self.half_length + i as f64 * self.dx)
            .collect()
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(values.len(), self.n);
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        symmetrize(&mut buf);
        buf
    }

    /// Inverse transform of a conjugate-symmetric spectrum. The imaginary
    /// residue is discarded; in debug builds it is checked against the
    /// field norm.
    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        self.inverse_in_place(&mut buf);
        let scale = 1.0 / self.n as f64;
        if cfg!(debug_assertions) {
            let re: f64 = buf.iter().map(|c| c.re * c.re).sum();
            let im: f64 = buf.iter().map(|c| c.im * c.im).sum();
            debug_assert!(
                im.sqrt() <= IMAG_RESIDUE_TOL * re.sqrt().max(f64::MIN_POSITIVE) + 1e-300,
                "spectrum is not conjugate symmetric (imag residue {:e}, norm {:e})",
                im.sqrt(),
                re.sqrt()
            );
        }
        buf.iter().map(|c| c.re * scale).collect()
    }

    /// Unnormalised inverse DFT in place (no `1/n`).
    pub(crate) fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.backward.process(buf);
    }

    pub(crate) fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Spectral multiplier `(ik)^order`, with the Nyquist mode removed for
    /// odd orders so that real fields stay real.
    pub fn derivative_symbol(&self, order: u32) -> Vec<Complex64> {
        let nyquist = self.n / 2;
        self.wavenumbers
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                if order % 2 == 1 && j == nyquist {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, k).powu(order)
                }
            })
            .collect()
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other) || self == other
    }
}

/// Make a spectrum exactly conjugate symmetric. The FFT of real data is only
/// symmetric to roundoff, and high-order derivative symbols amplify the
/// difference into a visible imaginary part.
pub(crate) fn symmetrize(buf: &mut [Complex64]) {
    let n = buf.len();
    buf[0].im = 0.0;
    buf[n / 2].im = 0.0;
    for j in 1..n / 2 {
        let avg = 0.5 * (buf[j] + buf[n - j].conj());
        buf[j] = avg;
        buf[n - j] = avg.conj();
    }
}

/// Signed DFT index for storage position `j`.
pub fn signed_index(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Zero every mode with `|j| >= n/4`. This removes storage positions
/// `n/4 ..= 3n/4`, which preserves conjugate symmetry.
pub fn dealias(spectrum: &mut [Complex64]) {
    let n = spectrum.len();
    let cut = n / 4;
    for (j, c) in spectrum.iter_mut().enumerate() {
        if signed_index(j, n).unsigned_abs() as usize >= cut {
            *c = Complex64::new(0.0, 0.0);
        }
    }
}

/// True for storage positions removed by [`dealias`].
pub fn is_dealiased_mode(j: usize, n: usize) -> bool {
    signed_index(j, n).unsigned_abs() as usize >= n / 4
}

/// Real samples on a [`Grid`].
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.n() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.n(),
                values.len()
            )));
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Field {
        let n = grid.n();
        Field {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Field {
        let values = grid.points().into_iter().map(f).collect();
        Field { grid, values }
    }

    pub fn from_spectral(grid: Arc<Grid>, spectrum: &[Complex64]) -> Field {
        let values = grid.inverse(spectrum);
        Field { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn to_spectral(&self) -> Vec<Complex64> {
        self.grid.forward(&self.values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Spectral derivative of order 1 to 4.
    pub fn derivative(&self, order: u32) -> Result<Field> {
        if order == 0 || order > 4 {
            return Err(Error::InvalidParameter(format!(
                "derivative order must be in 1..=4, got {order}"
            )));
        }
        let mut spec = self.to_spectral();
        for (c, s) in spec.iter_mut().zip(self.grid.derivative_symbol(order)) {
            *c *= s;
        }
        Ok(Field::from_spectral(self.grid.clone(), &spec))
    }

    /// `dx Σ f_i g_i`.
    pub fn inner(&self, other: &Field) -> Result<f64> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(inner_slices(&self.values, &other.values, self.grid.dx()))
    }

    pub fn l2_norm(&self) -> f64 {
        inner_slices(&self.values, &self.values, self.grid.dx()).sqrt()
    }
}

pub(crate) fn inner_slices(a: &[f64], b: &[f64], dx: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * dx
}

/// Free-function form of [`Field::derivative`].
pub fn derivative(f: &Field, order: u32) -> Result<Field> {
    f.derivative(order)
}

pub fn inner(f: &Field, g: &Field) -> Result<f64> {
    f.inner(g)
}

pub fn l2_norm(f: &Field) -> f64 {
    f.l2_norm()
}
