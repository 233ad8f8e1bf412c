//! Pseudo-spectral semi-implicit time stepping for the uncoupled
//! Cahn–Hilliard equation and the Burgers–Cahn–Hilliard system.
//!
//! The phase update is the linearly stabilised splitting
//!
//! ```text
//! (1 + Δt κk⁴ + Δt A k²) φ̂ⁿ⁺¹ = φ̂ⁿ − Δt k² [αφ³ − (β + A)φ]ˆ − Δt (adv)ˆ
//! ```
//!
//! and the velocity update is implicit in viscosity only,
//! `(1 + Δt νk²) v̂ⁿ⁺¹ = v̂ⁿ + Δt [−v v_x + coupling]ˆ`.
//!
//! Products are formed by collocation and every product spectrum has its
//! upper half (`|j| ≥ n/4`) removed. The fields themselves are not
//! projected: content above the cut-off in the initial data is only damped
//! by the implicit operators, which is what the resolution check watches.
//! The state is held in spectral form between steps so that transforms do
//! not feed roundoff back into the upper modes.

use std::str::FromStr;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{PhiInit, SimConfig, VelocityInit};
use crate::energy::{free_energy, EnergyPeriodTable};
use crate::error::{Error, Result};
use crate::grid::{dealias, is_dealiased_mode, symmetrize, Field, Grid};
use crate::init::{bump_velocity, pre_evolve_to_energy, random_fourier_velocity, random_phase_init};
use crate::io::{fmt_float, Table};
use crate::params::Params;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingMode {
    Uncoupled,
    /// `φ_t + vφ_x = μ_xx`, `v_t + vv_x = νv_xx + Kμφ_x`.
    Advective,
    /// `φ_t + (vφ)_x = μ_xx`, `v_t + vv_x = νv_xx + Kμφ_x`.
    Div1,
    /// `φ_t + (vφ)_x = μ_xx`, `v_t + vv_x = νv_xx − Kμ_xφ`.
    Div2,
}

impl CouplingMode {
    pub fn is_coupled(self) -> bool {
        self != CouplingMode::Uncoupled
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CouplingMode::Uncoupled => "uncoupled",
            CouplingMode::Advective => "advective",
            CouplingMode::Div1 => "div1",
            CouplingMode::Div2 => "div2",
        }
    }
}

impl FromStr for CouplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uncoupled" | "none" => Ok(CouplingMode::Uncoupled),
            "advective" => Ok(CouplingMode::Advective),
            "div1" | "div_form_1" => Ok(CouplingMode::Div1),
            "div2" | "div_form_2" => Ok(CouplingMode::Div2),
            other => Err(Error::Config(format!("unknown coupling mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for CouplingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug)]
pub struct State {
    pub t: f64,
    pub phi: Field,
    /// Present exactly when the mode is coupled.
    pub v: Option<Field>,
    pub params: Params,
    pub mode: CouplingMode,
}

impl State {
    pub fn new(phi: Field, v: Option<Field>, params: Params, mode: CouplingMode) -> Result<State> {
        params.validate()?;
        match (&v, mode.is_coupled()) {
            (Some(v), true) => {
                if !v.grid().same_as(phi.grid()) {
                    return Err(Error::GridMismatch);
                }
            }
            (None, false) => {}
            (Some(_), false) => {
                return Err(Error::InvalidParameter("uncoupled state must not carry a velocity".into()))
            }
            (None, true) => {
                return Err(Error::InvalidParameter(format!("{mode} mode needs a velocity field")))
            }
        }
        if !phi.is_finite() || v.as_ref().is_some_and(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial state".into()));
        }
        Ok(State { t: 0.0, phi, v, params, mode })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.phi.grid()
    }
}

/// Integral quantities of the current state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub free_energy: f64,
    /// `½|v|²`.
    pub kinetic_energy: f64,
    /// `|φ_x|`.
    pub h1_phi: f64,
    /// `|v_x|`.
    pub h1_v: f64,
    /// `½|v|² + K E` when coupled, `E` otherwise.
    pub lyapunov: f64,
    /// `ν|v_x|² + K|μ_x|²` when coupled, `|μ_x|²` otherwise.
    pub dissipation: f64,
    /// `−K⟨μφ, v_x⟩`, the right-hand side of the balance for `div1`; zero
    /// for the other modes.
    pub balance_source: f64,
    /// `∫φ dx`.
    pub mass: f64,
    pub max_speed: f64,
}

/// Time stepper holding the state in spectral form together with the
/// explicit terms evaluated at the current time.
#[derive(Clone)]
pub struct Stepper {
    grid: Arc<Grid>,
    params: Params,
    mode: CouplingMode,
    stabilizer: f64,
    t: f64,
    steps: usize,

    ik: Vec<Complex64>,
    k2: Vec<f64>,

    phi_hat: Vec<Complex64>,
    v_hat: Vec<Complex64>,

    phi: Vec<f64>,
    phi_x: Vec<f64>,
    v: Vec<f64>,
    cubic_hat: Vec<Complex64>,
    adv_hat: Vec<Complex64>,
    mom_hat: Vec<Complex64>,
    force_hat: Vec<Complex64>,

    buf: Vec<Complex64>,
    ra: Vec<f64>,
    rb: Vec<f64>,
    rd: Vec<f64>,
    diag: Diagnostics,
}

impl Stepper {
    /// `stabilizer` is the constant `A` of the splitting.
    pub fn new(state: &State, stabilizer: f64) -> Result<Stepper> {
        if !(stabilizer.is_finite() && stabilizer >= 0.0) {
            return Err(Error::InvalidParameter(format!("stabilizer must be non-negative, got {stabilizer}")));
        }
        let grid = state.grid().clone();
        let n = grid.n();
        let ik = grid.derivative_symbol(1);
        let k2 = grid.wavenumbers().iter().map(|k| k * k).collect();
        let zero = Complex64::new(0.0, 0.0);
        let v_hat = match &state.v {
            Some(v) => v.to_spectral(),
            None => vec![zero; n],
        };
        let mut s = Stepper {
            params: state.params,
            mode: state.mode,
            stabilizer,
            t: state.t,
            steps: 0,
            ik,
            k2,
            phi_hat: state.phi.to_spectral(),
            v_hat,
            phi: vec![0.0; n],
            phi_x: vec![0.0; n],
            v: vec![0.0; n],
            cubic_hat: vec![zero; n],
            adv_hat: vec![zero; n],
            mom_hat: vec![zero; n],
            force_hat: vec![zero; n],
            buf: vec![zero; n],
            ra: vec![0.0; n],
            rb: vec![0.0; n],
            rd: vec![0.0; n],
            diag: Diagnostics::default(),
            grid,
        };
        s.evaluate();
        if !s.diag.free_energy.is_finite() {
            return Err(Error::NonFinite("initial state".into()));
        }
        Ok(s)
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn mode(&self) -> CouplingMode {
        self.mode
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.diag
    }

    /// Largest step allowed by `Δt ≤ Δx / max(|v|, 1)`; unbounded when
    /// uncoupled.
    pub fn cfl_limit(&self) -> f64 {
        if self.mode.is_coupled() {
            self.grid.dx() / self.diag.max_speed.max(1.0)
        } else {
            f64::INFINITY
        }
    }

    pub fn state(&self) -> State {
        let phi = Field::new(self.grid.clone(), self.grid.inverse(&self.phi_hat)).expect("grid length");
        let v = self
            .mode
            .is_coupled()
            .then(|| Field::new(self.grid.clone(), self.grid.inverse(&self.v_hat)).expect("grid length"));
        State { t: self.t, phi, v, params: self.params, mode: self.mode }
    }

    pub fn phi_spectrum(&self) -> &[Complex64] {
        &self.phi_hat
    }

    pub fn v_spectrum(&self) -> Option<&[Complex64]> {
        self.mode.is_coupled().then_some(&self.v_hat[..])
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        let limit = self.cfl_limit();
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, limit });
        }
        let Params { kappa, beta, nu, .. } = self.params;
        let a = self.stabilizer;
        let coupled = self.mode.is_coupled();
        for j in 0..self.grid.n() {
            let k2 = self.k2[j];
            let explicit = self.cubic_hat[j] - (beta + a) * self.phi_hat[j];
            let mut rhs = self.phi_hat[j] - dt * k2 * explicit;
            if coupled {
                rhs -= dt * self.adv_hat[j];
            }
            self.phi_hat[j] = rhs / (1.0 + dt * kappa * k2 * k2 + dt * a * k2);
            if coupled {
                self.v_hat[j] = (self.v_hat[j] + dt * self.mom_hat[j]) / (1.0 + dt * nu * k2);
            }
        }
        self.t += dt;
        self.steps += 1;
        self.evaluate();
        if !(self.diag.lyapunov.is_finite() && self.diag.dissipation.is_finite()) {
            return Err(Error::NonFinite(format!(
                "state at t = {} after {} steps (dt = {dt:e}, last energy {:e}, max |v| {:e})",
                self.t, self.steps, self.diag.free_energy, self.diag.max_speed
            )));
        }
        Ok(())
    }

    /// Recomputes physical fields, explicit terms and diagnostics from the
    /// spectral state.
    fn evaluate(&mut self) {
        let n = self.grid.n();
        let dx = self.grid.dx();
        let inv_n = 1.0 / n as f64;
        let Params { alpha, beta, kappa, nu, coupling, .. } = self.params;

        // φ and φ_x in one complex transform.
        for j in 0..n {
            self.buf[j] = self.phi_hat[j] + Complex64::i() * (self.ik[j] * self.phi_hat[j]);
        }
        self.grid.inverse_in_place(&mut self.buf);
        for i in 0..n {
            self.phi[i] = self.buf[i].re * inv_n;
            self.phi_x[i] = self.buf[i].im * inv_n;
        }

        for i in 0..n {
            let p = self.phi[i];
            self.ra[i] = alpha * p * p * p;
        }

        let mut energy = 0.0;
        let mut grad2 = 0.0;
        for i in 0..n {
            energy += self.params.f(self.phi[i]);
            grad2 += self.phi_x[i] * self.phi_x[i];
        }
        let mass = self.phi.iter().sum::<f64>() * dx;
        let free_energy = (energy + 0.5 * kappa * grad2) * dx;
        let h1_phi = (grad2 * dx).sqrt();

        if !self.mode.is_coupled() {
            forward_real(&self.grid, &self.ra, &mut self.cubic_hat);
            dealias(&mut self.cubic_hat);
            let mu_x2 = self.mu_x_norm2(kappa, beta);
            self.diag = Diagnostics {
                free_energy,
                kinetic_energy: 0.0,
                h1_phi,
                h1_v: 0.0,
                lyapunov: free_energy,
                dissipation: mu_x2,
                balance_source: 0.0,
                mass,
                max_speed: 0.0,
            };
            return;
        }

        // v and v_x.
        for j in 0..n {
            self.buf[j] = self.v_hat[j] + Complex64::i() * (self.ik[j] * self.v_hat[j]);
        }
        self.grid.inverse_in_place(&mut self.buf);
        let mut v2 = 0.0;
        let mut vx2 = 0.0;
        let mut max_speed: f64 = 0.0;
        for i in 0..n {
            let v = self.buf[i].re * inv_n;
            let vx = self.buf[i].im * inv_n;
            self.v[i] = v;
            self.rd[i] = vx;
            v2 += v * v;
            vx2 += vx * vx;
            max_speed = max_speed.max(v.abs());
        }

        // Cubic and transport products share a transform.
        let divergence = matches!(self.mode, CouplingMode::Div1 | CouplingMode::Div2);
        for i in 0..n {
            self.rb[i] = if divergence { self.v[i] * self.phi[i] } else { self.v[i] * self.phi_x[i] };
        }
        forward_pair(&self.grid, &self.ra, &self.rb, &mut self.cubic_hat, &mut self.adv_hat, &mut self.buf);
        dealias(&mut self.cubic_hat);
        dealias(&mut self.adv_hat);
        if divergence {
            for j in 0..n {
                self.adv_hat[j] *= self.ik[j];
            }
        }

        // μ and μ_x.
        let mu_x2 = self.mu_x_norm2(kappa, beta);
        for j in 0..n {
            let mu = self.mu_hat(j, kappa, beta);
            self.buf[j] = mu + Complex64::i() * (self.ik[j] * mu);
        }
        self.grid.inverse_in_place(&mut self.buf);
        let mut source = 0.0;
        for i in 0..n {
            let mu = self.buf[i].re * inv_n;
            let mu_x = self.buf[i].im * inv_n;
            // Burgers term and coupling force.
            self.ra[i] = self.v[i] * self.rd[i];
            self.rb[i] = match self.mode {
                CouplingMode::Div2 => -coupling * mu_x * self.phi[i],
                _ => coupling * mu * self.phi_x[i],
            };
            if self.mode == CouplingMode::Div1 {
                source += mu * self.phi[i] * self.rd[i];
            }
        }
        forward_pair(&self.grid, &self.ra, &self.rb, &mut self.mom_hat, &mut self.force_hat, &mut self.buf);
        for j in 0..n {
            self.mom_hat[j] = self.force_hat[j] - self.mom_hat[j];
        }
        dealias(&mut self.mom_hat);

        let kinetic = 0.5 * v2 * dx;
        let h1_v2 = vx2 * dx;
        self.diag = Diagnostics {
            free_energy,
            kinetic_energy: kinetic,
            h1_phi,
            h1_v: h1_v2.sqrt(),
            lyapunov: kinetic + coupling * free_energy,
            dissipation: nu * h1_v2 + coupling * mu_x2,
            balance_source: -coupling * source * dx,
            mass,
            max_speed,
        };
    }

    #[inline]
    fn mu_hat(&self, j: usize, kappa: f64, beta: f64) -> Complex64 {
        kappa * self.k2[j] * self.phi_hat[j] + self.cubic_hat[j] - beta * self.phi_hat[j]
    }

    /// `|μ_x|²` by Parseval.
    fn mu_x_norm2(&self, kappa: f64, beta: f64) -> f64 {
        let n = self.grid.n() as f64;
        let s: f64 = (0..self.grid.n()).map(|j| self.k2[j] * self.mu_hat(j, kappa, beta).norm_sqr()).sum();
        s * self.grid.dx() / n
    }
}

/// Forward transform of one real signal into `out` (conjugate symmetric).
fn forward_real(grid: &Grid, a: &[f64], out: &mut [Complex64]) {
    for (o, &x) in out.iter_mut().zip(a) {
        *o = Complex64::new(x, 0.0);
    }
    grid.forward_in_place(out);
    symmetrize(out);
}

/// Forward transforms of two real signals with one complex FFT.
fn forward_pair(grid: &Grid, a: &[f64], b: &[f64], out_a: &mut [Complex64], out_b: &mut [Complex64], buf: &mut [Complex64]) {
    let n = grid.n();
    for i in 0..n {
        buf[i] = Complex64::new(a[i], b[i]);
    }
    grid.forward_in_place(buf);
    for j in 0..n {
        let zj = buf[j];
        let zm = buf[(n - j) % n].conj();
        out_a[j] = 0.5 * (zj + zm);
        out_b[j] = Complex64::new(0.0, -0.5) * (zj - zm);
    }
}

/// One step from an explicit state. Prefer [`Stepper`] for repeated steps.
pub fn step(state: &State, dt: f64, stabilizer: f64) -> Result<State> {
    let mut s = Stepper::new(state, stabilizer)?;
    s.step(dt)?;
    Ok(s.state())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Resolution {
    pub resolved: bool,
    /// Largest upper-half coefficient magnitude relative to the largest
    /// coefficient, over φ and v.
    pub max_tail: f64,
}

/// Machine epsilon of `f64`, the threshold of the resolution criterion.
pub const RESOLUTION_THRESHOLD: f64 = f64::EPSILON;

fn spectral_tail(spec: &[Complex64]) -> f64 {
    let n = spec.len();
    let top = spec.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if top == 0.0 {
        return 0.0;
    }
    spec.iter()
        .enumerate()
        .filter(|(j, _)| is_dealiased_mode(*j, n))
        .map(|(_, c)| c.norm())
        .fold(0.0, f64::max)
        / top
}

/// Checks that every upper-half spectral coefficient of φ and v lies below
/// machine precision relative to the largest coefficient of that field.
pub fn resolution_check(state: &State) -> Resolution {
    let mut tail = spectral_tail(&state.phi.to_spectral());
    if let Some(v) = &state.v {
        tail = tail.max(spectral_tail(&v.to_spectral()));
    }
    Resolution { resolved: tail < RESOLUTION_THRESHOLD, max_tail: tail }
}

/// Same check on a stepper's spectral state, without a round trip
/// through physical space.
pub fn resolution_of(stepper: &Stepper) -> Resolution {
    let mut tail = spectral_tail(stepper.phi_spectrum());
    if let Some(v) = stepper.v_spectrum() {
        tail = tail.max(spectral_tail(v));
    }
    Resolution { resolved: tail < RESOLUTION_THRESHOLD, max_tail: tail }
}

/// Recorded diagnostics, one row per recording step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub free_energy: Vec<f64>,
    pub kinetic_energy: Vec<f64>,
    pub h1_phi: Vec<f64>,
    pub h1_v: Vec<f64>,
    pub period: Vec<f64>,
    /// `Δ(Lyapunov)/Δt + ⟨dissipation⟩` over the interval ending at this
    /// row; NaN on the first row.
    pub balance_residual: Vec<f64>,
}

impl TimeSeries {
    pub const HEADER: [&'static str; 7] =
        ["t", "free_energy", "kinetic_energy", "h1_phi", "h1_v", "period", "balance_residual"];

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn to_table(&self) -> Table {
        Table::new(
            &Self::HEADER,
            vec![
                self.t.clone(),
                self.free_energy.clone(),
                self.kinetic_energy.clone(),
                self.h1_phi.clone(),
                self.h1_v.clone(),
                self.period.clone(),
                self.balance_residual.clone(),
            ],
        )
        .expect("series columns have equal length")
    }

    pub fn from_table(table: &Table) -> Result<TimeSeries> {
        let col = |name| table.require(name).map(<[f64]>::to_vec);
        let s = TimeSeries {
            t: col("t")?,
            free_energy: col("free_energy")?,
            kinetic_energy: col("kinetic_energy")?,
            h1_phi: col("h1_phi")?,
            h1_v: col("h1_v")?,
            period: col("period")?,
            balance_residual: col("balance_residual")?,
        };
        if s.t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("series times must increase strictly".into()));
        }
        Ok(s)
    }

    fn push(&mut self, t: f64, d: &Diagnostics, period: f64, residual: f64) {
        self.t.push(t);
        self.free_energy.push(d.free_energy);
        self.kinetic_energy.push(d.kinetic_energy);
        self.h1_phi.push(d.h1_phi);
        self.h1_v.push(d.h1_v);
        self.period.push(period);
        self.balance_residual.push(residual);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub x: Vec<f64>,
    pub phi: Vec<f64>,
    /// Zeros for uncoupled runs.
    pub v: Vec<f64>,
}

impl Snapshot {
    pub fn of(state: &State) -> Snapshot {
        let n = state.grid().n();
        Snapshot {
            t: state.t,
            x: state.grid().points(),
            phi: state.phi.values().to_vec(),
            v: state.v.as_ref().map_or(vec![0.0; n], |v| v.values().to_vec()),
        }
    }

    pub fn file_name(&self) -> String {
        format!("snap_{}.csv", fmt_float(self.t))
    }

    pub fn to_table(&self) -> Table {
        Table::new(&["x", "phi", "v"], vec![self.x.clone(), self.phi.clone(), self.v.clone()])
            .expect("snapshot columns have equal length")
    }
}

/// Bookkeeping from the initial-data stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct InitSummary {
    pub energy: f64,
    pub pre_evolve_time: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub series: TimeSeries,
    pub snapshots: Vec<Snapshot>,
    pub final_state: State,
    pub init: InitSummary,
    /// Worst relative upper-half coefficient over recorded steps after the
    /// burn-in time.
    pub max_tail_after_burn_in: f64,
    /// Worst per-step increase of the Lyapunov functional.
    pub max_lyapunov_increase: f64,
    pub steps: usize,
}

impl RunOutput {
    pub fn resolved(&self) -> bool {
        self.max_tail_after_burn_in < RESOLUTION_THRESHOLD
    }
}

/// Time after which the resolution criterion is expected to hold.
pub const BURN_IN: f64 = 1e-3;

/// Builds the initial state of a configuration: phase from noise (relaxed
/// onto the 0.99·E_max level) or from file, velocity per `init_v`.
pub fn initial_state(config: &SimConfig) -> Result<(State, InitSummary)> {
    config.validate()?;
    let grid = Grid::new(config.grid_size(), config.params.half_length)?;
    let recipe = config.recipe();
    let file = match &config.init_file {
        Some(path) if config.init_phi == PhiInit::File || config.init_v == VelocityInit::File => {
            let t = Table::load(path)?;
            if t.rows() != grid.n() {
                return Err(Error::Config(format!(
                    "{} has {} rows but n = {}",
                    path.display(),
                    t.rows(),
                    grid.n()
                )));
            }
            Some(t)
        }
        _ => None,
    };

    let mut summary = InitSummary::default();
    let phi = match config.init_phi {
        PhiInit::Random => {
            let noise = random_phase_init(&recipe, &grid);
            if config.pre_evolve {
                let out = pre_evolve_to_energy(&noise, &recipe, &config.params)?;
                summary.pre_evolve_time = out.time;
                summary.accepted_steps = out.accepted;
                summary.rejected_steps = out.rejected;
                out.phi
            } else {
                noise
            }
        }
        PhiInit::File => {
            let t = file.as_ref().expect("file loaded above");
            Field::new(grid.clone(), t.require("phi")?.to_vec())?
        }
    };
    summary.energy = free_energy(&phi, &config.params)?;

    let v = if config.coupling.is_coupled() {
        Some(match config.init_v {
            VelocityInit::None => Field::zeros(grid.clone()),
            VelocityInit::Bump => bump_velocity(&grid),
            VelocityInit::Fourier => random_fourier_velocity(&recipe, &grid)?,
            VelocityInit::File => {
                let t = file.as_ref().expect("file loaded above");
                Field::new(grid.clone(), t.require("v")?.to_vec())?
            }
        })
    } else {
        None
    };
    Ok((State::new(phi, v, config.params, config.coupling)?, summary))
}

/// Integrates a configuration from its initial state to `t_final`.
/// `table` maps energies to periods; it is built when not supplied.
pub fn run(config: &SimConfig, table: Option<&EnergyPeriodTable>) -> Result<RunOutput> {
    let (state, init) = initial_state(config)?;
    run_from(state, init, config, table)
}

/// [`run`] from an explicit initial state.
pub fn run_from(
    state: State,
    init: InitSummary,
    config: &SimConfig,
    table: Option<&EnergyPeriodTable>,
) -> Result<RunOutput> {
    let built;
    let table = match table {
        Some(t) => {
            if t.params.kappa != config.params.kappa
                || t.params.alpha != config.params.alpha
                || t.params.beta != config.params.beta
                || t.params.half_length != config.params.half_length
            {
                return Err(Error::InvalidParameter("energy table built for other parameters".into()));
            }
            t
        }
        None => {
            built = EnergyPeriodTable::build(&config.params)?;
            &built
        }
    };
    let dt = config.time_step();
    let t_final = config.t_final;
    let mut stepper = Stepper::new(&state, config.stabilizer())?;
    let t_start = stepper.time();

    let mut series = TimeSeries::default();
    let mut snapshots = Vec::new();
    let mut pending: Vec<f64> = config.snapshot_times.clone();
    pending.sort_by(f64::total_cmp);
    pending.reverse();

    let mut d = stepper.diagnostics();
    series.push(t_start, &d, table.period_at(d.free_energy).period, f64::NAN);
    while pending.last().is_some_and(|&ts| ts <= t_start + 1e-12) {
        pending.pop();
        snapshots.push(Snapshot::of(&stepper.state()));
    }

    let mut last_l = d.lyapunov;
    let mut last_t = t_start;
    let mut dissipated = 0.0;
    let mut max_tail: f64 = 0.0;
    let mut max_increase = f64::NEG_INFINITY;
    let total = ((t_final - t_start) / dt - 1e-9).ceil().max(0.0) as usize;
    for i in 1..=total {
        let h = if i == total { t_final - stepper.time() } else { dt };
        if h <= 0.0 {
            break;
        }
        let before = d;
        stepper.step(h)?;
        d = stepper.diagnostics();
        dissipated += 0.5 * (before.dissipation + d.dissipation) * h;
        max_increase = max_increase.max(d.lyapunov - before.lyapunov);
        let t = stepper.time();

        if i % config.record_every == 0 || i == total {
            let span = t - last_t;
            let residual = (d.lyapunov - last_l) / span + dissipated / span;
            series.push(t, &d, table.period_at(d.free_energy).period, residual);
            last_l = d.lyapunov;
            last_t = t;
            dissipated = 0.0;
            if t >= BURN_IN {
                max_tail = max_tail.max(resolution_of(&stepper).max_tail);
            }
        }
        while pending.last().is_some_and(|&ts| ts <= t + 1e-12) {
            pending.pop();
            snapshots.push(Snapshot::of(&stepper.state()));
        }
    }
    Ok(RunOutput {
        series,
        snapshots,
        final_state: stepper.state(),
        init,
        max_tail_after_burn_in: max_tail,
        max_lyapunov_increase: max_increase,
        steps: stepper.steps(),
    })
}
