//! Coarsening predictors: Langer's logarithmic law, the eigenvalue ODE
//! `dp/dt = f λ_max(p) p`, and the two-parameter logarithmic fit `P_fit`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::energy::EnergyPeriodTable;
use crate::error::{Error, Result};
use crate::evans::{rescale_table, EigTable};
use crate::interp::Pchip;
use crate::optim::NelderMead;
use crate::params::Params;
use crate::waves::min_period;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Langer,
    EigFull,
    EigHalf,
}

impl Variant {
    fn factor(self) -> f64 {
        match self {
            Variant::EigHalf => 0.5,
            _ => 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PredictorConfig {
    pub p0: f64,
    pub t0: f64,
    pub variant: Variant,
    pub eig_table: Option<Arc<EigTable>>,
    /// Largest fraction of the local table spacing that `p` may move in one
    /// ODE step.
    pub step_fraction: f64,
}

impl PredictorConfig {
    pub fn langer(p0: f64, t0: f64) -> Self {
        PredictorConfig {
            p0,
            t0,
            variant: Variant::Langer,
            eig_table: None,
            step_fraction: 0.1,
        }
    }

    pub fn eigen(p0: f64, t0: f64, table: Arc<EigTable>, half: bool) -> Self {
        PredictorConfig {
            p0,
            t0,
            variant: if half { Variant::EigHalf } else { Variant::EigFull },
            eig_table: Some(table),
            step_fraction: 0.1,
        }
    }

    fn validate(&self, params: &Params) -> Result<()> {
        let pm = min_period(params);
        if !(self.p0 >= pm * (1.0 - 1e-12)) {
            return Err(Error::out_of_range(self.p0, format!("[{pm}, inf)")));
        }
        if !(self.t0 >= 0.0) {
            return Err(Error::out_of_range(self.t0, "[0, inf)"));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction <= 1.0) {
            return Err(Error::InvalidParameter("step_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Predicted periods on a time grid. `clamped` reports that the trajectory
/// left the eigenvalue table and `λ_max` was held at its last value.
#[derive(Clone, Debug, Serialize)]
pub struct PeriodCurve {
    pub t: Vec<f64>,
    pub period: Vec<f64>,
    pub clamped: bool,
}

fn langer_length(params: &Params) -> f64 {
    (2.0 * params.kappa / params.beta).sqrt()
}

/// `p(t) = p₀ + ξ ln(1 + (16β²(t - t₀)/κ) e^{-p₀/ξ})`, `ξ = √(2κ/β)`.
pub fn langer_period(t: f64, cfg: &PredictorConfig, params: &Params) -> Result<f64> {
    cfg.validate(params)?;
    if !(t >= cfg.t0) {
        return Err(Error::out_of_range(t, format!("[{}, inf)", cfg.t0)));
    }
    let xi = langer_length(params);
    let rate = 16.0 * params.beta * params.beta / params.kappa;
    Ok(cfg.p0 + xi * (rate * (t - cfg.t0) * (-cfg.p0 / xi).exp()).ln_1p())
}

/// Inverse of [`langer_period`]: the time at which the law reaches `p`,
/// `t₀ + (κ/16β²)(e^{p/ξ} − e^{p₀/ξ})`.
pub fn langer_time_to_reach(p: f64, cfg: &PredictorConfig, params: &Params) -> Result<f64> {
    cfg.validate(params)?;
    if !(p >= cfg.p0) {
        return Err(Error::out_of_range(p, format!("[{}, inf)", cfg.p0)));
    }
    let xi = langer_length(params);
    let scale = params.kappa / (16.0 * params.beta * params.beta);
    Ok(cfg.t0 + scale * (cfg.p0 / xi).exp() * ((p - cfg.p0) / xi).exp_m1())
}

struct Lambda {
    pchip: Pchip,
    periods: Vec<f64>,
}

impl Lambda {
    fn new(table: &EigTable, params: &Params) -> Result<Lambda> {
        let table = if (table.kappa_ref - params.kappa).abs() > 1e-14 * params.kappa {
            rescale_table(table, params.kappa)?
        } else {
            table.clone()
        };
        Ok(Lambda {
            pchip: Pchip::new(table.periods.clone(), table.lambda_max.clone())?,
            periods: table.periods,
        })
    }

    fn gap(&self, p: f64) -> f64 {
        let n = self.periods.len();
        let j = self.periods.partition_point(|&q| q <= p).clamp(1, n - 1);
        self.periods[j] - self.periods[j - 1]
    }
}

/// Integrates `dp/dt = f λ_max(p) p` with RK4, `f = 1` or `½`.
pub fn eigenvalue_ode_period(t_grid: &[f64], cfg: &PredictorConfig, params: &Params) -> Result<PeriodCurve> {
    cfg.validate(params)?;
    let table = cfg
        .eig_table
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("eigenvalue predictor needs an eigenvalue table".into()))?;
    if cfg.variant == Variant::Langer {
        return Err(Error::InvalidParameter("Langer variant has no ODE".into()));
    }
    check_grid(t_grid, cfg.t0)?;
    let lam = Lambda::new(table, params)?;
    let (_, p_last) = lam.pchip.domain();
    let f = cfg.variant.factor();
    let lambda_last = lam.pchip.eval(p_last).max(0.0);
    let rhs = |p: f64| f * lam.pchip.eval(p).max(0.0) * p;

    const MAX_STEPS: usize = 50_000_000;
    let mut steps = 0;
    let mut t = cfg.t0;
    let mut p = cfg.p0;
    let mut clamped = p >= p_last;
    let mut out = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        while t < target {
            if p >= p_last {
                // Beyond the table λ_max is held fixed and the ODE is linear.
                clamped = true;
                p *= (f * lambda_last * (target - t)).exp();
                t = target;
                break;
            }
            let g = rhs(p);
            let mut dt = target - t;
            if g > 0.0 {
                dt = dt.min(cfg.step_fraction * lam.gap(p) / g);
                // Land on the table edge rather than step across the kink there.
                let to_edge = (p_last - p) / g;
                if to_edge < dt {
                    dt = to_edge.max(1e-300);
                }
            }
            let k1 = g;
            let k2 = rhs(p + 0.5 * dt * k1);
            let k3 = rhs(p + 0.5 * dt * k2);
            let k4 = rhs(p + dt * k3);
            p += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t = if target - t <= dt { target } else { t + dt };
            steps += 1;
            if steps > MAX_STEPS || !p.is_finite() {
                return Err(Error::Integration {
                    steps,
                    reason: format!("eigenvalue ODE stalled at t = {t}, p = {p}"),
                });
            }
        }
        out.push(p);
    }
    if clamped {
        log::warn!("period left the eigenvalue table (last period {p_last}); lambda_max held at its final value");
    }
    Ok(PeriodCurve {
        t: t_grid.to_vec(),
        period: out,
        clamped,
    })
}

fn check_grid(t_grid: &[f64], t0: f64) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::InvalidParameter("empty time grid".into()));
    }
    if t_grid[0] < t0 || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("time grid must increase from t0".into()));
    }
    Ok(())
}

/// Periods on `t_grid` for any variant.
pub fn predict_periods(t_grid: &[f64], cfg: &PredictorConfig, params: &Params) -> Result<PeriodCurve> {
    match cfg.variant {
        Variant::Langer => {
            check_grid(t_grid, cfg.t0)?;
            let period = t_grid.iter().map(|&t| langer_period(t, cfg, params)).collect::<Result<_>>()?;
            Ok(PeriodCurve {
                t: t_grid.to_vec(),
                period,
                clamped: false,
            })
        }
        _ => eigenvalue_ode_period(t_grid, cfg, params),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyCurve {
    pub t: Vec<f64>,
    pub period: Vec<f64>,
    pub energy: Vec<f64>,
    pub clamped: bool,
}

/// Period prediction mapped to energies through the monotone envelope of `𝓔`.
pub fn predicted_energy_curve(
    t_grid: &[f64],
    cfg: &PredictorConfig,
    params: &Params,
    table: &EnergyPeriodTable,
) -> Result<EnergyCurve> {
    let pc = predict_periods(t_grid, cfg, params)?;
    let energy = pc.period.iter().map(|&p| table.envelope_energy(p)).collect();
    Ok(EnergyCurve {
        t: pc.t,
        period: pc.period,
        energy,
        clamped: pc.clamped,
    })
}

/// `P_fit[c₁, c₂](t) = p₀ + c₁ ξ ln(1 + (t/c₂)(16β²/κ) e^{-p₀/ξ})`.
pub fn pfit(t: f64, c1: f64, c2: f64, p0: f64, params: &Params) -> f64 {
    let xi = langer_length(params);
    let rate = 16.0 * params.beta * params.beta / params.kappa;
    p0 + c1 * xi * (t / c2 * rate * (-p0 / xi).exp()).ln_1p()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub c1: f64,
    pub c2: f64,
    pub objective: f64,
    pub t_window: (f64, f64),
    pub p0: f64,
}

/// Fits `P_fit` to `(t, period)` samples on `(0, t_max]` by minimising
/// `∫ |P_fit - P|² dt / ln(1 + t)` (trapezoid rule over samples with
/// `t > 0`). Nelder–Mead is started from `(1, 1)` and `(5, 5)`; the better
/// result is returned. `p0` defaults to the first sampled period.
pub fn fit_pfit(t: &[f64], period: &[f64], params: &Params, t_max: f64, p0: Option<f64>) -> Result<FitResult> {
    if t.len() != period.len() || t.is_empty() {
        return Err(Error::InvalidParameter("time and period columns differ in length".into()));
    }
    let p0 = p0.unwrap_or(period[0]);
    let idx: Vec<usize> = (0..t.len()).filter(|&i| t[i] > 0.0 && t[i] <= t_max).collect();
    if idx.len() < 3 {
        return Err(Error::Degenerate("fewer than three samples in the fit window".into()));
    }
    let (lo, hi) = idx
        .iter()
        .map(|&i| period[i])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !(hi - lo > 1e-12 * hi.abs().max(1.0)) {
        return Err(Error::Degenerate("period series is constant on the fit window".into()));
    }
    let ts: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
    let ps: Vec<f64> = idx.iter().map(|&i| period[i]).collect();
    let objective = |c: &[f64]| -> f64 {
        if c[0] <= 0.0 || c[1] <= 0.0 {
            return f64::INFINITY;
        }
        let g = |k: usize| (pfit(ts[k], c[0], c[1], p0, params) - ps[k]).powi(2) / ts[k].ln_1p();
        (0..ts.len() - 1)
            .map(|k| 0.5 * (g(k) + g(k + 1)) * (ts[k + 1] - ts[k]))
            .sum()
    };
    let nm = NelderMead::default();
    let best = [[1.0, 1.0], [5.0, 5.0]]
        .iter()
        .map(|s| nm.minimize(objective, s))
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("two starts");
    if !best.value.is_finite() {
        return Err(Error::Degenerate("fit objective not finite".into()));
    }
    Ok(FitResult {
        c1: best.x[0],
        c2: best.x[1],
        objective: best.value,
        t_window: (ts[0], *ts.last().expect("non-empty")),
        p0,
    })
}
