//! Ensembles of runs, coupled/uncoupled comparisons, staircase analysis
//! of energy series, and the on-disk layout of results.
//!
//! Layout: `<root>/<command>/<name>/` holding `config.echo`, `series.csv`
//! and `report.json`, plus per-trial or per-run subdirectories.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::SimConfig;
use crate::energy::EnergyPeriodTable;
use crate::error::{Error, Result};
use crate::evans::EigTable;
use crate::io::Table;
use crate::params::Params;
use crate::predictors::{
    fit_pfit, langer_time_to_reach, predicted_energy_curve, FitResult, PredictorConfig,
};
use crate::solver::{initial_state, run, run_from, CouplingMode, InitSummary, RunOutput, State, TimeSeries};
use crate::waves::spinodal;

/// Default period thresholds for coupled/uncoupled comparisons.
pub const DEFAULT_THRESHOLDS: [f64; 2] = [1.12, 1.495];

/// Amplitude step of the eigenvalue table used for prediction overlays.
pub const EIG_TABLE_STEP: f64 = 0.01;

#[derive(Clone, Debug)]
pub struct OutputDir {
    pub path: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path, command: &str, name: &str) -> Result<OutputDir> {
        let path = root.join(command).join(name);
        std::fs::create_dir_all(&path)?;
        Ok(OutputDir { path })
    }

    pub fn sub(&self, name: &str) -> Result<OutputDir> {
        let path = self.path.join(name);
        std::fs::create_dir_all(&path)?;
        Ok(OutputDir { path })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        std::fs::write(self.file(name), text)?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_table(&self, name: &str, table: &Table) -> Result<()> {
        table.save(&self.file(name))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub name: Option<String>,
    pub coupling: CouplingMode,
    pub seed: u64,
    pub steps: usize,
    pub final_time: f64,
    pub final_energy: f64,
    pub final_period: f64,
    pub init: InitSummary,
    pub resolved_after_burn_in: bool,
    pub max_tail_after_burn_in: f64,
    pub max_lyapunov_increase: f64,
    pub snapshots: Vec<String>,
}

impl RunReport {
    pub fn new(config: &SimConfig, out: &RunOutput) -> RunReport {
        let s = &out.series;
        let last = s.len() - 1;
        RunReport {
            name: config.name.clone(),
            coupling: config.coupling,
            seed: config.seed,
            steps: out.steps,
            final_time: s.t[last],
            final_energy: s.free_energy[last],
            final_period: s.period[last],
            init: out.init,
            resolved_after_burn_in: out.resolved(),
            max_tail_after_burn_in: out.max_tail_after_burn_in,
            max_lyapunov_increase: out.max_lyapunov_increase,
            snapshots: out.snapshots.iter().map(|s| s.file_name()).collect(),
        }
    }
}

/// Writes `config.echo`, `series.csv`, snapshots and `report.json`.
pub fn write_run(dir: &OutputDir, config: &SimConfig, out: &RunOutput) -> Result<()> {
    dir.write_text("config.echo", &config.echo())?;
    dir.write_table("series.csv", &out.series.to_table())?;
    for snap in &out.snapshots {
        dir.write_table(&snap.file_name(), &snap.to_table())?;
    }
    dir.write_json("report.json", &RunReport::new(config, out))
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::InvalidParameter("thread count must be positive".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))
}

/// Predictions started at the spinodal handshake: `t₀` is the first time
/// the reference energy curve reaches the spinodal energy and `p₀ = p_s`.
#[derive(Clone, Debug, Serialize)]
pub struct Overlay {
    pub t0: f64,
    pub p0: f64,
    pub t: Vec<f64>,
    pub langer_period: Vec<f64>,
    pub langer_energy: Vec<f64>,
    pub eig_period: Vec<f64>,
    pub eig_energy: Vec<f64>,
    /// The eigenvalue trajectory left its table.
    pub eig_clamped: bool,
}

impl Overlay {
    pub fn to_table(&self) -> Table {
        Table::new(
            &["t", "langer_period", "langer_energy", "eig_period", "eig_energy"],
            vec![
                self.t.clone(),
                self.langer_period.clone(),
                self.langer_energy.clone(),
                self.eig_period.clone(),
                self.eig_energy.clone(),
            ],
        )
        .expect("overlay columns have equal length")
    }
}

/// First time at which `energy` is at or below the spinodal energy.
pub fn spinodal_time(t: &[f64], energy: &[f64], table: &EnergyPeriodTable) -> Option<f64> {
    let es = table.scale.e_spinodal;
    t.iter().zip(energy).find(|(_, &e)| e <= es).map(|(&t, _)| t)
}

/// Langer and half-factor eigenvalue predictions on the samples of `t` at
/// or after the spinodal time of `energy`. `None` if the energy never
/// reaches the spinodal level.
pub fn prediction_overlay(
    t: &[f64],
    energy: &[f64],
    params: &Params,
    table: &EnergyPeriodTable,
    eig: &Arc<EigTable>,
) -> Result<Option<Overlay>> {
    let Some(t0) = spinodal_time(t, energy, table) else {
        return Ok(None);
    };
    let p0 = spinodal(params)?.p_s;
    let grid: Vec<f64> = t.iter().copied().filter(|&s| s >= t0).collect();
    let langer = predicted_energy_curve(&grid, &PredictorConfig::langer(p0, t0), params, table)?;
    let eig = predicted_energy_curve(&grid, &PredictorConfig::eigen(p0, t0, eig.clone(), true), params, table)?;
    if eig.clamped {
        log::warn!("eigenvalue prediction left its table; lambda_max held at the last tabulated value");
    }
    Ok(Some(Overlay {
        t0,
        p0,
        t: grid,
        langer_period: langer.period,
        langer_energy: langer.energy,
        eig_period: eig.period,
        eig_energy: eig.energy,
        eig_clamped: eig.clamped,
    }))
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub error: String,
    pub numerical: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleReport {
    pub trials: usize,
    pub base_seed: u64,
    /// Seeds of the trials that completed, in trial order.
    pub seeds: Vec<u64>,
    pub failures: Vec<TrialFailure>,
    pub series_paths: Vec<PathBuf>,
    #[serde(skip)]
    pub t: Vec<f64>,
    #[serde(skip)]
    pub mean_energy: Vec<f64>,
    #[serde(skip)]
    pub mean_period: Vec<f64>,
    #[serde(skip)]
    pub series: Vec<TimeSeries>,
    #[serde(skip)]
    pub overlay: Option<Overlay>,
    pub spinodal_time: Option<f64>,
}

impl EnsembleReport {
    pub fn partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn mean_table(&self) -> Table {
        Table::new(
            &["t", "free_energy", "period"],
            vec![self.t.clone(), self.mean_energy.clone(), self.mean_period.clone()],
        )
        .expect("mean columns have equal length")
    }
}

/// Runs `trials` copies of `config` with seeds `seed, seed + 1, …` on a
/// worker pool of `threads` (all cores when `None`). Failed trials are
/// recorded and the means are taken over the rest. When `dir` is given
/// each trial is written to `trial_<i>/`.
pub fn run_ensemble(
    config: &SimConfig,
    trials: usize,
    threads: Option<usize>,
    dir: Option<&OutputDir>,
) -> Result<EnsembleReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("an ensemble needs at least one trial".into()));
    }
    config.validate()?;
    let table = EnergyPeriodTable::build(&config.params)?;
    let eig = Arc::new(EigTable::build(&config.params, EIG_TABLE_STEP)?);

    let outcomes: Vec<Result<(TimeSeries, Option<PathBuf>)>> = pool(threads)?.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|i| {
                let mut c = config.clone();
                c.seed = config.seed + i as u64;
                let out = run(&c, Some(&table))?;
                let path = match dir {
                    Some(d) => {
                        let sub = d.sub(&format!("trial_{i}"))?;
                        write_run(&sub, &c, &out)?;
                        Some(sub.file("series.csv"))
                    }
                    None => None,
                };
                Ok((out.series, path))
            })
            .collect()
    });

    let mut seeds = Vec::new();
    let mut series = Vec::new();
    let mut series_paths = Vec::new();
    let mut failures = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        let seed = config.seed + i as u64;
        match o {
            Ok((s, path)) => {
                seeds.push(seed);
                series.push(s);
                series_paths.extend(path);
            }
            Err(e) => {
                log::error!("trial {i} (seed {seed}) failed: {e}");
                failures.push(TrialFailure { trial: i, seed, numerical: e.is_numerical(), error: e.to_string() });
            }
        }
    }
    if series.is_empty() {
        return Err(failures
            .first()
            .map(|f| Error::Integration { steps: 0, reason: format!("every trial failed; first: {}", f.error) })
            .expect("trials >= 1"));
    }

    let t = series[0].t.clone();
    if series.iter().any(|s| s.t != t) {
        return Err(Error::Degenerate("trials recorded on different time grids".into()));
    }
    let m = series.len() as f64;
    let mean = |col: fn(&TimeSeries) -> &Vec<f64>| -> Vec<f64> {
        (0..t.len()).map(|k| series.iter().map(|s| col(s)[k]).sum::<f64>() / m).collect()
    };
    let mean_energy = mean(|s| &s.free_energy);
    let mean_period = mean(|s| &s.period);
    let overlay = prediction_overlay(&t, &mean_energy, &config.params, &table, &eig)?;

    Ok(EnsembleReport {
        trials,
        base_seed: config.seed,
        seeds,
        failures,
        series_paths,
        spinodal_time: overlay.as_ref().map(|o| o.t0),
        t,
        mean_energy,
        mean_period,
        series,
        overlay,
    })
}

/// First recorded time with `period ≥ threshold`.
pub fn first_crossing(t: &[f64], period: &[f64], threshold: f64) -> Option<f64> {
    t.iter().zip(period).find(|(_, &p)| p >= threshold).map(|(&t, _)| t)
}

#[derive(Clone, Debug, Serialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub coupled: Option<f64>,
    pub uncoupled: Option<f64>,
    /// Final times, which bound censored crossings from below.
    pub coupled_censored_at: f64,
    pub uncoupled_censored_at: f64,
    /// `t_uncoupled / t_coupled` when both cross.
    pub speedup: Option<f64>,
    /// `t_final(uncoupled) / t_coupled` when only the coupled run crosses.
    pub speedup_lower_bound: Option<f64>,
    /// Langer extrapolation of the uncoupled crossing from its final state,
    /// when censored.
    pub uncoupled_langer_estimate: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub rows: Vec<ThresholdRow>,
    pub fit_coupled: Option<FitResult>,
    pub fit_uncoupled: Option<FitResult>,
    pub fit_t_max: f64,
}

/// Fit window used for `P_fit` in comparisons.
pub const FIT_T_MAX: f64 = 20.0;

/// Crossing table and fits for a pair of period series.
pub fn compare_series(coupled: &TimeSeries, uncoupled: &TimeSeries, thresholds: &[f64], params: &Params) -> Comparison {
    let end = |s: &TimeSeries| *s.t.last().unwrap_or(&0.0);
    let rows = thresholds
        .iter()
        .map(|&th| {
            let c = first_crossing(&coupled.t, &coupled.period, th);
            let u = first_crossing(&uncoupled.t, &uncoupled.period, th);
            let speedup = match (c, u) {
                (Some(c), Some(u)) if c > 0.0 => Some(u / c),
                (Some(c), Some(u)) if c == u => Some(1.0),
                _ => None,
            };
            let lower = match (c, u) {
                (Some(c), None) if c > 0.0 => Some(end(uncoupled) / c),
                _ => None,
            };
            let estimate = if u.is_none() && !uncoupled.is_empty() {
                let k = uncoupled.len() - 1;
                let cfg = PredictorConfig::langer(uncoupled.period[k], uncoupled.t[k]);
                langer_time_to_reach(th, &cfg, params).ok()
            } else {
                None
            };
            ThresholdRow {
                threshold: th,
                coupled: c,
                uncoupled: u,
                coupled_censored_at: end(coupled),
                uncoupled_censored_at: end(uncoupled),
                speedup,
                speedup_lower_bound: lower,
                uncoupled_langer_estimate: estimate,
            }
        })
        .collect();
    let fit = |s: &TimeSeries| {
        let t_max = FIT_T_MAX.min(end(s));
        fit_pfit(&s.t, &s.period, params, t_max, None)
            .map_err(|e| log::warn!("P_fit failed: {e}"))
            .ok()
    };
    Comparison {
        rows,
        fit_coupled: fit(coupled),
        fit_uncoupled: fit(uncoupled),
        fit_t_max: FIT_T_MAX.min(end(coupled)),
    }
}

#[derive(Clone, Debug)]
pub struct CoupledComparison {
    pub coupled: RunOutput,
    pub uncoupled: RunOutput,
    pub comparison: Comparison,
}

/// Runs `config` (coupled) and its uncoupled twin from the same initial
/// phase field. `uncoupled_t_final` overrides the twin's horizon.
pub fn compare_coupled(
    config: &SimConfig,
    thresholds: &[f64],
    uncoupled_t_final: Option<f64>,
    threads: Option<usize>,
) -> Result<CoupledComparison> {
    if !config.coupling.is_coupled() {
        return Err(Error::Config("compare needs a coupled configuration".into()));
    }
    let mut twin = config.twin(CouplingMode::Uncoupled);
    if let Some(t) = uncoupled_t_final {
        twin.t_final = t;
    }
    twin.validate()?;
    let table = EnergyPeriodTable::build(&config.params)?;
    let (state, init) = initial_state(config)?;
    let uncoupled_state = State::new(state.phi.clone(), None, state.params, CouplingMode::Uncoupled)?;

    let (c, u) = pool(threads)?.install(|| {
        rayon::join(
            || run_from(state, init, config, Some(&table)),
            || run_from(uncoupled_state, init, &twin, Some(&table)),
        )
    });
    let (coupled, uncoupled) = (c?, u?);
    let comparison = compare_series(&coupled.series, &uncoupled.series, thresholds, &config.params);
    Ok(CoupledComparison { coupled, uncoupled, comparison })
}

/// A fast energy decrease between two flat stretches of a series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Drop {
    pub t_before: f64,
    pub t_after: f64,
    pub e_before: f64,
    pub e_after: f64,
    pub size: f64,
}

/// Splits an energy series into flat stretches and reports the drops
/// between consecutive stretches. A sample starts a flat window when the
/// energy varies by less than `flat_tol` over the following `window` time
/// units; overlapping flat windows merge into one stretch. Drops no larger
/// than `flat_tol` are ignored.
pub fn energy_drops(t: &[f64], e: &[f64], window: f64, flat_tol: f64) -> Vec<Drop> {
    let n = t.len().min(e.len());
    let mut stretches: Vec<(usize, usize)> = Vec::new();
    let mut j = 0;
    for i in 0..n {
        j = j.max(i);
        while j + 1 < n && t[j + 1] - t[i] <= window {
            j += 1;
        }
        if t[j] - t[i] < 0.5 * window {
            break;
        }
        let (lo, hi) = e[i..=j]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if hi - lo < flat_tol {
            match stretches.last_mut() {
                Some(last) if i <= last.1 => last.1 = last.1.max(j),
                _ => stretches.push((i, j)),
            }
        }
    }
    stretches
        .windows(2)
        .filter_map(|w| {
            let (a, b) = (w[0].1, w[1].0);
            let size = e[a] - e[b];
            (size > flat_tol).then_some(Drop { t_before: t[a], t_after: t[b], e_before: e[a], e_after: e[b], size })
        })
        .collect()
}

/// Centred moving average over `w` samples (shrinking at the ends).
pub fn moving_average(x: &[f64], w: usize) -> Vec<f64> {
    let n = x.len();
    let h = w / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(h);
            let hi = (i + w - h).min(n);
            x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}
