use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bch_core::energy::{energy_of_period, free_energy, kohn_otto_length, EnergyPeriodTable};
use bch_core::evans::EigTable;
use bch_core::harness::{
    compare_coupled, run_ensemble, write_run, OutputDir, DEFAULT_THRESHOLDS, EIG_TABLE_STEP, FIT_T_MAX,
};
use bch_core::io::Table;
use bch_core::predictors::{fit_pfit, predicted_energy_curve, PredictorConfig};
use bch_core::solver::run;
use bch_core::waves::{periodic_wave, spinodal};
use bch_core::{Error, Field, Grid, Result, SimConfig};

#[derive(Parser, Debug)]
#[command(name = "bch", version, about = "Burgers-Cahn-Hilliard coarsening simulations and predictors")]
struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root of the output tree.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads (all cores by default).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Override a configuration key, e.g. `--set n=1024`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one simulation and write its time series and snapshots.
    Simulate,
    /// Run trials with seeds seed, seed+1, ... and average them.
    Ensemble {
        #[arg(long)]
        trials: usize,
    },
    /// Predicted period and energy curves.
    Predict(PredictArgs),
    /// Fit the logarithmic rate law to a period series.
    Fit {
        /// Series CSV with `t` and `period` columns.
        series: PathBuf,
        #[arg(long, default_value_t = FIT_T_MAX)]
        t_max: f64,
        /// Initial period (first sample by default).
        #[arg(long)]
        p0: Option<f64>,
    },
    /// Stationary periodic waves.
    Waves {
        #[command(subcommand)]
        what: WavesCommand,
    },
    /// Leading eigenvalues of the periodic waves.
    Evans {
        #[command(subcommand)]
        what: EvansCommand,
    },
    /// Energy, period and Kohn-Otto length of a snapshot.
    Measure {
        /// Snapshot CSV with `x` and `phi` columns.
        snapshot: PathBuf,
    },
    /// Run a coupled configuration against its uncoupled twin.
    Compare {
        /// Horizon of the uncoupled run (the config's t_final by default).
        #[arg(long)]
        uncoupled_t_final: Option<f64>,
        /// Comma-separated period thresholds.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
    },
}

#[derive(Subcommand, Debug)]
enum WavesCommand {
    Table {
        /// Number of amplitudes, equispaced strictly inside (0, binodal).
        #[arg(long, default_value_t = 50)]
        count: usize,
    },
}

#[derive(Subcommand, Debug)]
enum EvansCommand {
    Table {
        #[arg(long, default_value_t = EIG_TABLE_STEP)]
        da: f64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Langer,
    Eig,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long, value_enum)]
    method: Method,
    /// Use the half-factor eigenvalue ODE.
    #[arg(long)]
    half: bool,
    /// Initial period (spinodal period by default).
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    #[arg(long)]
    t_max: f64,
    #[arg(long)]
    kappa: Option<f64>,
    /// Number of output times, equispaced on [t0, t_max].
    #[arg(long, default_value_t = 201)]
    samples: usize,
}

enum Outcome {
    Done,
    Partial,
}

fn load_config(cli: &Cli) -> Result<SimConfig> {
    let mut c = match &cli.config {
        Some(p) => SimConfig::from_file(p)?,
        None => SimConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{kv}' is not KEY=VALUE")))?;
        c.set(k.trim(), v.trim())?;
    }
    c.validate()?;
    Ok(c)
}

fn run_name(c: &SimConfig) -> String {
    c.name.clone().unwrap_or_else(|| "default".to_string())
}

fn out_dir(cli: &Cli, c: &SimConfig, command: &str) -> Result<OutputDir> {
    let root = c.out_dir.clone().filter(|_| cli.out == Path::new("out")).unwrap_or_else(|| cli.out.clone());
    OutputDir::create(&root, command, &run_name(c))
}

fn print_table(t: &Table) -> Result<()> {
    t.write(std::io::stdout().lock())
}

fn execute(cli: &Cli) -> Result<Outcome> {
    let config = load_config(cli)?;
    let params = config.params;
    match &cli.command {
        Command::Simulate => {
            let out = run(&config, None)?;
            let dir = out_dir(cli, &config, "simulate")?;
            write_run(&dir, &config, &out)?;
            println!("{}", dir.path.display());
        }
        Command::Ensemble { trials } => {
            let dir = out_dir(cli, &config, "ensemble")?;
            let report = run_ensemble(&config, *trials, cli.threads, Some(&dir))?;
            dir.write_text("config.echo", &config.echo())?;
            dir.write_table("series.csv", &report.mean_table())?;
            if let Some(o) = &report.overlay {
                dir.write_table("predictions.csv", &o.to_table())?;
            }
            dir.write_json("report.json", &report)?;
            println!("{}", dir.path.display());
            if report.partial() {
                eprintln!("{} of {} trials failed", report.failures.len(), report.trials);
                return Ok(Outcome::Partial);
            }
        }
        Command::Predict(a) => {
            let params = a.kappa.map_or(params, |k| params.with_kappa(k));
            params.validate()?;
            if a.samples < 2 || a.t_max.partial_cmp(&a.t0) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::InvalidParameter("need t_max > t0 and at least two samples".into()));
            }
            let p0 = match a.p0 {
                Some(p) => p,
                None => spinodal(&params)?.p_s,
            };
            let cfg = match a.method {
                Method::Langer => PredictorConfig::langer(p0, a.t0),
                Method::Eig => {
                    let table = Arc::new(EigTable::build(&params, EIG_TABLE_STEP)?);
                    PredictorConfig::eigen(p0, a.t0, table, a.half)
                }
            };
            let h = (a.t_max - a.t0) / (a.samples - 1) as f64;
            let grid: Vec<f64> = (0..a.samples).map(|i| a.t0 + i as f64 * h).collect();
            let energies = EnergyPeriodTable::build(&params)?;
            let curve = predicted_energy_curve(&grid, &cfg, &params, &energies)?;
            if curve.clamped {
                log::warn!("prediction left the eigenvalue table; lambda_max held at its last value");
            }
            print_table(&Table::new(&["t", "period", "energy"], vec![curve.t, curve.period, curve.energy])?)?;
        }
        Command::Fit { series, t_max, p0 } => {
            let table = Table::load(series)?;
            let fit = fit_pfit(table.require("t")?, table.require("period")?, &params, *t_max, *p0)?;
            let json = serde_json::json!({ "c1": fit.c1, "c2": fit.c2, "objective": fit.objective });
            println!("{}", serde_json::to_string_pretty(&json)?);
        }
        Command::Waves { what: WavesCommand::Table { count } } => {
            if *count == 0 {
                return Err(Error::InvalidParameter("count must be positive".into()));
            }
            let top = params.binodal();
            let mut cols = vec![Vec::new(); 4];
            for i in 1..=*count {
                let a = top * i as f64 / (*count + 1) as f64;
                let w = periodic_wave(a, &params)?;
                cols[0].push(a);
                cols[1].push(w.period);
                cols[2].push(w.modulus);
                cols[3].push(energy_of_period(w.period, &params)?);
            }
            print_table(&Table::new(&["amplitude", "period", "modulus", "energy"], cols)?)?;
        }
        Command::Evans { what: EvansCommand::Table { da } } => {
            let t = EigTable::build(&params, *da)?;
            let kappa = vec![t.kappa_ref; t.amplitudes.len()];
            print_table(&Table::new(
                &["amplitude", "period", "lambda_max", "kappa"],
                vec![t.amplitudes, t.periods, t.lambda_max, kappa],
            )?)?;
        }
        Command::Measure { snapshot } => {
            let table = Table::load(snapshot)?;
            let x = table.require("x")?;
            let phi = table.require("phi")?;
            if x.len() < 2 {
                return Err(Error::Config("snapshot needs at least two rows".into()));
            }
            let n = x.len();
            let half_length = 0.5 * n as f64 * (x[1] - x[0]);
            let params = bch_core::Params { half_length, ..params };
            let grid = Grid::new(n, half_length)?;
            let field = Field::new(grid, phi.to_vec())?;
            let e = free_energy(&field, &params)?;
            let lookup = EnergyPeriodTable::build(&params)?.period_at(e);
            // Random initial data carry an O(σ/√N) conserved mean; the
            // H⁻¹ norm behind the Kohn-Otto length needs it removed.
            let mean = field.mean();
            if mean != 0.0 {
                log::warn!("snapshot mean {mean:e} removed before the Kohn-Otto length");
            }
            let centred = Field::new(field.grid().clone(), field.values().iter().map(|v| v - mean).collect())?;
            let ko = kohn_otto_length(&centred)?;
            print_table(&Table::new(&["energy", "period", "ko_length"], vec![vec![e], vec![lookup.period], vec![ko]])?)?;
        }
        Command::Compare { uncoupled_t_final, thresholds } => {
            let thresholds = thresholds.clone().unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec());
            let r = compare_coupled(&config, &thresholds, *uncoupled_t_final, cli.threads)?;
            let dir = out_dir(cli, &config, "compare")?;
            dir.write_text("config.echo", &config.echo())?;
            write_run(&dir.sub("coupled")?, &config, &r.coupled)?;
            let mut twin = config.twin(bch_core::CouplingMode::Uncoupled);
            if let Some(t) = uncoupled_t_final {
                twin.t_final = *t;
            }
            write_run(&dir.sub("uncoupled")?, &twin, &r.uncoupled)?;
            let rows = &r.comparison.rows;
            let col = |f: fn(&bch_core::harness::ThresholdRow) -> Option<f64>| -> Vec<f64> {
                rows.iter().map(|r| f(r).unwrap_or(f64::NAN)).collect()
            };
            let table = Table::new(
                &["threshold", "t_coupled", "t_uncoupled", "speedup", "speedup_lower_bound", "uncoupled_langer_estimate"],
                vec![
                    rows.iter().map(|r| r.threshold).collect(),
                    col(|r| r.coupled),
                    col(|r| r.uncoupled),
                    col(|r| r.speedup),
                    col(|r| r.speedup_lower_bound),
                    col(|r| r.uncoupled_langer_estimate),
                ],
            )?;
            dir.write_table("series.csv", &table)?;
            dir.write_json("report.json", &r.comparison)?;
            print_table(&table)?;
        }
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("error: cannot start {n} worker threads");
            return ExitCode::from(1);
        }
    }
    match execute(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
