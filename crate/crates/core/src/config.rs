//! Plain-text simulation configuration: one `key = value` per line, `#`
//! starts a comment. Unknown keys are rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::init::InitRecipe;
use crate::params::Params;
use crate::solver::CouplingMode;

/// Grid size used when `n` is not given.
pub const DEFAULT_N_COUPLED: usize = 8192;
pub const DEFAULT_N_UNCOUPLED: usize = 2048;
pub const DEFAULT_DT_COUPLED: f64 = 9.765_625e-5;
pub const DEFAULT_DT_UNCOUPLED: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PhiInit {
    Random,
    File,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VelocityInit {
    None,
    Fourier,
    Bump,
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub name: Option<String>,
    pub n: Option<usize>,
    pub params: Params,
    pub coupling: CouplingMode,
    pub dt: Option<f64>,
    pub t_final: f64,
    pub record_every: usize,
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
    pub init_phi: PhiInit,
    pub init_v: VelocityInit,
    /// Snapshot CSV (`x,phi[,v]`) read when either initializer is `file`.
    pub init_file: Option<PathBuf>,
    pub fourier_cutoff: usize,
    pub sigma: f64,
    /// Relax random phase data onto the 0.99·E_max level before the run.
    pub pre_evolve: bool,
    pub stabilizer_a: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            name: None,
            n: None,
            params: Params::default(),
            coupling: CouplingMode::Uncoupled,
            dt: None,
            t_final: 1.0,
            record_every: 10,
            snapshot_times: Vec::new(),
            seed: 0,
            init_phi: PhiInit::Random,
            init_v: VelocityInit::None,
            init_file: None,
            fourier_cutoff: 32,
            sigma: 0.1,
            pre_evolve: true,
            stabilizer_a: None,
            out_dir: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse '{value}' for key '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("cannot parse '{value}' for key '{key}' as a boolean"))),
    }
}

impl SimConfig {
    pub fn parse(text: &str) -> Result<SimConfig> {
        let mut c = SimConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            c.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<SimConfig> {
        let text = std::fs::read_to_string(path)?;
        let mut c = SimConfig::parse(&text)?;
        if c.name.is_none() {
            c.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        if let Some(f) = &c.init_file {
            if f.is_relative() {
                if let Some(dir) = path.parent() {
                    c.init_file = Some(dir.join(f));
                }
            }
        }
        Ok(c)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "name" => self.name = Some(value.to_string()),
            "n" => self.n = Some(parse_num(key, value)?),
            "L" | "l" => self.params.half_length = parse_num(key, value)?,
            "alpha" => self.params.alpha = parse_num(key, value)?,
            "beta" => self.params.beta = parse_num(key, value)?,
            "kappa" => self.params.kappa = parse_num(key, value)?,
            "nu" => self.params.nu = parse_num(key, value)?,
            "K" | "k" => self.params.coupling = parse_num(key, value)?,
            "mobility" => self.params.mobility = parse_num(key, value)?,
            "coupling" => self.coupling = value.parse()?,
            "dt" => self.dt = Some(parse_num(key, value)?),
            "t_final" => self.t_final = parse_num(key, value)?,
            "record_every" => self.record_every = parse_num(key, value)?,
            "snapshot_times" => {
                self.snapshot_times = value
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_num(key, s))
                    .collect::<Result<_>>()?;
            }
            "seed" => self.seed = parse_num(key, value)?,
            "init_phi" => {
                self.init_phi = match value {
                    "random" => PhiInit::Random,
                    "file" => PhiInit::File,
                    _ => return Err(Error::Config(format!("init_phi must be random or file, got '{value}'"))),
                }
            }
            "init_v" => {
                self.init_v = match value {
                    "none" => VelocityInit::None,
                    "fourier" => VelocityInit::Fourier,
                    "bump" => VelocityInit::Bump,
                    "file" => VelocityInit::File,
                    _ => {
                        return Err(Error::Config(format!(
                            "init_v must be none, fourier, bump or file, got '{value}'"
                        )))
                    }
                }
            }
            "init_file" => self.init_file = Some(PathBuf::from(value)),
            "fourier_cutoff" => self.fourier_cutoff = parse_num(key, value)?,
            "sigma" => self.sigma = parse_num(key, value)?,
            "pre_evolve" => self.pre_evolve = parse_bool(key, value)?,
            "stabilizer_A" | "stabilizer_a" => self.stabilizer_a = Some(parse_num(key, value)?),
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        let n = self.grid_size();
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::Config(format!("n must be a power of two >= 4, got {n}")));
        }
        let dt = self.time_step();
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::Config(format!("t_final must be positive, got {}", self.t_final)));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if self.snapshot_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Config("snapshot times must be non-negative".into()));
        }
        if !self.coupling.is_coupled() && self.init_v != VelocityInit::None {
            return Err(Error::Config("an uncoupled run takes no initial velocity".into()));
        }
        let needs_file = self.init_phi == PhiInit::File || self.init_v == VelocityInit::File;
        if needs_file && self.init_file.is_none() {
            return Err(Error::Config("init_file is required when an initializer is 'file'".into()));
        }
        if self.stabilizer_a.is_some_and(|a| !(a.is_finite() && a >= 0.0)) {
            return Err(Error::Config("stabilizer_A must be non-negative".into()));
        }
        self.recipe().validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.init_v == VelocityInit::Fourier && self.fourier_cutoff >= n / 4 {
            return Err(Error::Config(format!("fourier_cutoff must be below n/4 = {}", n / 4)));
        }
        Ok(())
    }

    pub fn grid_size(&self) -> usize {
        self.n.unwrap_or(if self.coupling.is_coupled() { DEFAULT_N_COUPLED } else { DEFAULT_N_UNCOUPLED })
    }

    pub fn time_step(&self) -> f64 {
        self.dt.unwrap_or(if self.coupling.is_coupled() { DEFAULT_DT_COUPLED } else { DEFAULT_DT_UNCOUPLED })
    }

    pub fn stabilizer(&self) -> f64 {
        self.stabilizer_a.unwrap_or(2.0 * self.params.beta)
    }

    pub fn recipe(&self) -> InitRecipe {
        InitRecipe {
            seed: self.seed,
            sigma: self.sigma,
            fourier_cutoff: self.fourier_cutoff,
            pre_dt: self.time_step(),
            stabilizer: Some(self.stabilizer()),
            ..InitRecipe::default()
        }
    }

    /// Copy with a different coupling mode, keeping the grid and step of
    /// this configuration so both runs start from the same phase field.
    pub fn twin(&self, coupling: CouplingMode) -> SimConfig {
        let mut c = self.clone();
        c.n = Some(self.grid_size());
        c.dt = Some(self.time_step());
        c.coupling = coupling;
        if !coupling.is_coupled() {
            c.init_v = VelocityInit::None;
        }
        c
    }

    /// Fully resolved configuration in the input syntax.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        if let Some(name) = &self.name {
            let _ = writeln!(s, "name = {name}");
        }
        let _ = writeln!(s, "n = {}", self.grid_size());
        let _ = writeln!(s, "L = {}", p.half_length);
        let _ = writeln!(s, "alpha = {}", p.alpha);
        let _ = writeln!(s, "beta = {}", p.beta);
        let _ = writeln!(s, "kappa = {}", p.kappa);
        let _ = writeln!(s, "nu = {}", p.nu);
        let _ = writeln!(s, "K = {}", p.coupling);
        let _ = writeln!(s, "coupling = {}", self.coupling);
        let _ = writeln!(s, "dt = {}", self.time_step());
        let _ = writeln!(s, "t_final = {}", self.t_final);
        let _ = writeln!(s, "record_every = {}", self.record_every);
        if !self.snapshot_times.is_empty() {
            let ts: Vec<String> = self.snapshot_times.iter().map(|t| t.to_string()).collect();
            let _ = writeln!(s, "snapshot_times = {}", ts.join(", "));
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        let phi = match self.init_phi {
            PhiInit::Random => "random",
            PhiInit::File => "file",
        };
        let v = match self.init_v {
            VelocityInit::None => "none",
            VelocityInit::Fourier => "fourier",
            VelocityInit::Bump => "bump",
            VelocityInit::File => "file",
        };
        let _ = writeln!(s, "init_phi = {phi}");
        let _ = writeln!(s, "init_v = {v}");
        if let Some(f) = &self.init_file {
            let _ = writeln!(s, "init_file = {}", f.display());
        }
        let _ = writeln!(s, "fourier_cutoff = {}", self.fourier_cutoff);
        let _ = writeln!(s, "sigma = {}", self.sigma);
        let _ = writeln!(s, "pre_evolve = {}", self.pre_evolve);
        let _ = writeln!(s, "stabilizer_A = {}", self.stabilizer());
        if let Some(d) = &self.out_dir {
            let _ = writeln!(s, "out_dir = {}", d.display());
        }
        s
    }
}
