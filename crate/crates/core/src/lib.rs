//! Coarsening dynamics of the one-dimensional Burgers–Cahn–Hilliard system.

// `!(x > y)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod elliptic;
pub mod energy;
pub mod error;
pub mod evans;
pub mod grid;
pub mod harness;
pub mod init;
pub mod interp;
pub mod io;
pub mod optim;
pub mod params;
pub mod predictors;
pub mod quadrature;
pub mod solver;
pub mod waves;

pub use config::SimConfig;
pub use error::{Error, Result};
pub use grid::{Field, Grid};
pub use params::Params;
pub use solver::{CouplingMode, State, Stepper, TimeSeries};
