//! Numerical laboratory for finite-time blow-up in potential-weighted
//! semilinear heat equations: forward solver, blow-up diagnostics,
//! self-similar energy machinery, amplitude sweeps, and a CLI.

pub mod blowup;
pub mod cli;
pub mod config;
pub mod error;
pub mod integrator;
pub mod mesh;
pub mod model;
pub mod output;
pub mod selfsim;
pub mod selftest;
pub mod sweep;

pub use error::{Error, Result};
