//! Variational solver for periodic least-energy solutions of
//! `−Δu = λ|u|^{p−1}u − |u|^{q−1}u` on a cylinder `(−T, T) × B_R` with a
//! sublinear absorption term that allows compactly supported solutions.

pub mod config;
pub mod error;
pub mod fibering;
pub mod functionals;
pub mod io;
pub mod lambda_scan;
pub mod mesh;
pub mod newton;
pub mod pohozaev_check;
pub mod radial_ode;
pub mod rayleigh;
pub mod sobolev;

pub use error::{Error, Result};
