//! Phase-damped Jaynes-Cummings dynamics of an atom falling through a
//! cavity: a series solution of the damped master equation, observables
//! built from it, and a brute-force integrator to check it against.

pub mod blockalg;
pub mod config;
pub mod error;
pub mod evolve;
pub mod observables;
pub mod oracle;
pub mod run;
pub mod scaled;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
