//! Asymmetric mode-pairing QKD: asymptotic key-rate model, optimal-intensity
//! search, decoy-state bounds and a protocol-level Monte Carlo oracle.
//!
//! The crate builds without `std` (it needs `alloc`). The default `std`
//! feature adds the linear-program backed decoy bounds and rayon-parallel
//! Monte Carlo drivers.
//!
//! ```
//! use mpqkd_core::optimizer::{optimize_intensities, OptimizationProblem};
//! use mpqkd_core::params::{PairingInterval, SystemParams};
//!
//! let problem = OptimizationProblem::new(100.0, 10.0, PairingInterval::Rounds(1_000_000), SystemParams::standard()).unwrap();
//! let best = optimize_intensities(&problem).unwrap();
//! assert!((best.mu_a - 0.2402).abs() < 5e-3);
//! assert!((best.mu_b - 0.7594).abs() < 5e-3);
//! ```

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod decoy;
pub mod error;
mod math;
pub mod mc;
pub mod model;
pub mod optimizer;
pub mod params;

pub use error::{Error, Result};
pub use model::{key_rate, KeyRateBreakdown};
pub use params::{ClickModel, IntensityBits, Link, PairingInterval, Scenario, SystemParams};
