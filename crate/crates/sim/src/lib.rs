//! Configuration, sweeps, verification and file output for the
//! `mpqkd-sim` command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod output;
pub mod spec;
pub mod sweep;
pub mod verify;

pub use error::SimError;
pub use spec::{ResolvedSpec, SweepSpec};
pub use sweep::{run_sweep, ResultRow};
pub use verify::{verify_oracles, VerifyReport};

/// Environment variable that overrides the spec's seed.
pub const SEED_ENV: &str = "MPQKD_SEED";

/// Reads and resolves a spec file, honoring [`SEED_ENV`].
pub fn load_spec(path: &std::path::Path) -> Result<ResolvedSpec, SimError> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    let seed = match std::env::var(SEED_ENV) {
        Ok(v) if !v.trim().is_empty() => Some(
            v.trim()
                .parse::<u64>()
                .map_err(|_| SimError::Validation(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?,
        ),
        _ => None,
    };
    SweepSpec::from_json(&text)?.resolve(seed)
}
