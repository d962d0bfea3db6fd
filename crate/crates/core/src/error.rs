use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("{name} = {value} is out of range (expected {expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    /// A ratio in the key-rate model has a zero denominator.
    #[error("degenerate model: {0}")]
    Degenerate(&'static str),
    /// The photon-number truncation leaves more probability mass than allowed.
    #[error("photon-number cutoff {k_max} leaves tail mass {tail:e}; raise the cutoff")]
    Truncation { k_max: usize, tail: f64 },
    /// The decoy linear program has no feasible point.
    #[error("decoy observables are inconsistent: the bound program is infeasible")]
    Inconsistent,
    #[error("linear program solver failed: {0}")]
    Solver(String),
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain { name, value, expected }
    }
}
