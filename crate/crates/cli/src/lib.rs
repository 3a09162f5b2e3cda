//! Scenario files, runs, checks and plots for adaptive output
//! synchronization of Lur'e networks.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod check;
pub mod plot;
pub mod presets;
pub mod run;
pub mod scenario;

pub use check::{check, CheckKind, CheckReport};
pub use presets::{preset, resolve, PRESETS};
pub use run::{run, simulate_scenario, Outcome, RunError, RunReport};
pub use scenario::{Overrides, Scenario, ScenarioError};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const DIVERGED: i32 = 3;
    pub const CHECK_FAILED: i32 = 4;
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Scenario(ScenarioError::Io { .. }) => exit::OTHER,
            RunError::Scenario(_) => exit::VALIDATION,
            RunError::Diverged { .. } => exit::DIVERGED,
            RunError::Simulation(_) | RunError::Io { .. } => exit::OTHER,
        }
    }
}
