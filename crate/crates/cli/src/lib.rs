//! Scenario configuration, runners and plain-text export for the `sqz` tool.

pub mod config;
pub mod export;
pub mod scenarios;

pub use config::{default_config, OutputKind, ScenarioConfig, ScenarioKind};
pub use export::export;
pub use scenarios::{run, Artifact, Report, ScenarioResult};

use sqz_core::SqzError;

/// Process exit status for a failed run.
pub fn exit_code(err: &SqzError) -> i32 {
    match err {
        SqzError::Config(_) | SqzError::Dimension { .. } | SqzError::Precondition(_) => 2,
        SqzError::Numeric { .. } | SqzError::Sequencing { .. } | SqzError::Range { .. } => 3,
    }
}

/// Worker count from `SQZ_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("SQZ_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}
