//! Scenario-driven runs of the adhesion-model simulator: simulation export,
//! verification reports and convergence sweeps.

pub mod error;
pub mod export;
pub mod pipeline;
pub mod scenario;

pub use error::CliError;
pub use pipeline::{draw_samples, sample_by_mass, simulate, sweep, verify, Options, Sample, SweepRow, VerifyOutcome};
pub use scenario::Scenario;

/// JSON schema of the scenario format.
pub fn scenario_schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(Scenario)).expect("schema serializes")
}
