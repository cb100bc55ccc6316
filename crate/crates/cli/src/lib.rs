//! Config-driven experiment runner: reads a TOML experiment description,
//! solves for the optimal value, integrates the mirror flow and writes the
//! trace, fields and certificates to disk.

pub mod config;
pub mod run;

pub use config::{validate_config, ConfigError, ConfigIssue, ExperimentConfig};
pub use run::{run_experiment, Certificates, RunError, RunSummary};

/// Directory holding the shipped preset configs.
pub fn presets_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("presets")
}

pub const PRESETS: [&str; 4] = [
    "lq_ball_1d_tau0",
    "lq_ball_1d_tau05",
    "lq_ball_2d_tau05",
    "finite_action_p3",
];
