//! Merged runtime settings: config-file values overridden by flags.
//!
//! The config file is a single JSON object with the schema
//!
//! ```json
//! {
//!   "features":    { ... feature templates, window, gazetteers ... },
//!   "training":    { ... optimizer, l2_sigma, iterations, seed ... },
//!   "order":       2,
//!   "constraints": true
//! }
//! ```
//!
//! Every key is optional and unknown keys are rejected. Command-line flags
//! (`--order`, `--seed`, `--constraints`) win over file values.

use std::fs;

use serde::Deserialize;

use refline::features::FeatureConfig;
use refline::train::TrainConfig;

use crate::{Cli, CliError, Toggle};

/// On-disk schema of `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    features: FeatureConfig,
    training: TrainConfig,
    order: Option<usize>,
    constraints: Option<bool>,
}

/// Fully resolved settings used by every subcommand.
#[derive(Debug, Clone)]
pub struct Settings {
    pub features: FeatureConfig,
    pub training: TrainConfig,
    pub order: usize,
    /// Decode-constraint override; `None` defers to the model's default.
    pub constraints: Option<bool>,
}

pub fn resolve(cli: &Cli) -> Result<Settings, CliError> {
    let file = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::io(format!("config {}: {e}", path.display())))?;
            serde_json::from_str::<FileConfig>(&text)
                .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };

    let mut training = file.training;
    if let Some(seed) = cli.seed {
        training.seed = seed;
    }
    let order = cli.order.or(file.order).unwrap_or(1);
    if !(1..=3).contains(&order) {
        return Err(CliError::config(format!(
            "order must be between 1 and 3, got {order}"
        )));
    }
    let constraints = match cli.constraints {
        Some(Toggle::On) => Some(true),
        Some(Toggle::Off) => Some(false),
        None => file.constraints,
    };

    file.features
        .validate()
        .map_err(|e| CliError::config(e.to_string()))?;
    training
        .validate()
        .map_err(|e| CliError::config(e.to_string()))?;

    Ok(Settings {
        features: file.features,
        training,
        order,
        constraints,
    })
}
