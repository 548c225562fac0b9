//! Merged experiment configuration read from JSON.

use std::fs;
use std::path::Path;

use amem_core::model::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetSpec;
use crate::error::{LabError, LabResult};
use crate::gradcheck::GradCheckOptions;
use crate::train::TrainConfig;

/// Everything a subcommand may need. Missing sections and fields take defaults.
///
/// ```json
/// {
///   "dataset":   { "n_train": 3000, "n_val": 500, "n_test": 500, "dialogs_per_image": 3,
///                  "base_seed": 0, "generator": { "count_prob": 0.4, "follow_up_prob": 0.95 } },
///   "model":     { "hidden_dim": 64, "word_dim": 32 },
///   "train":     { "epochs": 15, "batch_size": 32, "lr": 0.001, "variant": "amem_h_seq" },
///   "gradcheck": { "steps": 10, "tolerance": 1e-5 }
/// }
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub dataset: DatasetSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub gradcheck: GradCheckOptions,
}

impl CliConfig {
    pub fn load(path: &Path) -> LabResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| LabError::json(path.display().to_string(), e))
    }

    pub fn validate(&self) -> LabResult<()> {
        self.dataset.validate()?;
        self.train.validate()?;
        self.model.clone().with_variant(self.train.variant).validate()?;
        let g = &self.gradcheck;
        if g.steps == 0 || !(g.eps > 0.0) || !(g.wide_eps > 0.0) || !(g.tolerance > 0.0) {
            return Err(LabError::Config("gradcheck steps, eps and tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}
