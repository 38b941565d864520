use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use teamnet::data::SynthConfig;
use teamnet::eval::{EvalConfig, ModelConfig};

use crate::CliError;

/// Everything a run depends on. Loaded from one JSON document; command-line
/// flags override individual fields afterwards.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Dataset file; when absent the dataset is synthesized from `synth`.
    pub data: Option<PathBuf>,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub eval: EvalConfig,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let at = e.path().to_string();
            CliError::input(format!("{}: $.{at}: {}", path.display(), e.into_inner()))
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.eval.train.validate().map_err(CliError::from)?;
        if self.eval.seeds.is_empty() {
            return Err(CliError::input("at least one seed is required"));
        }
        if self.model.tasks.is_empty() {
            return Err(CliError::input("at least one task is required"));
        }
        for t in &self.model.tasks {
            if !teamnet::data::is_known_task(t) {
                return Err(CliError::input(format!("unknown task `{t}`")));
            }
        }
        self.model.loss.validate().map_err(CliError::from)?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
