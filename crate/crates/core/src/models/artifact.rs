use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

use super::{Model, ModelError, TrainConfig};

/// A trained model bound to the feature manifest it was fitted on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArtifact {
    pub config: TrainConfig,
    /// Hash of the preprocessor that produced the training features.
    pub manifest_hash: String,
    pub class_names: Vec<String>,
    pub model: Model,
}

impl ModelArtifact {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("artifact serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Loads and checks the artifact against the manifest of incoming
    /// features.
    pub fn load_for(path: &Path, manifest_hash: &str) -> Result<Self, ModelError> {
        let a = Self::load(path)?;
        a.check_manifest(manifest_hash)?;
        Ok(a)
    }

    pub fn check_manifest(&self, manifest_hash: &str) -> Result<(), ModelError> {
        if self.manifest_hash != manifest_hash {
            return Err(ModelError::ManifestMismatch {
                expected: self.manifest_hash.clone(),
                found: manifest_hash.to_string(),
            });
        }
        Ok(())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>, ModelError> {
        self.model.predict(x)
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix, ModelError> {
        self.model.predict_proba(x)
    }
}
