//! Trained-model file: one JSON object holding the config, the vocabulary
//! the token ids refer to, the training log and every tensor.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::ModelConfig;
use super::eval::TrainedModel;
use super::params::{ParamError, Parameters, TensorDump};
use super::train::{EpochLog, TrainOutcome};
use crate::corpus::Vocabulary;

pub const MODEL_FORMAT: &str = "grounding-model-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub log: Vec<EpochLog>,
    pub parameters: TensorDump,
}

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("{path}: format {found:?}, expected {MODEL_FORMAT:?}")]
    Format { path: String, found: String },
    #[error("{path}: {source}")]
    Params { path: String, source: ParamError },
}

impl ModelFile {
    pub fn new(config: &ModelConfig, vocab: &Vocabulary, outcome: &TrainOutcome) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT.into(),
            config: config.clone(),
            vocab: vocab.clone(),
            best_epoch: outcome.best_epoch,
            best_valid_loss: outcome.best_valid_loss,
            log: outcome.log.clone(),
            parameters: outcome.params.to_dump(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelFileError> {
        let text = serde_json::to_string(self).expect("model serializes");
        std::fs::write(path, text).map_err(|source| ModelFileError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<ModelFile, ModelFileError> {
        let p = || path.display().to_string();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ModelFileError::Io { path: p(), source })?;
        let file: ModelFile = serde_json::from_str(&text)
            .map_err(|source| ModelFileError::Json { path: p(), source })?;
        if file.format != MODEL_FORMAT {
            return Err(ModelFileError::Format {
                path: p(),
                found: file.format,
            });
        }
        Parameters::from_dump(&file.parameters)
            .map_err(|source| ModelFileError::Params { path: p(), source })?;
        Ok(file)
    }

    pub fn params(&self) -> Parameters {
        Parameters::from_dump(&self.parameters).expect("checked on load")
    }

    pub fn trained(&self) -> TrainedModel {
        TrainedModel {
            seed: self.config.seed,
            params: self.params(),
            best_valid_loss: self.best_valid_loss,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, make_examples};
    use crate::model::{train, Variant};
    use crate::synth;

    #[test]
    fn save_load_round_trip() {
        let corpus = synth::corpus(12, 4);
        let vocab = build_vocab(&corpus);
        let ex = make_examples(&corpus, &vocab).examples;
        let mut config = ModelConfig::new(Variant::ContextMlp, 3);
        config.hidden = 8;
        config.epochs = 2;
        let out = train(&ex[..16], &ex[16..], vocab.len(), &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let file = ModelFile::new(&config, &vocab, &out);
        file.save(&path).unwrap();
        let back = ModelFile::load(&path).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.params(), out.params);
    }

    #[test]
    fn wrong_format_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, "{\"format\":\"other\"}").unwrap();
        assert!(ModelFile::load(&path).is_err());
    }
}
