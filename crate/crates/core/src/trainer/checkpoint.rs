use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::ParameterStore;
use crate::encoders::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, OperandModel};

use super::TrainConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Parameters with their optimizer state, both configurations and the
/// vocabulary, as one JSON document. Floats round-trip bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub epoch: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub vocab: Vec<String>,
    pub params: ParameterStore,
}

impl Checkpoint {
    pub fn capture(model: &OperandModel, train: &TrainConfig, epoch: usize) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            epoch,
            model: model.config.clone(),
            train: train.clone(),
            vocab: model.vocab.tokens().to_vec(),
            params: model.store.clone(),
        }
    }

    pub fn into_model(self) -> Result<OperandModel> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {}", self.version)));
        }
        let vocab = Vocabulary::from_text(&self.vocab.join("\n"))?;
        OperandModel::with_store(self.model, vocab, self.params)
    }
}

pub fn save_checkpoint(path: &Path, model: &OperandModel, train: &TrainConfig, epoch: usize) -> Result<()> {
    let text = serde_json::to_string(&Checkpoint::capture(model, train, epoch))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(OperandModel, TrainConfig, usize)> {
    let c: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let (train, epoch) = (c.train.clone(), c.epoch);
    Ok((c.into_model()?, train, epoch))
}
