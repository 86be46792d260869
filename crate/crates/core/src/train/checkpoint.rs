use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::TrainConfig;
use crate::decoder::{MetaAnswerer, Threshold};
use crate::encoder::nn::all_finite;
use crate::encoder::Vocab;
use crate::heads::MetaModel;

pub const CHECKPOINT_FORMAT: &str = "metaqa-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model with everything needed to use it again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub step: usize,
    pub config: TrainConfig,
    pub vocab: Vocab,
    pub model: MetaModel,
    /// Decision threshold tuned on dev data, if any was given.
    pub threshold: Option<Threshold>,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot read checkpoint: {0}")]
    Io(#[from] io::Error),
    #[error("malformed checkpoint: {0}")]
    Json(String),
    #[error("not a checkpoint (format {0:?})")]
    Format(String),
    #[error("unsupported checkpoint version {0} (expected {CHECKPOINT_VERSION})")]
    Version(u32),
    #[error("inconsistent checkpoint: {0}")]
    Invalid(String),
}

impl Checkpoint {
    pub fn new(step: usize, config: TrainConfig, vocab: Vocab, model: MetaModel, threshold: Option<Threshold>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            step,
            config,
            vocab,
            model,
            threshold,
        }
    }

    pub fn answerer(&self) -> MetaAnswerer {
        MetaAnswerer { model: self.model.clone(), vocab: self.vocab.clone(), settings: self.config.answerer.clone() }
    }

    pub fn into_answerer(self) -> MetaAnswerer {
        MetaAnswerer { model: self.model, vocab: self.vocab, settings: self.config.answerer }
    }

    pub fn validate(&self) -> Result<(), CheckpointError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(CheckpointError::Format(self.format.clone()));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(self.version));
        }
        let bad = CheckpointError::Invalid;
        self.config.answerer.validate().map_err(bad)?;
        self.model.validate_shapes().map_err(|e| CheckpointError::Invalid(e.to_string()))?;
        if self.vocab.len() != self.model.encoder.config.vocab_size {
            return Err(CheckpointError::Invalid(format!(
                "vocabulary has {} entries but the model expects {}",
                self.vocab.len(),
                self.model.encoder.config.vocab_size
            )));
        }
        if crate::candidates::RESERVED.iter().enumerate().any(|(i, r)| self.vocab.token(i as u32) != Some(*r)) {
            return Err(CheckpointError::Invalid("reserved vocabulary entries are missing".into()));
        }
        if !all_finite(&self.model) {
            return Err(CheckpointError::Invalid("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, CheckpointError> {
        let c: Checkpoint = serde_json::from_str(s).map_err(|e| CheckpointError::Json(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Writes to a temporary file next to `path`, then renames it over `path`.
    pub fn save(&self, path: &Path) -> io::Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}
