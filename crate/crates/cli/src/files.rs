use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use metaqa_core::candidates::{read_gold_jsonl, read_mbest_jsonl, GoldAnnotationSet, MBestRecord};
use metaqa_core::decoder::{read_predictions, Prediction};
use metaqa_core::train::{write_atomic, Checkpoint};

use crate::{invalid, runtime, CliError};

/// Resolves relative paths against the data directory, when one is set.
pub struct Paths {
    base: Option<PathBuf>,
}

impl Paths {
    pub fn new(base: Option<PathBuf>) -> Self {
        Paths { base }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn open(&self, p: &Path) -> Result<(PathBuf, BufReader<File>), CliError> {
        let path = self.resolve(p);
        let f = File::open(&path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Ok((path, BufReader::new(f)))
    }

    pub fn mbest(&self, p: &Path) -> Result<Vec<MBestRecord>, CliError> {
        let (path, r) = self.open(p)?;
        read_mbest_jsonl(r).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn gold(&self, p: &Path) -> Result<Vec<GoldAnnotationSet>, CliError> {
        let (path, r) = self.open(p)?;
        read_gold_jsonl(r).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn predictions(&self, p: &Path) -> Result<Vec<Prediction>, CliError> {
        let (path, r) = self.open(p)?;
        read_predictions(r).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn checkpoint(&self, p: &Path) -> Result<Checkpoint, CliError> {
        let path = self.resolve(p);
        Checkpoint::load(&path).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn read_string(&self, p: &Path) -> Result<String, CliError> {
        let path = self.resolve(p);
        fs::read_to_string(&path).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    /// Writes atomically, creating parent directories.
    pub fn write(&self, p: &Path, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.resolve(p);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
        }
        write_atomic(&path, contents.as_bytes()).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
