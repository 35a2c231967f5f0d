use std::path::{Path, PathBuf};

use super::{BackendError, CompletionBackend, SlotKey};
use crate::operators::GenerationRequest;

/// Serves `<dir>/gen<G>_slot<S>.txt` verbatim for each request.
pub struct ReplayBackend {
    dir: PathBuf,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn fixture_path(dir: &Path, generation: u64, slot: usize) -> PathBuf {
        dir.join(format!("gen{generation}_slot{slot}.txt"))
    }
}

impl CompletionBackend for ReplayBackend {
    fn complete(&self, _req: &GenerationRequest, key: SlotKey) -> Result<String, BackendError> {
        let path = Self::fixture_path(&self.dir, key.generation, key.slot);
        std::fs::read_to_string(&path).map_err(|_| BackendError::FixtureMissing(path))
    }
}
