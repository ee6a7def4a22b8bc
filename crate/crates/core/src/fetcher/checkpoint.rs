use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sink::SinkPosition;
use crate::error::Result;

/// Durable progress of one worker. Written after every batch.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub worker_id: usize,
    /// Shard identity; a resume against a different shard is refused.
    pub shard_offset: u64,
    pub shard_len: u64,
    pub batch_size: usize,
    pub next_batch_index: u64,
    pub ids_requested: u64,
    pub tweets_stored: u64,
    pub throttle_events: u64,
    pub last_update: u64,
    /// Start time of the last request, so a restart keeps the spacing.
    pub last_request_ms: Option<u64>,
    pub sink: SinkPosition,
    pub missing_log_bytes: u64,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Option<Checkpoint>> {
        match fs::read(path) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Write-then-rename so a crash leaves either the old or the new checkpoint.
    pub fn store(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("json.tmp");
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&serde_json::to_vec_pretty(self)?)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }
}
