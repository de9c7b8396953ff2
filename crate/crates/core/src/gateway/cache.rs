//! Content-addressed response cache: one blob per request, named by the hex
//! digest of everything that determines the reply.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey([u8; 32]);

impl CacheKey {
    /// `repeat` only participates when non-zero so single-shot keys stay stable.
    pub fn new(model_id: &str, prompt_text: &str, temperature: f64, bank_digest: &str, repeat: u32) -> Self {
        let mut h = Sha256::new();
        let temp = format!("{temperature:?}");
        for part in [model_id, prompt_text, temp.as_str(), bank_digest] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        if repeat != 0 {
            h.update(b"repeat");
            h.update(repeat.to_le_bytes());
        }
        CacheKey(h.finalize().into())
    }

    /// Key for the follow-up request after an ambiguous reply.
    pub fn reask(&self) -> Self {
        let mut h = Sha256::new();
        h.update(b"reask");
        h.update(self.0);
        CacheKey(h.finalize().into())
    }

    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }
}

#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    tmp_counter: AtomicU64,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache { dir, tmp_counter: AtomicU64::new(0) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(key.hex())
    }

    pub fn get(&self, key: &CacheKey) -> io::Result<Option<String>> {
        match fs::read(self.path(key)) {
            Ok(bytes) => String::from_utf8(bytes)
                .map(Some)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Writes via a temporary file and rename so readers never see a partial blob.
    pub fn put(&self, key: &CacheKey, raw_text: &str) -> io::Result<()> {
        let n = self.tmp_counter.fetch_add(1, Ordering::Relaxed);
        let tmp = self.dir.join(format!(".{}.{}.{n}.tmp", key.hex(), std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(raw_text.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.path(key))
    }

    pub fn len(&self) -> io::Result<usize> {
        Ok(fs::read_dir(&self.dir)?
            .filter_map(Result::ok)
            .filter(|e| !e.file_name().to_string_lossy().starts_with('.'))
            .count())
    }

    pub fn is_empty(&self) -> io::Result<bool> {
        Ok(self.len()? == 0)
    }
}
