//! Append-only on-disk store for features waiting past the memory window.
//!
//! Records append to a single log file; an in-memory index maps request
//! key to file offset. Removal only drops the index entry; compaction
//! rewrites live records to reclaim dead bytes.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::joiner::FeatureLog;
use crate::types::FeatureKey;

pub struct SpillStore {
    path: PathBuf,
    writer: BufWriter<File>,
    reader: File,
    index: HashMap<u64, (u64, u32)>,
    end: u64,
    live_bytes: u64,
    dead_bytes: u64,
}

fn encode_record(log: &FeatureLog) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 + 4 + log.features.len() * 10);
    out.extend_from_slice(&log.request_key.to_le_bytes());
    out.extend_from_slice(&log.ts.to_le_bytes());
    out.extend_from_slice(&(log.features.len() as u32).to_le_bytes());
    for f in &log.features {
        out.extend_from_slice(&f.table_id.to_le_bytes());
        out.extend_from_slice(&f.id.to_le_bytes());
    }
    out
}

fn decode_record(bytes: &[u8]) -> Result<FeatureLog> {
    if bytes.len() < 20 {
        return Err(Error::Decode("truncated spill record".into()));
    }
    let request_key = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
    let ts = i64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let count = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    if bytes.len() != 20 + count * 10 {
        return Err(Error::Decode("spill record length mismatch".into()));
    }
    let mut features = Vec::with_capacity(count);
    let mut at = 20;
    for _ in 0..count {
        let table_id = u16::from_le_bytes(bytes[at..at + 2].try_into().unwrap());
        let id = u64::from_le_bytes(bytes[at + 2..at + 10].try_into().unwrap());
        features.push(FeatureKey::new(table_id, id));
        at += 10;
    }
    Ok(FeatureLog {
        request_key,
        features,
        ts,
    })
}

impl SpillStore {
    /// Creates (or truncates) the store file.
    pub fn create(path: &Path) -> Result<Self> {
        let writer_file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)?;
        let reader = File::open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            writer: BufWriter::new(writer_file),
            reader,
            index: HashMap::new(),
            end: 0,
            live_bytes: 0,
            dead_bytes: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, request_key: u64) -> bool {
        self.index.contains_key(&request_key)
    }

    pub fn dead_bytes(&self) -> u64 {
        self.dead_bytes
    }

    pub fn live_bytes(&self) -> u64 {
        self.live_bytes
    }

    pub fn put(&mut self, log: &FeatureLog) -> Result<()> {
        let record = encode_record(log);
        let framed_len = 4 + record.len() as u64;
        self.writer
            .write_all(&(record.len() as u32).to_le_bytes())?;
        self.writer.write_all(&record)?;
        if let Some((_, old_len)) = self.index.insert(log.request_key, (self.end, record.len() as u32))
        {
            self.dead_bytes += 4 + u64::from(old_len);
            self.live_bytes -= 4 + u64::from(old_len);
        }
        self.end += framed_len;
        self.live_bytes += framed_len;
        Ok(())
    }

    pub fn get(&mut self, request_key: u64) -> Result<Option<FeatureLog>> {
        let Some(&(offset, len)) = self.index.get(&request_key) else {
            return Ok(None);
        };
        self.writer.flush()?;
        self.reader.seek(SeekFrom::Start(offset + 4))?;
        let mut buf = vec![0u8; len as usize];
        self.reader.read_exact(&mut buf)?;
        decode_record(&buf).map(Some)
    }

    pub fn remove(&mut self, request_key: u64) -> bool {
        match self.index.remove(&request_key) {
            Some((_, len)) => {
                self.dead_bytes += 4 + u64::from(len);
                self.live_bytes -= 4 + u64::from(len);
                true
            }
            None => false,
        }
    }

    /// Rewrites live records into a fresh file, dropping dead bytes.
    pub fn compact(&mut self) -> Result<()> {
        let live: Vec<u64> = self.index.keys().copied().collect();
        let mut records = Vec::with_capacity(live.len());
        for key in live {
            if let Some(log) = self.get(key)? {
                records.push(log);
            }
        }
        records.sort_by_key(|r| (r.ts, r.request_key));
        let mut fresh = Self::create(&self.path.clone())?;
        for r in &records {
            fresh.put(r)?;
        }
        fresh.writer.flush()?;
        *self = fresh;
        Ok(())
    }

    /// Compacts once dead bytes dominate live bytes.
    pub fn maybe_compact(&mut self) -> Result<bool> {
        if self.dead_bytes > 4096 && self.dead_bytes > self.live_bytes {
            self.compact()?;
            return Ok(true);
        }
        Ok(false)
    }

    /// Request keys currently indexed (unordered).
    pub fn keys(&self) -> impl Iterator<Item = u64> + '_ {
        self.index.keys().copied()
    }
}

impl std::fmt::Debug for SpillStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpillStore")
            .field("path", &self.path)
            .field("entries", &self.index.len())
            .field("live_bytes", &self.live_bytes)
            .field("dead_bytes", &self.dead_bytes)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn log(key: u64, ts: i64) -> FeatureLog {
        FeatureLog {
            request_key: key,
            features: vec![FeatureKey::new(0, key * 10), FeatureKey::new(1, key)],
            ts,
        }
    }

    #[test]
    fn put_get_round_trip() {
        let dir = tempdir().unwrap();
        let mut store = SpillStore::create(&dir.path().join("spill.log")).unwrap();
        for k in 0..50 {
            store.put(&log(k, k as i64)).unwrap();
        }
        for k in 0..50 {
            assert_eq!(store.get(k).unwrap().unwrap(), log(k, k as i64));
        }
        assert!(store.get(999).unwrap().is_none());
    }

    #[test]
    fn overwrite_returns_latest() {
        let dir = tempdir().unwrap();
        let mut store = SpillStore::create(&dir.path().join("spill.log")).unwrap();
        store.put(&log(1, 10)).unwrap();
        store.put(&log(1, 20)).unwrap();
        assert_eq!(store.get(1).unwrap().unwrap().ts, 20);
        assert_eq!(store.len(), 1);
        assert!(store.dead_bytes() > 0);
    }

    #[test]
    fn compaction_preserves_live_entries() {
        let dir = tempdir().unwrap();
        let mut store = SpillStore::create(&dir.path().join("spill.log")).unwrap();
        for k in 0..100 {
            store.put(&log(k, k as i64)).unwrap();
        }
        for k in 0..50 {
            store.remove(k);
        }
        let before = store.live_bytes();
        store.compact().unwrap();
        assert_eq!(store.dead_bytes(), 0);
        assert_eq!(store.live_bytes(), before);
        assert_eq!(store.len(), 50);
        for k in 50..100 {
            assert_eq!(store.get(k).unwrap().unwrap(), log(k, k as i64));
        }
        for k in 0..50 {
            assert!(store.get(k).unwrap().is_none());
        }
    }
}
