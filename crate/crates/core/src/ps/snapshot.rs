//! Durable shard snapshots and recovery.
//!
//! Layout: `<root>/shard_<i>/v<version>/manifest` plus one binary file per
//! sparse table and one for the dense slice. The manifest is plain-text
//! key=value lines followed by one `file <name> <length> <checksum>` line
//! per file; it is written last, so a directory without a manifest is an
//! aborted snapshot and is never restored from. Table files are a header
//! (table_id, dim, config digest) followed by length-prefixed records
//! (key, dim, vector, accumulator, last_update), sorted by key so that
//! identical content always produces identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::embedding::{CuckooTable, EmbeddingEntry, TableConfig};
use crate::error::{Error, Result};
use crate::hashing::fnv1a;
use crate::ps::{DenseBlock, PsShard, Role};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileEntry {
    pub name: String,
    pub len: u64,
    pub checksum: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotManifest {
    pub shard: u32,
    pub version: u64,
    pub timestamp: i64,
    pub files: Vec<FileEntry>,
    /// Directory holding the manifest and its files.
    pub dir: PathBuf,
}

impl SnapshotManifest {
    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join("manifest")
    }
}

fn encode_table<S: Scalar>(table_id: u16, table: &CuckooTable<S>) -> Vec<u8> {
    let cfg = table.config();
    let mut out = Vec::new();
    out.extend_from_slice(&u32::from(table_id).to_le_bytes());
    out.extend_from_slice(&(cfg.dim as u32).to_le_bytes());
    out.extend_from_slice(&cfg.digest().to_le_bytes());
    for (key, entry) in table.sorted_entries() {
        let payload_len = 8 + 4 + 2 * cfg.dim * S::WIRE_SIZE + 8;
        out.extend_from_slice(&(payload_len as u32).to_le_bytes());
        out.extend_from_slice(&key.to_le_bytes());
        out.extend_from_slice(&(cfg.dim as u32).to_le_bytes());
        for &v in &entry.vector {
            v.write_le(&mut out);
        }
        for &a in &entry.accumulator {
            a.write_le(&mut out);
        }
        out.extend_from_slice(&entry.last_update.to_le_bytes());
    }
    out
}

fn decode_table<S: Scalar>(bytes: &[u8], cfg: &TableConfig, file: &str) -> Result<(u16, CuckooTable<S>)> {
    let bad = |msg: String| Error::Decode(format!("{file}: {msg}"));
    if bytes.len() < 16 {
        return Err(bad("truncated header".into()));
    }
    let table_id = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let digest = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    if dim != cfg.dim {
        return Err(bad(format!("dim {dim} does not match config {}", cfg.dim)));
    }
    if digest != cfg.digest() {
        return Err(bad("table config digest mismatch".into()));
    }
    let table_id =
        u16::try_from(table_id).map_err(|_| bad(format!("table id {table_id} out of range")))?;
    let mut table = CuckooTable::new(cfg.clone())?;
    let mut at = 16;
    while at < bytes.len() {
        if at + 4 > bytes.len() {
            return Err(bad("truncated record length".into()));
        }
        let rec_len = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        at += 4;
        if at + rec_len > bytes.len() {
            return Err(bad("truncated record".into()));
        }
        let rec = &bytes[at..at + rec_len];
        at += rec_len;
        let expect = 8 + 4 + 2 * dim * S::WIRE_SIZE + 8;
        if rec_len != expect {
            return Err(bad(format!("record length {rec_len}, expected {expect}")));
        }
        let key = u64::from_le_bytes(rec[0..8].try_into().unwrap());
        let rec_dim = u32::from_le_bytes(rec[8..12].try_into().unwrap()) as usize;
        if rec_dim != dim {
            return Err(bad(format!("record dim {rec_dim} vs table dim {dim}")));
        }
        let mut cursor = 12;
        let read_vec = |rec: &[u8], cursor: &mut usize| {
            let mut v = Vec::with_capacity(dim);
            for _ in 0..dim {
                v.push(S::read_le(&rec[*cursor..*cursor + S::WIRE_SIZE]));
                *cursor += S::WIRE_SIZE;
            }
            v
        };
        let vector = read_vec(rec, &mut cursor);
        let accumulator = read_vec(rec, &mut cursor);
        let last_update = i64::from_le_bytes(rec[cursor..cursor + 8].try_into().unwrap());
        table.insert(
            key,
            EmbeddingEntry {
                vector,
                accumulator,
                last_update,
                occurrence_estimate: 0,
            },
        )?;
    }
    Ok((table_id, table))
}

fn encode_dense<S: Scalar>(block: &DenseBlock<S>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(block.offset as u64).to_le_bytes());
    out.extend_from_slice(&(block.values.len() as u64).to_le_bytes());
    for &v in &block.values {
        v.write_le(&mut out);
    }
    out.extend_from_slice(&block.adam.t.to_le_bytes());
    for &m in &block.adam.m {
        m.write_le(&mut out);
    }
    for &v in &block.adam.v {
        v.write_le(&mut out);
    }
    out
}

fn decode_dense<S: Scalar>(bytes: &[u8], file: &str) -> Result<DenseBlock<S>> {
    let bad = |msg: &str| Error::Decode(format!("{file}: {msg}"));
    if bytes.len() < 16 {
        return Err(bad("truncated dense header"));
    }
    let offset = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let expect = 16 + 3 * len * S::WIRE_SIZE + 8;
    if bytes.len() != expect {
        return Err(bad("dense block length mismatch"));
    }
    let mut at = 16;
    let read_vec = |at: &mut usize| {
        let mut v = Vec::with_capacity(len);
        for _ in 0..len {
            v.push(S::read_le(&bytes[*at..*at + S::WIRE_SIZE]));
            *at += S::WIRE_SIZE;
        }
        v
    };
    let values = read_vec(&mut at);
    let t = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    at += 8;
    let m = read_vec(&mut at);
    let v = read_vec(&mut at);
    let mut block = DenseBlock::new(offset, values);
    block.adam.t = t;
    block.adam.m = m;
    block.adam.v = v;
    Ok(block)
}

/// Writes a durable snapshot of the shard. Tables are iterated one at a
/// time under their read lock (writers pause per table, not per shard).
/// The manifest lands last; on failure the partial directory is removed
/// and any previous snapshot stays valid.
pub fn snapshot_shard<S: Scalar>(
    shard: &PsShard<S>,
    root: &Path,
    now: i64,
) -> Result<SnapshotManifest> {
    let version = shard.version();
    let dir = root
        .join(format!("shard_{}", shard.id()))
        .join(format!("v{version}"));
    let result = write_snapshot(shard, &dir, version, now);
    if result.is_err() {
        let _ = fs::remove_dir_all(&dir);
    }
    result
}

fn write_snapshot<S: Scalar>(
    shard: &PsShard<S>,
    dir: &Path,
    version: u64,
    now: i64,
) -> Result<SnapshotManifest> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for table_id in shard.table_ids() {
        let bytes = shard.with_table(table_id, |table| encode_table(table_id, table));
        let name = format!("table_{table_id}.bin");
        fs::write(dir.join(&name), &bytes)?;
        files.push(FileEntry {
            name,
            len: bytes.len() as u64,
            checksum: fnv1a(&bytes),
        });
    }
    let dense_bytes = encode_dense(&shard.dense_block());
    fs::write(dir.join("dense.bin"), &dense_bytes)?;
    files.push(FileEntry {
        name: "dense.bin".into(),
        len: dense_bytes.len() as u64,
        checksum: fnv1a(&dense_bytes),
    });

    let mut manifest = String::new();
    manifest.push_str(&format!("shard={}\n", shard.id()));
    manifest.push_str(&format!("version={version}\n"));
    manifest.push_str(&format!("timestamp={now}\n"));
    for f in &files {
        manifest.push_str(&format!("file {} {} {:016x}\n", f.name, f.len, f.checksum));
    }
    let mut out = fs::File::create(dir.join("manifest"))?;
    out.write_all(manifest.as_bytes())?;
    out.sync_all()?;

    Ok(SnapshotManifest {
        shard: shard.id(),
        version,
        timestamp: now,
        files,
        dir: dir.to_path_buf(),
    })
}

pub fn read_manifest(path: &Path) -> Result<SnapshotManifest> {
    let text = fs::read_to_string(path).map_err(|_| Error::SnapshotMissing {
        file: path.display().to_string(),
    })?;
    let mut shard = None;
    let mut version = None;
    let mut timestamp = None;
    let mut files = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("file ") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("bad file line: {line}"),
                });
            }
            let len = parts[1].parse::<u64>().map_err(|e| Error::Parse {
                line: lineno + 1,
                msg: e.to_string(),
            })?;
            let checksum = u64::from_str_radix(parts[2], 16).map_err(|e| Error::Parse {
                line: lineno + 1,
                msg: e.to_string(),
            })?;
            files.push(FileEntry {
                name: parts[0].to_string(),
                len,
                checksum,
            });
        } else if let Some((k, v)) = line.split_once('=') {
            let parse_err = |e: std::num::ParseIntError| Error::Parse {
                line: lineno + 1,
                msg: e.to_string(),
            };
            match k {
                "shard" => shard = Some(v.parse().map_err(parse_err)?),
                "version" => version = Some(v.parse().map_err(parse_err)?),
                "timestamp" => timestamp = Some(v.parse().map_err(parse_err)?),
                _ => {}
            }
        }
    }
    let missing = |what: &str| Error::Parse {
        line: 0,
        msg: format!("manifest missing {what}"),
    };
    Ok(SnapshotManifest {
        shard: shard.ok_or_else(|| missing("shard"))?,
        version: version.ok_or_else(|| missing("version"))?,
        timestamp: timestamp.ok_or_else(|| missing("timestamp"))?,
        files,
        dir: path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    })
}

/// Rebuilds a shard from a manifest, verifying every file checksum.
pub fn restore_shard<S: Scalar>(
    manifest_path: &Path,
    table_cfgs: &BTreeMap<u16, TableConfig>,
    role: Role,
    seed: u64,
) -> Result<PsShard<S>> {
    let manifest = read_manifest(manifest_path)?;
    let mut tables = BTreeMap::new();
    let mut dense = None;
    for entry in &manifest.files {
        let path = manifest.dir.join(&entry.name);
        let bytes = fs::read(&path).map_err(|_| Error::SnapshotMissing {
            file: entry.name.clone(),
        })?;
        let actual = fnv1a(&bytes);
        if actual != entry.checksum || bytes.len() as u64 != entry.len {
            return Err(Error::SnapshotCorrupt {
                file: entry.name.clone(),
                expected: entry.checksum,
                actual,
            });
        }
        if entry.name == "dense.bin" {
            dense = Some(decode_dense::<S>(&bytes, &entry.name)?);
        } else {
            // Peek the table id from the header to find its config.
            if bytes.len() < 4 {
                return Err(Error::Decode(format!("{}: truncated", entry.name)));
            }
            let raw_id = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
            let table_id = u16::try_from(raw_id)
                .map_err(|_| Error::Decode(format!("{}: bad table id", entry.name)))?;
            let cfg = table_cfgs.get(&table_id).ok_or_else(|| {
                Error::Decode(format!("{}: no config for table {table_id}", entry.name))
            })?;
            let (id, table) = decode_table::<S>(&bytes, cfg, &entry.name)?;
            tables.insert(id, table);
        }
    }
    let dense = dense.ok_or_else(|| Error::SnapshotMissing {
        file: "dense.bin".into(),
    })?;
    // Tables absent from the snapshot (they were empty) still need to exist.
    for (&table_id, cfg) in table_cfgs {
        if !tables.contains_key(&table_id) {
            tables.insert(table_id, CuckooTable::new(cfg.clone())?);
        }
    }
    Ok(PsShard::from_parts(
        manifest.shard,
        role,
        tables,
        dense,
        manifest.version,
        seed,
    ))
}

/// Highest-version snapshot of a shard that has a manifest.
pub fn find_latest_manifest(root: &Path, shard: u32) -> Option<PathBuf> {
    let dir = root.join(format!("shard_{shard}"));
    let mut best: Option<(u64, PathBuf)> = None;
    for entry in fs::read_dir(dir).ok()? {
        let entry = entry.ok()?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        let Some(version) = name.strip_prefix('v').and_then(|v| v.parse::<u64>().ok()) else {
            continue;
        };
        let manifest = entry.path().join("manifest");
        if manifest.is_file() && best.as_ref().is_none_or(|(v, _)| version > *v) {
            best = Some((version, manifest));
        }
    }
    best.map(|(_, path)| path)
}
