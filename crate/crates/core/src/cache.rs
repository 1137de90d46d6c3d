//! Persistent cache of frozen backbone vectors, keyed by document id.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! magic "LFE1" | u32 dim | u64 entry_count
//! per entry:  u16 id_len | id bytes (UTF-8) | u32 utterance_count
//! per utterance: u16 section_id | dim × f32
//! ```
//!
//! A JSON sidecar (`<path>.meta.json`) records a content hash per document so
//! stale entries are recomputed instead of silently reused; the binary format
//! itself stays fixed.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backbone::{mix, Backbone};
use crate::document::Document;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LFE1";

/// One cached document: `(section_id, backbone vector)` per utterance, in
/// utterance order.
pub type CacheEntry = Vec<(u16, Vec<f32>)>;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCache {
    pub dim: u32,
    pub entries: BTreeMap<String, CacheEntry>,
}

impl EmbeddingCache {
    pub fn new(dim: u32) -> Self {
        EmbeddingCache { dim, entries: BTreeMap::new() }
    }

    pub fn get(&self, doc_id: &str) -> Result<&CacheEntry> {
        self.entries.get(doc_id).ok_or_else(|| Error::CacheMiss(doc_id.to_string()))
    }

    pub fn insert(&mut self, doc_id: String, entry: CacheEntry) -> Result<()> {
        for (_, v) in &entry {
            if v.len() != self.dim as usize {
                return Err(Error::DimensionMismatch { expected: self.dim as usize, got: v.len() });
            }
        }
        self.entries.insert(doc_id, entry);
        Ok(())
    }

    /// Encode every utterance of `doc` with `backend` and store the entry.
    pub fn encode_and_insert(&mut self, doc: &Document, backend: &dyn Backbone) -> Result<()> {
        let mut entry = Vec::with_capacity(doc.utterances.len());
        for u in &doc.utterances {
            entry.push((u.section, backend.encode(&u.text)?));
        }
        self.insert(doc.id.clone(), entry)
    }
}

pub fn cache_write(path: &Path, cache: &EmbeddingCache) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&cache.dim.to_le_bytes())?;
    w.write_all(&(cache.entries.len() as u64).to_le_bytes())?;
    for (id, entry) in &cache.entries {
        let id_bytes = id.as_bytes();
        w.write_all(&(id_bytes.len() as u16).to_le_bytes())?;
        w.write_all(id_bytes)?;
        w.write_all(&(entry.len() as u32).to_le_bytes())?;
        for (section_id, vector) in entry {
            if vector.len() != cache.dim as usize {
                return Err(Error::DimensionMismatch {
                    expected: cache.dim as usize,
                    got: vector.len(),
                });
            }
            w.write_all(&section_id.to_le_bytes())?;
            for v in vector {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn cache_read(path: &Path) -> Result<EmbeddingCache> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadMagic);
    }
    let dim = read_u32(&mut r)?;
    let count = read_u64(&mut r)?;
    let mut cache = EmbeddingCache::new(dim);
    for _ in 0..count {
        let id_len = read_u16(&mut r)? as usize;
        let mut id_bytes = vec![0u8; id_len];
        read_exact(&mut r, &mut id_bytes)?;
        let id = String::from_utf8(id_bytes)
            .map_err(|_| Error::BadCheckpoint("cache id is not UTF-8".into()))?;
        let utterances = read_u32(&mut r)? as usize;
        let mut entry = Vec::with_capacity(utterances);
        for _ in 0..utterances {
            let section_id = read_u16(&mut r)?;
            let mut vector = Vec::with_capacity(dim as usize);
            for _ in 0..dim {
                let mut b = [0u8; 4];
                read_exact(&mut r, &mut b)?;
                vector.push(f32::from_le_bytes(b));
            }
            entry.push((section_id, vector));
        }
        cache.entries.insert(id, entry);
    }
    Ok(cache)
}

/// Open a cache file and check its dimension against the expected one.
pub fn cache_read_expecting(path: &Path, expected_dim: u32) -> Result<EmbeddingCache> {
    let cache = cache_read(path)?;
    if cache.dim != expected_dim {
        return Err(Error::DimMismatch { file: cache.dim, expected: expected_dim });
    }
    Ok(cache)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            Error::TruncatedFile
        } else {
            Error::Io(e)
        }
    })
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

// --- staleness sidecar -------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct CacheMeta {
    pub schema_version: u32,
    pub backend: String,
    pub dim: u32,
    /// doc_id -> content hash (hex) of the utterances that were encoded.
    pub hashes: BTreeMap<String, String>,
}

pub fn meta_path(cache_path: &Path) -> PathBuf {
    let mut os = cache_path.as_os_str().to_owned();
    os.push(".meta.json");
    PathBuf::from(os)
}

pub fn meta_write(cache_path: &Path, meta: &CacheMeta) -> Result<()> {
    let f = BufWriter::new(File::create(meta_path(cache_path))?);
    serde_json::to_writer_pretty(f, meta)?;
    Ok(())
}

pub fn meta_read(cache_path: &Path) -> Result<CacheMeta> {
    let f = BufReader::new(File::open(meta_path(cache_path))?);
    Ok(serde_json::from_reader(f)?)
}

/// Hash of everything that determines a document's cached vectors.
pub fn content_hash(doc: &Document) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    eat(doc.id.as_bytes());
    for u in &doc.utterances {
        eat(u.text.as_bytes());
        eat(&u.section.to_le_bytes());
    }
    mix(h, doc.utterances.len() as u64)
}
