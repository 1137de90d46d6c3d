//! Versioned binary checkpoints.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! magic "LFCK" | u32 version | u32 meta_len | meta JSON (UTF-8)
//! u32 tensor_count
//! per tensor: u16 name_len | name | u8 ndim | ndim × u32 dims | f32 data
//! ```
//!
//! The meta JSON carries the model config plus optional training state
//! (`{"schema_version", "config", "train_state"}`); optimizer moments are
//! stored as extra tensors named `m.*` / `v.*` next to the parameter tensors
//! `p.*`. Values are stored as f32, so an f32 model round-trips bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossKind;
use crate::model::{ModelConfig, ModelParams, ParamSet};
use crate::scalar::Real;
use crate::SCHEMA_VERSION;

const MAGIC: &[u8; 4] = b"LFCK";
const VERSION: u32 = 1;

/// Optimizer and schedule state needed to resume a run bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainStateMeta {
    pub step: u64,
    pub total_steps: u64,
    pub epoch: usize,
    pub lr0: f64,
    pub loss_kind: LossKind,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainState<F> {
    pub meta: TrainStateMeta,
    pub m: ParamSet<F>,
    pub v: ParamSet<F>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    schema_version: u32,
    config: ModelConfig,
    train_state: Option<TrainStateMeta>,
}

pub fn save_checkpoint<F: Real>(
    path: &Path,
    model: &ModelParams<F>,
    state: Option<&TrainState<F>>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let meta = CheckpointMeta {
        schema_version: SCHEMA_VERSION,
        config: model.config.clone(),
        train_state: state.map(|s| s.meta.clone()),
    };
    let meta_bytes = serde_json::to_vec(&meta)?;
    w.write_all(&(meta_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&meta_bytes)?;

    let mut tensors: Vec<(String, Vec<f32>, Vec<usize>)> = Vec::new();
    for (name, data, shape) in model.set.tensors() {
        tensors.push((format!("p.{name}"), to_f32(data), shape));
    }
    if let Some(state) = state {
        for (prefix, set) in [("m", &state.m), ("v", &state.v)] {
            for (name, data, shape) in set.tensors() {
                tensors.push((format!("{prefix}.{name}"), to_f32(data), shape));
            }
        }
    }

    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, data, shape) in tensors {
        let nb = name.as_bytes();
        w.write_all(&(nb.len() as u16).to_le_bytes())?;
        w.write_all(nb)?;
        w.write_all(&[shape.len() as u8])?;
        for d in &shape {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<F: Real>(path: &Path) -> Result<(ModelParams<F>, Option<TrainState<F>>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadCheckpoint("wrong magic bytes".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::BadCheckpoint(format!("unsupported version {version}")));
    }
    let meta_len = read_u32(&mut r)? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    read_exact(&mut r, &mut meta_bytes)?;
    let meta: CheckpointMeta = serde_json::from_slice(&meta_bytes)?;

    let tensor_count = read_u32(&mut r)? as usize;
    let mut raw: std::collections::BTreeMap<String, Vec<f32>> = Default::default();
    for _ in 0..tensor_count {
        let name_len = read_u16(&mut r)? as usize;
        let mut nb = vec![0u8; name_len];
        read_exact(&mut r, &mut nb)?;
        let name = String::from_utf8(nb)
            .map_err(|_| Error::BadCheckpoint("tensor name is not UTF-8".into()))?;
        let mut ndim = [0u8; 1];
        read_exact(&mut r, &mut ndim)?;
        let mut len = 1usize;
        for _ in 0..ndim[0] {
            len *= read_u32(&mut r)? as usize;
        }
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            let mut b = [0u8; 4];
            read_exact(&mut r, &mut b)?;
            data.push(f32::from_le_bytes(b));
        }
        raw.insert(name, data);
    }

    let mut model = ModelParams { config: meta.config.clone(), set: ParamSet::zeros(&meta.config) };
    fill_set(&mut model.set, &raw, "p")?;

    let state = match meta.train_state {
        Some(ts) => {
            let mut m = ParamSet::zeros(&meta.config);
            let mut v = ParamSet::zeros(&meta.config);
            fill_set(&mut m, &raw, "m")?;
            fill_set(&mut v, &raw, "v")?;
            Some(TrainState { meta: ts, m, v })
        }
        None => None,
    };
    Ok((model, state))
}

fn fill_set<F: Real>(
    set: &mut ParamSet<F>,
    raw: &std::collections::BTreeMap<String, Vec<f32>>,
    prefix: &str,
) -> Result<()> {
    let names: Vec<String> =
        set.tensors().into_iter().map(|(n, _, _)| format!("{prefix}.{n}")).collect();
    for (view, name) in set.tensors_mut().into_iter().zip(names) {
        let data = raw
            .get(&name)
            .ok_or_else(|| Error::BadCheckpoint(format!("missing tensor {name}")))?;
        if data.len() != view.len() {
            return Err(Error::BadCheckpoint(format!(
                "tensor {name} has {} values, expected {}",
                data.len(),
                view.len()
            )));
        }
        for (dst, &src) in view.iter_mut().zip(data) {
            *dst = F::c(f64::from(src));
        }
    }
    Ok(())
}

fn to_f32<F: Real>(data: &[F]) -> Vec<f32> {
    data.iter().map(|v| v.as_f64() as f32).collect()
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            Error::BadCheckpoint("truncated checkpoint".into())
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    #[test]
    fn f32_round_trip_is_bit_exact() {
        let config = ModelConfig { backbone_dim: 16, latent_dim: 8, heads: 2, ..Default::default() };
        let model = init_params::<f32>(&config, 42);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &model, None).unwrap();
        let (back, state) = load_checkpoint::<f32>(&path).unwrap();
        assert!(state.is_none());
        assert_eq!(back.set, model.set);
        assert_eq!(back.config, model.config);
    }

    #[test]
    fn train_state_round_trips() {
        let config = ModelConfig { backbone_dim: 16, latent_dim: 8, heads: 2, ..Default::default() };
        let model = init_params::<f32>(&config, 1);
        let mut m = ParamSet::<f32>::zeros(&config);
        let mut v = ParamSet::<f32>::zeros(&config);
        for t in m.tensors_mut() {
            for (i, x) in t.iter_mut().enumerate() {
                *x = i as f32 * 0.01;
            }
        }
        for t in v.tensors_mut() {
            for x in t.iter_mut() {
                *x = 0.5;
            }
        }
        let state = TrainState {
            meta: TrainStateMeta {
                step: 17,
                total_steps: 100,
                epoch: 3,
                lr0: 0.001,
                loss_kind: LossKind::Cmmd,
                seed: 9,
            },
            m,
            v,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &model, Some(&state)).unwrap();
        let (back, back_state) = load_checkpoint::<f32>(&path).unwrap();
        let back_state = back_state.unwrap();
        assert_eq!(back.set, model.set);
        assert_eq!(back_state.meta.step, 17);
        assert_eq!(back_state.meta.loss_kind, LossKind::Cmmd);
        assert_eq!(back_state.m, state.m);
        assert_eq!(back_state.v, state.v);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"XXXX123456789").unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path), Err(Error::BadCheckpoint(_))));
    }
}
