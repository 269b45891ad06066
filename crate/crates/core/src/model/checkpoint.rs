//! Binary checkpoints.
//!
//! Layout: magic `DOCIECKP`, format version (u32 LE), header length (u64 LE),
//! a JSON header with the model config, task fields and tensor directory,
//! then every tensor as little-endian f32 in directory order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::forward::TaggerModel;
use super::params::Params;
use super::{ModelConfig, Scalar};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"DOCIECKP";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    /// Field order of the tag scheme the tag head was trained for; empty for
    /// a pre-trained body.
    #[serde(default)]
    pub fields: Vec<String>,
    #[serde(default)]
    pub steps: usize,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub meta: CheckpointMeta,
    pub model: TaggerModel<T>,
}

pub fn write_checkpoint<T: Scalar>(mut w: impl Write, model: &TaggerModel<T>, fields: &[String], steps: usize) -> Result<()> {
    let header = Header {
        meta: CheckpointMeta {
            model: model.config.clone(),
            fields: fields.to_vec(),
            steps,
        },
        tensors: model
            .params
            .tensors()
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for t in model.params.tensors() {
        for v in &t.data {
            w.write_all(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<T: Scalar>(r: impl Read) -> Result<Checkpoint<T>> {
    let mut r = BufReader::new(r);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a docie checkpoint".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    header.meta.model.validate()?;
    let mut params = Params::<T>::init(&header.meta.model, 0);
    let tensors = params.tensors_mut();
    if tensors.len() != header.tensors.len() {
        return Err(Error::Format(format!(
            "checkpoint lists {} tensors, config implies {}",
            header.tensors.len(),
            tensors.len()
        )));
    }
    for (t, entry) in tensors.into_iter().zip(&header.tensors) {
        if t.name != entry.name || t.shape != entry.shape {
            return Err(Error::Format(format!(
                "tensor {} {:?} does not match expected {} {:?}",
                entry.name, entry.shape, t.name, t.shape
            )));
        }
        for v in t.data.iter_mut() {
            r.read_exact(&mut word)?;
            *v = T::from_f32(f32::from_le_bytes(word)).unwrap();
        }
    }
    if r.read(&mut word)? != 0 {
        return Err(Error::Format("trailing bytes after the last tensor".into()));
    }
    Ok(Checkpoint {
        model: TaggerModel {
            config: header.meta.model.clone(),
            params,
        },
        meta: header.meta,
    })
}

pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, model: &TaggerModel<T>, fields: &[String], steps: usize) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), model, fields, steps)
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    read_checkpoint(File::open(path)?)
}
