//! Binary parameter snapshots.
//!
//! Layout: the 8-byte magic `DIBCKPT\0`, a little-endian `u32` format
//! version, a little-endian `u64` header length, a JSON header, then every
//! parameter tensor as raw little-endian `f64` in store order.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{DibModel, ModelConfig, PredictionHead};
use crate::error::{Error, Result};
use crate::math::{SeededRng, Tensor};

const MAGIC: &[u8; 8] = b"DIBCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Training context stored alongside the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub step: u64,
    pub beta: f64,
    /// Summed channel KL in bits on the validation split at this step.
    pub kl_total_bits: f64,
    pub schema_hash: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: CheckpointMeta,
    config: ModelConfig,
    input_widths: Vec<usize>,
    head: PredictionHead,
    shapes: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: DibModel,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let store = self.model.params();
        let header = Header {
            meta: self.meta.clone(),
            config: self.model.config().clone(),
            input_widths: self.model.input_widths().to_vec(),
            head: self.model.head(),
            shapes: store.tensors().iter().map(|t| t.shape().to_vec()).collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + json.len() + 8 * store.parameter_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in store.tensors() {
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..).ok_or_else(|| bad("truncated"))?;
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let mut raw = &body[hlen..];
        let mut tensors = Vec::with_capacity(header.shapes.len());
        for shape in header.shapes {
            let n: usize = shape.iter().product();
            if raw.len() < 8 * n {
                return Err(bad("truncated weights"));
            }
            let data = raw[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            raw = &raw[8 * n..];
            tensors.push(Tensor::new(shape, data)?);
        }
        if !raw.is_empty() {
            return Err(bad("trailing bytes after weights"));
        }
        // The layout is rebuilt from the header; initial values are discarded.
        let mut model = DibModel::new(
            header.config,
            header.input_widths,
            header.head,
            &mut SeededRng::seed_from_u64(0),
        )?;
        model.load_params(tensors)?;
        Ok(Self {
            meta: header.meta,
            model,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
