//! The MODW model checkpoint container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "MODW" | u16 version | u8 dtype | u32 spec_len | spec text |
//! u32 meta_len | meta TOML | u32 tensor_count | tensors |
//! u8 has_optimizer | [u32 epochs_done | u32 velocity_count | velocities |
//! u32 history_len | history TOML] | 32-byte SHA-256
//! ```
//!
//! Tensors are `u8 ndim | ndim x u32 dims | data` in declaration order
//! (parameters and batch-norm running statistics). The dtype byte is 0 for
//! f32 and 1 for f64; the 64-bit form exists so reference-mode training can
//! resume bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::build_by_id;
use crate::nn::{DType, ModelGraph, Real, SgdMomentum, Tensor};
use crate::siggen::{GeneratorProfile, ModulationClass};
use crate::trainer::TrainHistory;

const MODW_MAGIC: [u8; 4] = *b"MODW";
pub const MODW_VERSION: u16 = 1;

/// Provenance stored beside the weights: which architecture, which classes,
/// and which generation profile the training data came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model_id: String,
    pub num_classes: usize,
    pub classes: Vec<ModulationClass>,
    pub train_dataset_id: String,
    pub train_profile: GeneratorProfile,
}

/// Optimizer section of a training checkpoint.
#[derive(Debug, Clone)]
pub struct OptimizerState<F> {
    pub epochs_done: usize,
    pub velocities: Vec<Tensor<F>>,
    pub history: TrainHistory,
}

/// A fully decoded checkpoint: the model is rebuilt from its id and loaded
/// with the stored state.
pub struct Checkpoint<F> {
    pub meta: CheckpointMeta,
    pub model: ModelGraph<F>,
    pub optimizer: Option<OptimizerState<F>>,
}

fn push_tensor<F: Real>(out: &mut Vec<u8>, t: &Tensor<F>) {
    out.push(t.shape().len() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(out);
    }
}

/// Serialize a model (and optionally its optimizer state) to `path`.
pub fn save_checkpoint<F: Real>(
    path: &Path,
    model: &ModelGraph<F>,
    meta: &CheckpointMeta,
    optimizer: Option<(&SgdMomentum<F>, usize, &TrainHistory)>,
) -> Result<()> {
    let spec = model.spec_string();
    let meta_text = toml::to_string(meta).map_err(|e| Error::Parse(e.to_string()))?;

    let mut out = Vec::new();
    out.extend_from_slice(&MODW_MAGIC);
    out.extend_from_slice(&MODW_VERSION.to_le_bytes());
    out.push(F::DTYPE.code());
    out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    out.extend_from_slice(spec.as_bytes());
    out.extend_from_slice(&(meta_text.len() as u32).to_le_bytes());
    out.extend_from_slice(meta_text.as_bytes());

    let state = model.state_snapshot();
    out.extend_from_slice(&(state.len() as u32).to_le_bytes());
    for t in &state {
        push_tensor(&mut out, t);
    }

    match optimizer {
        None => out.push(0),
        Some((opt, epochs_done, history)) => {
            out.push(1);
            out.extend_from_slice(&(epochs_done as u32).to_le_bytes());
            out.extend_from_slice(&(opt.velocities().len() as u32).to_le_bytes());
            for v in opt.velocities() {
                push_tensor(&mut out, v);
            }
            let hist_text =
                toml::to_string(history).map_err(|e| Error::Parse(e.to_string()))?;
            out.extend_from_slice(&(hist_text.len() as u32).to_le_bytes());
            out.extend_from_slice(hist_text.as_bytes());
        }
    }

    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    std::fs::write(path, out)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Truncated);
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn text(&mut self) -> Result<&'a str> {
        let len = self.u32()? as usize;
        std::str::from_utf8(self.take(len)?).map_err(|e| Error::Parse(format!("not UTF-8: {e}")))
    }

    fn tensor<F: Real>(&mut self) -> Result<Tensor<F>> {
        let ndim = self.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let width = F::DTYPE.byte_width();
        let raw = self.take(numel * width)?;
        let data = raw.chunks_exact(width).map(F::read_le).collect();
        Tensor::from_vec(&shape, data)
    }
}

/// Peek at a checkpoint's scalar width without decoding it.
pub fn peek_dtype(path: &Path) -> Result<DType> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 7 {
        return Err(Error::Truncated);
    }
    if bytes[0..4] != MODW_MAGIC {
        return Err(Error::BadMagic { expected: "MODW", found: bytes[0..4].try_into().unwrap() });
    }
    DType::from_code(bytes[6])
}

/// Load and validate a checkpoint: magic, version, checksum, dtype, and the
/// stored layer spec against a freshly rebuilt model.
pub fn load_checkpoint<F: Real>(path: &Path) -> Result<Checkpoint<F>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 4 + 2 + 1 + 32 {
        return Err(Error::Truncated);
    }
    let mut cur = Cursor { buf: &bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4)?.try_into().unwrap();
    if magic != MODW_MAGIC {
        return Err(Error::BadMagic { expected: "MODW", found: magic });
    }
    let version = cur.u16()?;
    if version != MODW_VERSION {
        return Err(Error::UnsupportedVersion { expected: MODW_VERSION, found: version });
    }
    let payload_end = bytes.len() - 32;
    let digest = Sha256::digest(&bytes[..payload_end]);
    if digest[..] != bytes[payload_end..] {
        return Err(Error::ChecksumMismatch);
    }

    let dtype = DType::from_code(cur.u8()?)?;
    if dtype != F::DTYPE {
        return Err(Error::StructuralMismatch(format!(
            "checkpoint holds {dtype:?} tensors, loader expects {:?}",
            F::DTYPE
        )));
    }
    let spec = cur.text()?.to_string();
    let meta: CheckpointMeta =
        toml::from_str(cur.text()?).map_err(|e| Error::Parse(e.to_string()))?;

    let mut model = build_by_id::<F>(&meta.model_id, meta.num_classes)?;
    if model.spec_string() != spec {
        return Err(Error::StructuralMismatch(format!(
            "stored layer spec does not match a freshly built {:?} model",
            meta.model_id
        )));
    }

    let tensor_count = cur.u32()? as usize;
    let mut state = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        state.push(cur.tensor::<F>()?);
    }
    model.load_state(&state)?;

    let optimizer = if cur.u8()? == 1 {
        let epochs_done = cur.u32()? as usize;
        let vel_count = cur.u32()? as usize;
        let mut velocities = Vec::with_capacity(vel_count);
        for _ in 0..vel_count {
            velocities.push(cur.tensor::<F>()?);
        }
        let history: TrainHistory =
            toml::from_str(cur.text()?).map_err(|e| Error::Parse(e.to_string()))?;
        Some(OptimizerState { epochs_done, velocities, history })
    } else {
        None
    };

    Ok(Checkpoint { meta, model, optimizer })
}
