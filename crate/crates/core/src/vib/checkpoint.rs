// SPDX-License-Identifier: Apache-2.0

//! SVM1 model checkpoints.
//!
//! ```text
//! magic "SVM1" | version u32 | D u32 | hidden u32 | latent u32 | dec1 u32 | dec2 u32 | dropout f64
//! 15 parameter tensors, f64, in `TENSOR_NAMES` order, row-major
//! 3 × (running mean, running var), f64
//! ```
//! Little-endian throughout.

use std::fs;
use std::path::Path;

use ndarray::Array1;

use super::model::{Architecture, Mode, RunningStats, VibModel, VibParams};
use crate::error::{Error, Result};
use crate::util::write_atomic;

pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 6 + 8;

pub fn checkpoint_bytes(model: &VibModel) -> Vec<u8> {
    let a = &model.arch;
    let mut out = Vec::new();
    out.extend_from_slice(b"SVM1");
    for v in [
        CHECKPOINT_VERSION,
        a.input_dim as u32,
        a.hidden as u32,
        a.latent as u32,
        a.decoder_hidden[0] as u32,
        a.decoder_hidden[1] as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&a.dropout.to_le_bytes());
    let stats = model.running.iter().flat_map(|r| [&r.mean, &r.var]);
    for t in model
        .params
        .tensors()
        .into_iter()
        .chain(stats.map(|a| a.as_slice().unwrap()))
    {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            Error::format(
                "payload",
                format!("checkpoint truncated at byte {}", self.bytes.len()),
            )
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn fill(&mut self, dst: &mut [f64]) -> Result<()> {
        let src = self.take(8 * dst.len())?;
        for (d, b) in dst.iter_mut().zip(src.chunks_exact(8)) {
            *d = f64::from_le_bytes(b.try_into().unwrap());
        }
        Ok(())
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<VibModel> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(
            "header",
            "checkpoint shorter than its header",
        ));
    }
    if &bytes[0..4] != b"SVM1" {
        return Err(Error::format(
            "magic",
            format!("bad magic {:?}", String::from_utf8_lossy(&bytes[0..4])),
        ));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let version = u32_at(4) as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            "version",
            format!("unsupported version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let arch = Architecture {
        input_dim: u32_at(8),
        hidden: u32_at(12),
        latent: u32_at(16),
        decoder_hidden: [u32_at(20), u32_at(24)],
        dropout: f64::from_le_bytes(bytes[28..36].try_into().unwrap()),
    };
    arch.validate()
        .map_err(|e| Error::format("architecture", e.to_string()))?;

    let mut params = VibParams::zeros(&arch);
    let mut reader = Reader {
        bytes,
        pos: HEADER_LEN,
    };
    for t in params.tensors_mut() {
        reader.fill(t)?;
    }
    let mut running = Vec::new();
    for width in [arch.hidden, arch.decoder_hidden[0], arch.decoder_hidden[1]] {
        let mut mean = Array1::zeros(width);
        let mut var = Array1::zeros(width);
        reader.fill(mean.as_slice_mut().unwrap())?;
        reader.fill(var.as_slice_mut().unwrap())?;
        running.push(RunningStats { mean, var });
    }
    if reader.pos != bytes.len() {
        return Err(Error::format(
            "payload",
            format!(
                "{} trailing bytes after checkpoint",
                bytes.len() - reader.pos
            ),
        ));
    }
    let model = VibModel {
        arch,
        params,
        running: running.try_into().expect("three stages"),
        mode: Mode::Inference,
    };
    if !model.is_finite() {
        return Err(Error::format(
            "payload",
            "checkpoint holds non-finite values",
        ));
    }
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &VibModel) -> Result<()> {
    write_atomic(path, &checkpoint_bytes(model))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<VibModel> {
    checkpoint_from_bytes(&fs::read(path)?)
}
