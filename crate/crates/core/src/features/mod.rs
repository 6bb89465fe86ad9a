// SPDX-License-Identifier: Apache-2.0

//! Per-layer attention features and the files that hold them.

mod format;
mod manifest;
mod synthetic;
mod training_set;

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};

use crate::error::{Error, Result};

pub use format::{
    read_feature_file, write_feature_file, FeatureFile, FeatureRecord, FileKind, FORMAT_VERSION,
};
pub use manifest::{GroundTruth, Manifest, WindowTruth};
pub use synthetic::{generate_synthetic, SyntheticFeatureSource, SyntheticOutput, SyntheticSpec};
pub use training_set::{
    build_training_sets, draw_training_contexts, AttentionFeatureSource, AttentionSource,
    BuildReport, ContextMix, FeatureSource, PreparedSample,
};

/// Default feature dimension for 7-token windows (7²).
pub const DEFAULT_FEATURE_DIM: usize = 49;

/// Element-wise mean over the head axis of a `(heads, w, w)` attention stack.
pub fn mean_heads(attention: ArrayView3<'_, f64>) -> Result<Array2<f64>> {
    let (heads, rows, cols) = attention.dim();
    if heads == 0 {
        return Err(Error::validation("attention stack has no heads"));
    }
    if rows != cols {
        return Err(Error::validation(format!(
            "per-head attention must be square, got {rows}x{cols}"
        )));
    }
    Ok(attention
        .mean_axis(Axis(0))
        .expect("head axis is non-empty"))
}

/// Builds a `(heads, w, w)` array from nested vectors, rejecting ragged input.
pub fn attention_from_nested(heads: &[Vec<Vec<f64>>]) -> Result<Array3<f64>> {
    let h = heads.len();
    let w = heads.first().map_or(0, Vec::len);
    if h == 0 || w == 0 {
        return Err(Error::validation("attention stack is empty"));
    }
    let mut flat = Vec::with_capacity(h * w * w);
    for (i, head) in heads.iter().enumerate() {
        if head.len() != w || head.iter().any(|row| row.len() != w) {
            return Err(Error::validation(format!(
                "ragged attention: head {i} is not {w}x{w}"
            )));
        }
        flat.extend(head.iter().flatten());
    }
    Ok(Array3::from_shape_vec((h, w, w), flat).expect("shape checked"))
}

/// Row-major flatten, zero-padded or truncated to `target_dim`.
pub fn featurize(g: ArrayView2<'_, f64>, target_dim: usize) -> Vec<f64> {
    let mut out: Vec<f64> = g.iter().copied().take(target_dim).collect();
    out.resize(target_dim, 0.0);
    out
}
