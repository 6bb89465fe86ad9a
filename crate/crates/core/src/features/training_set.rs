// SPDX-License-Identifier: Apache-2.0

//! Training-set construction: one random window per sample, one labelled
//! record per layer.

use std::collections::BTreeMap;

use ndarray::Array3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::format::{FeatureFile, FileKind};
use super::{featurize, mean_heads};
use crate::error::{Error, Result};
use crate::util::stream_rng;
use crate::windowing::{
    interleave_mixed, label_window, random_window, CorpusRecord, Source, TokenSequence, WindowSpec,
};

/// Produces the per-layer feature vectors `G_1..G_N` of a window.
pub trait FeatureSource {
    fn n_layers(&self) -> usize;
    fn feature_dim(&self) -> usize;
    fn layer_features(&self, seq: &TokenSequence, window: &WindowSpec) -> Result<Vec<Vec<f64>>>;
}

/// Per-layer multi-head attention for a window, shape `(heads, w, w)` each.
pub trait AttentionSource {
    fn n_layers(&self) -> usize;
    fn attention(&self, seq: &TokenSequence, window: &WindowSpec) -> Result<Vec<Array3<f64>>>;
}

/// Turns raw attention into features via head averaging and flattening.
#[derive(Debug, Clone)]
pub struct AttentionFeatureSource<A> {
    inner: A,
    dim: usize,
}

impl<A: AttentionSource> AttentionFeatureSource<A> {
    pub fn new(inner: A, dim: usize) -> Self {
        Self { inner, dim }
    }
}

impl<A: AttentionSource> FeatureSource for AttentionFeatureSource<A> {
    fn n_layers(&self) -> usize {
        self.inner.n_layers()
    }

    fn feature_dim(&self) -> usize {
        self.dim
    }

    fn layer_features(&self, seq: &TokenSequence, window: &WindowSpec) -> Result<Vec<Vec<f64>>> {
        let layers = self.inner.attention(seq, window)?;
        if layers.len() != self.n_layers() {
            return Err(Error::validation(format!(
                "attention source returned {} layers, expected {}",
                layers.len(),
                self.n_layers()
            )));
        }
        layers
            .iter()
            .map(|a| Ok(featurize(mean_heads(a.view())?.view(), self.dim)))
            .collect()
    }
}

/// Which context a training sample draws: `r_c`, `r_s`, or the interleaved `r_m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextKind {
    Conflicting,
    Supplementary,
    Mixed,
}

/// Probabilities of drawing each context kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextMix {
    pub conflicting: f64,
    pub supplementary: f64,
    pub mixed: f64,
}

impl Default for ContextMix {
    /// Balanced labels: half the samples single-source, half mixed.
    fn default() -> Self {
        Self {
            conflicting: 0.25,
            supplementary: 0.25,
            mixed: 0.5,
        }
    }
}

impl ContextMix {
    pub fn with_mixed_fraction(mixed: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mixed) {
            return Err(Error::validation("mixed fraction must lie in [0, 1]"));
        }
        let single = (1.0 - mixed) / 2.0;
        Ok(Self {
            conflicting: single,
            supplementary: single,
            mixed,
        })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> ContextKind {
        let total = self.conflicting + self.supplementary + self.mixed;
        let x = rng.random::<f64>() * total;
        if x < self.mixed {
            ContextKind::Mixed
        } else if x < self.mixed + self.conflicting {
            ContextKind::Conflicting
        } else {
            ContextKind::Supplementary
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub id: String,
    pub kind: ContextKind,
    pub context: TokenSequence,
}

/// Picks one context per corpus record according to `mix`.
pub fn draw_training_contexts(
    records: &[CorpusRecord],
    mix: ContextMix,
    block: usize,
    first: Source,
    seed: u64,
) -> Result<Vec<PreparedSample>> {
    records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let mut rng = stream_rng(seed, "context_kind", i as u64);
            let kind = mix.draw(&mut rng);
            let context = match kind {
                ContextKind::Conflicting => rec.conflicting(),
                ContextKind::Supplementary => rec.supplementary(),
                ContextKind::Mixed => {
                    interleave_mixed(&rec.supplementary(), &rec.conflicting(), block, first)?
                }
            };
            Ok(PreparedSample {
                id: rec.id.clone(),
                kind,
                context,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub processed: usize,
    pub skipped: usize,
    pub per_label_counts: BTreeMap<u8, usize>,
}

/// One SVF1 file per layer; record `i` of every file comes from the same
/// window and carries the same label.
pub fn build_training_sets<F: FeatureSource + ?Sized>(
    samples: &[PreparedSample],
    source: &F,
    window_len: usize,
    seed: u64,
) -> Result<(Vec<FeatureFile>, BuildReport)> {
    if samples.is_empty() {
        return Err(Error::validation("training corpus is empty"));
    }
    let n_layers = source.n_layers();
    let dim = source.feature_dim();
    let mut files: Vec<FeatureFile> = (0..n_layers)
        .map(|n| FeatureFile::new(FileKind::Training, n as u32, dim as u32))
        .collect();
    let mut report = BuildReport::default();
    report.per_label_counts.insert(0, 0);
    report.per_label_counts.insert(1, 0);

    for (i, sample) in samples.iter().enumerate() {
        let mut rng = stream_rng(seed, "training_window", i as u64);
        let window = match random_window(&sample.context, window_len, &mut rng) {
            Ok(w) => w,
            Err(_) => {
                log::warn!(
                    "skipping sample {}: {} tokens < window length {window_len}",
                    sample.id,
                    sample.context.len()
                );
                report.skipped += 1;
                continue;
            }
        };
        let label = label_window(&sample.context, window).label;
        let features = source.layer_features(&sample.context, &window)?;
        if features.len() != n_layers {
            return Err(Error::validation(format!(
                "feature source returned {} layers, expected {n_layers}",
                features.len()
            )));
        }
        for (file, g) in files.iter_mut().zip(&features) {
            file.push(i as u64, Some(label), g)?;
        }
        report.processed += 1;
        *report.per_label_counts.entry(label).or_default() += 1;
    }
    Ok((files, report))
}
