// SPDX-License-Identifier: Apache-2.0

//! Inference-time window filtering and prompt assembly.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureFile, FeatureSource, FileKind};
use crate::util::write_atomic;
use crate::vib::{checkpoint_bytes, load_checkpoint, VibModel};
use crate::windowing::{sliding_windows, TokenSequence, WindowSpec, DEFAULT_WINDOW_LEN};

pub const DEFAULT_XI: f64 = 0.68;

/// Per-layer bottlenecks plus aggregation weights and the acceptance threshold.
#[derive(Debug, Clone)]
pub struct LayerEnsemble {
    models: Vec<VibModel>,
    /// `None` means uniform `1/N`.
    weights: Option<Vec<f64>>,
    xi: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EnsembleFile {
    xi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    models: Vec<String>,
}

impl LayerEnsemble {
    pub fn new(models: Vec<VibModel>, xi: f64) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::validation("ensemble needs at least one model"))?;
        let (d, l) = (first.input_dim(), first.latent_dim());
        if models
            .iter()
            .any(|m| m.input_dim() != d || m.latent_dim() != l)
        {
            return Err(Error::validation("all ensemble models must share D and L"));
        }
        let mut e = Self {
            models,
            weights: None,
            xi: 0.5,
        };
        e.set_xi(xi)?;
        Ok(e)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.models.len() {
            return Err(Error::validation(format!(
                "{} weights for {} layers",
                weights.len(),
                self.models.len()
            )));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| w.is_nan() || *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "layer weights must be non-negative and sum to 1 (sum = {sum})"
            )));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    /// Thresholds in `[0, 1]` are accepted; 0 admits every window.
    pub fn set_xi(&mut self, xi: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::validation(format!("threshold {xi} outside [0, 1]")));
        }
        self.xi = xi;
        Ok(())
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn n_layers(&self) -> usize {
        self.models.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.models[0].input_dim()
    }

    pub fn models(&self) -> &[VibModel] {
        &self.models
    }

    pub fn weights(&self) -> Vec<f64> {
        self.weights
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.models.len() as f64; self.models.len()])
    }

    /// Weighted mean of per-layer probabilities; an exact arithmetic mean
    /// for uniform weights.
    pub fn aggregate(&self, per_layer: &[f64]) -> f64 {
        match &self.weights {
            None => per_layer.iter().sum::<f64>() / per_layer.len() as f64,
            Some(w) => per_layer.iter().zip(w).map(|(p, w)| p * w).sum(),
        }
    }

    pub fn decide(&self, window: WindowSpec, per_layer_probs: Vec<f64>) -> FilterDecision {
        let p_hat = self.aggregate(&per_layer_probs);
        FilterDecision {
            window,
            per_layer_probs,
            p_hat,
            accepted: p_hat >= self.xi,
        }
    }

    /// Writes `ensemble.json` and one SVM1 file per layer into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut names = Vec::new();
        for (n, m) in self.models.iter().enumerate() {
            let name = format!("layer_{n}.svm");
            write_atomic(&dir.join(&name), &checkpoint_bytes(m))?;
            names.push(name);
        }
        let meta = EnsembleFile {
            xi: self.xi,
            weights: self.weights.clone(),
            models: names,
        };
        write_atomic(
            &dir.join("ensemble.json"),
            &serde_json::to_vec_pretty(&meta)?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: EnsembleFile = serde_json::from_slice(&fs::read(dir.join("ensemble.json"))?)
            .map_err(|e| Error::format("ensemble", e.to_string()))?;
        let models = meta
            .models
            .iter()
            .map(|m| load_checkpoint(&dir.join(m)))
            .collect::<Result<Vec<_>>>()?;
        let e = Self::new(models, meta.xi)?;
        match meta.weights {
            Some(w) => e.with_weights(w),
            None => Ok(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterDecision {
    #[serde(flatten)]
    pub window: WindowSpec,
    pub per_layer_probs: Vec<f64>,
    pub p_hat: f64,
    pub accepted: bool,
}

impl FilterDecision {
    /// One JSON-lines record: the window's `start`, `length` and
    /// `window_index`, then `per_layer_probs`, `p_hat` and `accepted`.
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Scores one window from its `N` per-layer feature vectors using the
/// latent mean (no sampling).
pub fn score_window(
    ensemble: &LayerEnsemble,
    window: WindowSpec,
    features: &[Vec<f64>],
) -> Result<FilterDecision> {
    Ok(score_windows(ensemble, &[window], &[features.to_vec()])?.remove(0))
}

/// Batched [`score_window`]: one matrix product per layer for all windows.
pub fn score_windows(
    ensemble: &LayerEnsemble,
    windows: &[WindowSpec],
    features: &[Vec<Vec<f64>>],
) -> Result<Vec<FilterDecision>> {
    if windows.len() != features.len() {
        return Err(Error::validation("one feature set per window required"));
    }
    if windows.is_empty() {
        return Ok(Vec::new());
    }
    let n = ensemble.n_layers();
    let d = ensemble.feature_dim();
    if let Some(bad) = features.iter().find(|f| f.len() != n) {
        return Err(Error::validation(format!(
            "got features for {} layers, ensemble has {n}",
            bad.len()
        )));
    }
    let mut probs = vec![Vec::with_capacity(n); windows.len()];
    for (layer, model) in ensemble.models.iter().enumerate() {
        let mut x = Array2::zeros((windows.len(), d));
        for (row, f) in features.iter().enumerate() {
            let g = &f[layer];
            if g.len() != d {
                return Err(Error::validation(format!(
                    "layer {layer} feature has dimension {}, expected {d}",
                    g.len()
                )));
            }
            x.row_mut(row)
                .iter_mut()
                .zip(g)
                .for_each(|(dst, v)| *dst = *v);
        }
        let p = model.predict_batch(x.view())?;
        for (row, v) in p.iter().enumerate() {
            probs[row].push(*v);
        }
    }
    Ok(windows
        .iter()
        .zip(probs)
        .map(|(w, p)| ensemble.decide(*w, p))
        .collect())
}

/// Features read from SVQ1 files, one per layer, keyed by window index.
#[derive(Debug, Clone)]
pub struct PrecomputedSource {
    dim: usize,
    by_window: HashMap<u64, Vec<Vec<f64>>>,
    n_layers: usize,
}

impl PrecomputedSource {
    /// `files` must be ordered by layer and carry the same window references.
    pub fn new(files: &[FeatureFile]) -> Result<Self> {
        let first = files
            .first()
            .ok_or_else(|| Error::validation("no inference feature files"))?;
        let dim = first.feature_dim as usize;
        let mut by_window: HashMap<u64, Vec<Vec<f64>>> = HashMap::new();
        for (n, f) in files.iter().enumerate() {
            if f.kind != FileKind::Inference {
                return Err(Error::validation(format!(
                    "layer {n} file is not an inference (SVQ1) file"
                )));
            }
            if f.layer_index as usize != n || f.feature_dim as usize != dim {
                return Err(Error::validation(format!(
                    "file {n} has layer_index {} and D = {}, expected {n} and {dim}",
                    f.layer_index, f.feature_dim
                )));
            }
            if f.records.len() != first.records.len() {
                return Err(Error::validation(
                    "inference files disagree on record count",
                ));
            }
            for r in &f.records {
                let slot = by_window.entry(r.window_ref).or_default();
                if slot.len() != n {
                    return Err(Error::validation(format!(
                        "window_ref {} missing or repeated in layer {n}",
                        r.window_ref
                    )));
                }
                slot.push(r.features.iter().map(|v| f64::from(*v)).collect());
            }
        }
        Ok(Self {
            dim,
            by_window,
            n_layers: files.len(),
        })
    }
}

impl FeatureSource for PrecomputedSource {
    fn n_layers(&self) -> usize {
        self.n_layers
    }

    fn feature_dim(&self) -> usize {
        self.dim
    }

    fn layer_features(&self, _: &TokenSequence, window: &WindowSpec) -> Result<Vec<Vec<f64>>> {
        self.by_window
            .get(&(window.window_index as u64))
            .filter(|v| v.len() == self.n_layers)
            .cloned()
            .ok_or_else(|| {
                Error::validation(format!(
                    "no precomputed features for window {}",
                    window.window_index
                ))
            })
    }
}

/// What to keep when no window clears the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackPolicy {
    /// Keep the single highest-scoring window.
    #[default]
    KeepTop1,
    /// Send the query with no context.
    EmptyContext,
    /// Keep the whole context unfiltered.
    PassThrough,
}

impl FromStr for FallbackPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "keep-top-1" => Ok(Self::KeepTop1),
            "empty-context" => Ok(Self::EmptyContext),
            "pass-through" => Ok(Self::PassThrough),
            other => Err(Error::validation(format!(
                "unknown fallback policy {other:?} (keep-top-1 | empty-context | pass-through)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub window_len: usize,
    pub stride: usize,
    pub fallback: FallbackPolicy,
    pub separator: String,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            window_len: DEFAULT_WINDOW_LEN,
            stride: DEFAULT_WINDOW_LEN,
            fallback: FallbackPolicy::default(),
            separator: " ".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    pub decisions: Vec<FilterDecision>,
    /// Windows kept in the prompt, in context order (after any fallback).
    pub kept: Vec<WindowSpec>,
    pub fallback_used: bool,
    pub prompt: String,
}

/// `query ⊕ kept windows`, in context order. Tokens covered by more than
/// one kept window (overlapping strides) are emitted once.
pub fn assemble_prompt(
    query: &str,
    context: &TokenSequence,
    kept: &[WindowSpec],
    separator: &str,
) -> String {
    let mut parts = vec![query.to_string()];
    let mut next_free = 0;
    for w in kept {
        let from = w.start.max(next_free);
        if from >= w.end() {
            continue;
        }
        parts.push(context.tokens()[from..w.end()].join(" "));
        next_free = w.end();
    }
    parts.join(separator)
}

pub fn filter_context<F: FeatureSource + ?Sized>(
    ensemble: &LayerEnsemble,
    query: &str,
    context: &TokenSequence,
    source: &F,
    cfg: &FilterConfig,
) -> Result<FilterResult> {
    if context.is_empty() {
        return Err(Error::validation("context is empty"));
    }
    if source.n_layers() != ensemble.n_layers() || source.feature_dim() != ensemble.feature_dim() {
        return Err(Error::validation(format!(
            "feature source yields {} layers x {} dims, ensemble expects {} x {}",
            source.n_layers(),
            source.feature_dim(),
            ensemble.n_layers(),
            ensemble.feature_dim()
        )));
    }
    let windows = sliding_windows(context.len(), cfg.window_len, cfg.stride)?;
    let features = windows
        .iter()
        .map(|w| source.layer_features(context, w))
        .collect::<Result<Vec<_>>>()?;
    let decisions = score_windows(ensemble, &windows, &features)?;
    let mut kept: Vec<WindowSpec> = decisions
        .iter()
        .filter(|d| d.accepted)
        .map(|d| d.window)
        .collect();
    let fallback_used = kept.is_empty();
    if fallback_used {
        kept = match cfg.fallback {
            FallbackPolicy::KeepTop1 => decisions
                .iter()
                .reduce(|best, d| if d.p_hat > best.p_hat { d } else { best })
                .map(|d| vec![d.window])
                .unwrap_or_default(),
            FallbackPolicy::EmptyContext => Vec::new(),
            FallbackPolicy::PassThrough => windows.clone(),
        };
    }
    let prompt = assemble_prompt(query, context, &kept, &cfg.separator);
    Ok(FilterResult {
        decisions,
        kept,
        fallback_used,
        prompt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vib::Architecture;
    use crate::windowing::Source;

    struct ConstSource {
        layers: usize,
        dim: usize,
    }

    impl FeatureSource for ConstSource {
        fn n_layers(&self) -> usize {
            self.layers
        }
        fn feature_dim(&self) -> usize {
            self.dim
        }
        fn layer_features(&self, _: &TokenSequence, w: &WindowSpec) -> Result<Vec<Vec<f64>>> {
            Ok(vec![vec![w.start as f64; self.dim]; self.layers])
        }
    }

    fn arch() -> Architecture {
        Architecture {
            input_dim: 3,
            hidden: 4,
            latent: 2,
            decoder_hidden: [3, 2],
            dropout: 0.5,
        }
    }

    /// Zero network whose output bias fixes every probability.
    fn const_model(logit: f64) -> VibModel {
        let mut m = VibModel::zeroed(arch());
        m.params.out_b[0] = logit;
        m
    }

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    fn window(i: usize) -> WindowSpec {
        WindowSpec {
            start: 7 * i,
            length: 7,
            window_index: i,
        }
    }

    fn ctx(n: usize) -> TokenSequence {
        TokenSequence::single_source((0..n).map(|i| format!("t{i}")), Source::Conflicting)
    }

    #[test]
    fn aggregate_and_threshold() {
        let e = LayerEnsemble::new(vec![const_model(0.0); 3], DEFAULT_XI).unwrap();
        let d = e.decide(window(0), vec![0.9, 0.5, 0.7]);
        assert!((d.p_hat - 0.7).abs() < 1e-15);
        assert!(d.accepted);

        let e2 = LayerEnsemble::new(vec![const_model(0.0); 2], 0.68).unwrap();
        assert!(e2.decide(window(0), vec![0.68, 0.68]).accepted);
        assert!(!e2.decide(window(0), vec![0.68, 0.6799999]).accepted);
    }

    #[test]
    fn zero_models_reject_at_default_threshold() {
        let e = LayerEnsemble::new(vec![const_model(0.0); 3], DEFAULT_XI).unwrap();
        let d = score_window(&e, window(0), &vec![vec![1.0, 2.0, 3.0]; 3]).unwrap();
        assert_eq!(d.per_layer_probs, vec![0.5; 3]);
        assert_eq!(d.p_hat, 0.5);
        assert!(!d.accepted);
        assert!(score_window(&e, window(0), &vec![vec![1.0, 2.0, 3.0]; 2]).is_err());
        assert!(score_window(&e, window(0), &vec![vec![1.0]; 3]).is_err());
    }

    #[test]
    fn weights_are_validated_and_applied() {
        let models = vec![const_model(logit(0.9)), const_model(logit(0.1))];
        let e = LayerEnsemble::new(models.clone(), 0.5).unwrap();
        assert!(e.clone().with_weights(vec![0.5, 0.6]).is_err());
        assert!(e.clone().with_weights(vec![1.0]).is_err());
        let e = e.with_weights(vec![0.75, 0.25]).unwrap();
        let d = score_window(&e, window(0), &vec![vec![0.0; 3]; 2]).unwrap();
        assert!((d.p_hat - 0.7).abs() < 1e-12);
        assert!(LayerEnsemble::new(vec![], 0.5).is_err());
        assert!(LayerEnsemble::new(models, 1.5).is_err());
    }

    #[test]
    fn filter_identity_when_everything_passes() {
        let e = LayerEnsemble::new(vec![const_model(3.0); 2], DEFAULT_XI).unwrap();
        let c = ctx(20);
        let r = filter_context(
            &e,
            "Q?",
            &c,
            &ConstSource { layers: 2, dim: 3 },
            &FilterConfig::default(),
        )
        .unwrap();
        assert_eq!(r.decisions.len(), 3);
        assert_eq!(r.kept.len(), 3);
        assert!(!r.fallback_used);
        assert_eq!(r.prompt, format!("Q? {}", c.tokens().join(" ")));
    }

    #[test]
    fn fallback_policies() {
        let e = LayerEnsemble::new(vec![const_model(0.0); 2], 0.99).unwrap();
        let src = ConstSource { layers: 2, dim: 3 };
        let c = ctx(15);
        let run = |fallback| {
            let cfg = FilterConfig {
                fallback,
                ..FilterConfig::default()
            };
            filter_context(&e, "Q", &c, &src, &cfg).unwrap()
        };
        let top = run(FallbackPolicy::KeepTop1);
        assert!(top.fallback_used);
        assert_eq!(top.kept, vec![top.decisions[0].window]);
        assert_eq!(run(FallbackPolicy::EmptyContext).prompt, "Q");
        assert_eq!(run(FallbackPolicy::PassThrough).kept.len(), 3);
        assert_eq!(
            "pass-through".parse::<FallbackPolicy>().unwrap(),
            FallbackPolicy::PassThrough
        );
        assert!("drop".parse::<FallbackPolicy>().is_err());
    }

    #[test]
    fn overlapping_windows_do_not_duplicate_tokens() {
        let c = ctx(6);
        let kept = [
            WindowSpec {
                start: 0,
                length: 4,
                window_index: 0,
            },
            WindowSpec {
                start: 2,
                length: 4,
                window_index: 1,
            },
        ];
        assert_eq!(
            assemble_prompt("Q", &c, &kept, " | "),
            "Q | t0 t1 t2 t3 | t4 t5"
        );
    }

    #[test]
    fn ensemble_persists() {
        let e = LayerEnsemble::new(
            vec![
                VibModel::seeded(arch(), 1).unwrap(),
                VibModel::seeded(arch(), 2).unwrap(),
            ],
            0.6,
        )
        .unwrap()
        .with_weights(vec![0.25, 0.75])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        e.save(dir.path()).unwrap();
        let back = LayerEnsemble::load(dir.path()).unwrap();
        assert_eq!(back.models(), e.models());
        assert_eq!(back.weights(), vec![0.25, 0.75]);
        assert_eq!(back.xi(), 0.6);
    }

    #[test]
    fn precomputed_source_lookup() {
        let mut files = Vec::new();
        for n in 0..2u32 {
            let mut f = FeatureFile::new(FileKind::Inference, n, 3);
            for w in 0..3u64 {
                f.push(w, None, &[w as f64, f64::from(n), 0.5]).unwrap();
            }
            files.push(f);
        }
        let src = PrecomputedSource::new(&files).unwrap();
        let c = ctx(21);
        let g = src.layer_features(&c, &window(2)).unwrap();
        assert_eq!(g, vec![vec![2.0, 0.0, 0.5], vec![2.0, 1.0, 0.5]]);
        assert!(src.layer_features(&c, &window(5)).is_err());
        files[1].layer_index = 0;
        assert!(PrecomputedSource::new(&files).is_err());
    }

    #[test]
    fn decision_json_line() {
        let e = LayerEnsemble::new(vec![const_model(0.0); 2], 0.5).unwrap();
        let d = e.decide(window(4), vec![0.5, 1.0]);
        let v: serde_json::Value = serde_json::from_str(&d.to_json_line().unwrap()).unwrap();
        assert_eq!(v["window_index"], 4);
        assert_eq!(
            (v["start"].as_u64(), v["length"].as_u64()),
            (Some(28), Some(7))
        );
        assert_eq!(v["p_hat"], 0.75);
        assert_eq!(v["accepted"], true);
    }
}
