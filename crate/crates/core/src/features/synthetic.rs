// SPDX-License-Identifier: Apache-2.0

//! Seeded stand-in for frozen-LLM attention features.
//!
//! Each layer has its own random unit direction `u`. Single-source windows
//! sit at `±separation/2 · u` (conflicting `+`, supplementary `−`), mixed
//! windows at the origin, all with isotropic Gaussian noise.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::format::{FeatureFile, FileKind};
use super::manifest::{GroundTruth, Manifest, WindowTruth};
use super::training_set::FeatureSource;
use crate::error::{Error, Result};
use crate::util::{sha256_hex, stream_rng, write_atomic};
use crate::windowing::{Source, TokenSequence, WindowSpec, DEFAULT_WINDOW_LEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_layers: usize,
    pub feature_dim: usize,
    pub n_samples: usize,
    pub held_out_samples: usize,
    pub cluster_separation: f64,
    pub noise_scale: f64,
    pub mixed_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_layers: 4,
            feature_dim: super::DEFAULT_FEATURE_DIM,
            n_samples: 2000,
            held_out_samples: 1000,
            cluster_separation: 6.0,
            noise_scale: 1.0,
            mixed_fraction: 0.5,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers < 1 {
            return Err(Error::validation("synthetic spec needs at least one layer"));
        }
        if self.feature_dim < 2 {
            return Err(Error::validation("synthetic feature_dim must be >= 2"));
        }
        if !(self.cluster_separation > 0.0 && self.cluster_separation.is_finite()) {
            return Err(Error::validation("cluster_separation must be > 0"));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::validation("noise_scale must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.mixed_fraction) {
            return Err(Error::validation("mixed_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Unit cluster axis of every layer.
    pub fn directions(&self) -> Vec<Vec<f64>> {
        (0..self.n_layers)
            .map(|n| {
                let mut rng = stream_rng(self.seed, "direction", n as u64);
                loop {
                    let v: Vec<f64> = (0..self.feature_dim)
                        .map(|_| rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 1e-8 {
                        break v.into_iter().map(|x| x / norm).collect();
                    }
                }
            })
            .collect()
    }

    fn draw_truth<R: Rng>(&self, rng: &mut R) -> WindowTruth {
        if rng.random::<f64>() < self.mixed_fraction {
            WindowTruth::Mixed
        } else if rng.random::<bool>() {
            WindowTruth::Conflicting
        } else {
            WindowTruth::Supplementary
        }
    }
}

#[derive(Debug, Clone)]
struct ClusterModel {
    directions: Vec<Vec<f64>>,
    separation: f64,
    noise: f64,
}

impl ClusterModel {
    fn new(spec: &SyntheticSpec) -> Self {
        Self {
            directions: spec.directions(),
            separation: spec.cluster_separation,
            noise: spec.noise_scale,
        }
    }

    fn sample<R: Rng>(&self, layer: usize, truth: WindowTruth, rng: &mut R) -> Vec<f64> {
        let offset = match truth {
            WindowTruth::Conflicting => 0.5 * self.separation,
            WindowTruth::Supplementary => -0.5 * self.separation,
            WindowTruth::Mixed => 0.0,
        };
        self.directions[layer]
            .iter()
            .map(|u| offset * u + self.noise * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

/// In-memory result of [`generate_synthetic`].
#[derive(Debug, Clone)]
pub struct SyntheticOutput {
    pub spec: SyntheticSpec,
    pub training: Vec<FeatureFile>,
    pub held_out: Vec<FeatureFile>,
    pub ground_truth: GroundTruth,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticOutput> {
    spec.validate()?;
    let model = ClusterModel::new(spec);
    let make = |stream: &str, count: usize| {
        let mut files: Vec<FeatureFile> = (0..spec.n_layers)
            .map(|n| FeatureFile::new(FileKind::Training, n as u32, spec.feature_dim as u32))
            .collect();
        let mut truths = Vec::with_capacity(count);
        for i in 0..count {
            let mut rng = stream_rng(spec.seed, stream, i as u64);
            let truth = spec.draw_truth(&mut rng);
            for (n, file) in files.iter_mut().enumerate() {
                let g = model.sample(n, truth, &mut rng);
                file.push(i as u64, Some(truth.label()), &g)?;
            }
            truths.push((i as u64, truth));
        }
        Ok::<_, Error>((files, truths))
    };
    let (training, _) = make("train", spec.n_samples)?;
    let (held_out, truths) = make("held_out", spec.held_out_samples)?;
    Ok(SyntheticOutput {
        spec: spec.clone(),
        training,
        held_out,
        ground_truth: GroundTruth { windows: truths },
    })
}

impl SyntheticOutput {
    /// Writes every file plus `manifest.json` into `dir`; returns the
    /// manifest and the sha256 of its bytes.
    pub fn write(&self, dir: &Path, model_name: &str) -> Result<(Manifest, String)> {
        fs::create_dir_all(dir)?;
        let mut hashes = Vec::new();
        let mut emit = |name: String, file: &FeatureFile| -> Result<String> {
            let bytes = file.to_bytes()?;
            hashes.push(sha256_hex(&bytes));
            write_atomic(&dir.join(&name), &bytes)?;
            Ok(name)
        };
        let files = self
            .training
            .iter()
            .enumerate()
            .map(|(n, f)| emit(format!("layer_{n}.svf"), f))
            .collect::<Result<Vec<_>>>()?;
        let held_out_files = self
            .held_out
            .iter()
            .enumerate()
            .map(|(n, f)| emit(format!("held_out_layer_{n}.svf"), f))
            .collect::<Result<Vec<_>>>()?;

        let truth_name = "ground_truth.json".to_string();
        write_atomic(
            &dir.join(&truth_name),
            &serde_json::to_vec(&self.ground_truth)?,
        )?;
        write_atomic(
            &dir.join("synthetic_spec.json"),
            &serde_json::to_vec_pretty(&self.spec)?,
        )?;

        let manifest = Manifest {
            model_name: model_name.to_string(),
            n_layers: self.spec.n_layers,
            feature_dim: self.spec.feature_dim,
            window_len: DEFAULT_WINDOW_LEN,
            files,
            held_out_files,
            ground_truth: Some(truth_name),
            file_hashes: hashes,
        };
        let hash = manifest.save(&dir.join("manifest.json"))?;
        Ok((manifest, hash))
    }
}

/// Features for arbitrary token windows, drawn from the same cluster model
/// as [`generate_synthetic`].
///
/// Noise is seeded from the window's tokens and tags: the same window always
/// yields the same features.
#[derive(Debug, Clone)]
pub struct SyntheticFeatureSource {
    model: ClusterModel,
    seed: u64,
    dim: usize,
}

impl SyntheticFeatureSource {
    pub fn new(spec: &SyntheticSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            model: ClusterModel::new(spec),
            seed: spec.seed,
            dim: spec.feature_dim,
        })
    }

    pub fn truth_of(seq: &TokenSequence, window: &WindowSpec) -> WindowTruth {
        if window.is_mixed(seq) {
            WindowTruth::Mixed
        } else {
            WindowTruth::from_source(seq.window_tags(window).first().copied())
        }
    }

    fn window_key(seq: &TokenSequence, window: &WindowSpec) -> u64 {
        let mut h = Sha256::new();
        for (tok, tag) in seq
            .window_tokens(window)
            .iter()
            .zip(seq.window_tags(window))
        {
            h.update(tok.as_bytes());
            h.update([0x1f, u8::from(*tag == Source::Conflicting)]);
        }
        u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
    }
}

impl FeatureSource for SyntheticFeatureSource {
    fn n_layers(&self) -> usize {
        self.model.directions.len()
    }

    fn feature_dim(&self) -> usize {
        self.dim
    }

    fn layer_features(&self, seq: &TokenSequence, window: &WindowSpec) -> Result<Vec<Vec<f64>>> {
        if window.length == 0 || window.end() > seq.len() {
            return Err(Error::validation("window outside its sequence"));
        }
        let truth = Self::truth_of(seq, window);
        let mut rng = stream_rng(self.seed, "window", Self::window_key(seq, window));
        Ok((0..self.n_layers())
            .map(|n| self.model.sample(n, truth, &mut rng))
            .collect())
    }
}
