// SPDX-License-Identifier: Apache-2.0

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{gather_rows, Architecture, Mode, VibModel, VibParams, TENSOR_NAMES};
use crate::error::{Error, Result};
use crate::features::FeatureFile;
use crate::metrics::roc_auc;
use crate::util::{derive_seed, stream_rng};

pub const WD_DEFAULT: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub folds: usize,
    /// Reparameterization draws per example per step.
    pub latent_samples: usize,
    /// Decoupled decay applied to the weight matrices only.
    pub weight_decay: f64,
    /// After cross-validation, retrain on every record for the mean best
    /// epoch count and deploy that model instead of the best fold model.
    pub refit: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 1e-5,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 64,
            seed: 0,
            folds: 2,
            latent_samples: 1,
            weight_decay: WD_DEFAULT,
            refit: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::validation("beta must be finite and > 0"));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::validation("learning rate must be > 0"));
        }
        if self.epochs < 1 {
            return Err(Error::validation("epochs must be >= 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::validation(
                "batch size must be >= 2 for batch normalization",
            ));
        }
        if self.folds < 2 {
            return Err(Error::validation("cross-validation needs >= 2 folds"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::validation("weight decay must be finite and >= 0"));
        }
        if self.latent_samples < 1 {
            return Err(Error::validation("latent_samples must be >= 1"));
        }
        Ok(())
    }
}

/// First-order adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: i32,
    m: VibParams,
    v: VibParams,
}

impl Adam {
    pub fn new(arch: &Architecture, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            step: 0,
            m: VibParams::zeros(arch),
            v: VibParams::zeros(arch),
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn update(&mut self, params: &mut VibParams, grads: &VibParams) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for ((((p, g), m), v), name) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(TENSOR_NAMES)
        {
            let decay = if name.ends_with("_w") {
                lr * self.weight_decay
            } else {
                0.0
            };
            for i in 0..p.len() {
                p[i] -= decay * p[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

/// One row of the loss trace. Losses are example-weighted means over the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub fold: usize,
    pub epoch: usize,
    pub bce: f64,
    pub kl: f64,
    pub total: f64,
    pub fold_auc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The deployed model, in inference mode: the full-data refit, or with
    /// `refit` off the fold model with the best validation AUC. Each fold
    /// keeps the parameters of its best validation epoch.
    pub model: VibModel,
    pub trace: Vec<EpochRecord>,
    /// Best validation AUC reached by each fold.
    pub fold_aucs: Vec<f64>,
    /// Fold whose model is deployed when no refit runs.
    pub selected_fold: usize,
    /// Epochs of the full-data refit; its trace rows carry `fold == folds`.
    pub refit_epochs: Option<usize>,
}

impl TrainOutcome {
    pub fn mean_auc(&self) -> f64 {
        self.fold_aucs.iter().sum::<f64>() / self.fold_aucs.len() as f64
    }

    /// Loss trace of one fold, in epoch order.
    pub fn fold_trace(&self, fold: usize) -> Vec<EpochRecord> {
        self.trace
            .iter()
            .filter(|r| r.fold == fold)
            .copied()
            .collect()
    }
}

/// Features as a 64-bit matrix plus labels.
pub fn dataset(file: &FeatureFile) -> Result<(Array2<f64>, Vec<u8>)> {
    let d = file.feature_dim as usize;
    let mut x = Array2::zeros((file.records.len(), d));
    let mut y = Vec::with_capacity(file.records.len());
    for (i, r) in file.records.iter().enumerate() {
        let label = r
            .label
            .ok_or_else(|| Error::validation(format!("record {i} has no label")))?;
        for (dst, &v) in x.row_mut(i).iter_mut().zip(&r.features) {
            *dst = f64::from(v);
        }
        y.push(label);
    }
    Ok((x, y))
}

/// Class-stratified fold assignment.
fn assign_folds(labels: &[u8], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream_rng(seed, "folds", 0);
    let mut fold_of = vec![0; labels.len()];
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold_of[i] = pos % folds;
        }
    }
    fold_of
}

fn has_both(labels: &[u8], idx: &[usize]) -> bool {
    let ones = idx.iter().filter(|&&i| labels[i] == 1).count();
    ones > 0 && ones < idx.len()
}

/// Trains one model per fold on the other folds and scores it on its own.
pub fn train(arch: Architecture, file: &FeatureFile, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    arch.validate()?;
    if file.feature_dim as usize != arch.input_dim {
        return Err(Error::validation(format!(
            "file dimension {} does not match architecture input {}",
            file.feature_dim, arch.input_dim
        )));
    }
    let (x, labels) = dataset(file)?;
    if labels.is_empty() {
        return Err(Error::validation("training file has no records"));
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    let zeros = labels.len() - ones;
    if ones == 0 || zeros == 0 {
        return Err(Error::validation(
            "training data contains a single class; both labels are required",
        ));
    }
    let (major, minor) = (ones.max(zeros), ones.min(zeros));
    if major > 10 * minor {
        log::warn!(
            "layer {}: class imbalance {major}:{minor} exceeds 10:1",
            file.layer_index
        );
    }

    let fold_of = assign_folds(&labels, cfg.folds, cfg.seed);
    let mut trace = Vec::new();
    let mut fold_aucs = Vec::new();
    let mut best: Option<(f64, usize, VibModel)> = None;
    for fold in 0..cfg.folds {
        let train_idx: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] != fold).collect();
        let val_idx: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == fold).collect();
        if !has_both(&labels, &train_idx) || !has_both(&labels, &val_idx) {
            return Err(Error::validation(format!(
                "fold {fold} lacks one of the classes; add more samples of each label"
            )));
        }
        let (model, fold_trace) = train_fold(
            arch, &x, &labels, &train_idx, &val_idx, fold, cfg.epochs, cfg,
        )?;
        let auc = fold_trace
            .iter()
            .map(|r| r.fold_auc)
            .fold(f64::NAN, f64::max);
        fold_aucs.push(auc);
        trace.extend(fold_trace);
        if best.as_ref().is_none_or(|(b, _, _)| auc > *b) {
            best = Some((auc, fold, model));
        }
    }
    let (_, selected_fold, mut model) = best.expect("at least two folds");
    let mut refit_epochs = None;
    if cfg.refit {
        let best_epochs: Vec<usize> = (0..cfg.folds)
            .map(|f| {
                trace
                    .iter()
                    .filter(|r| r.fold == f)
                    .max_by(|a, b| a.fold_auc.total_cmp(&b.fold_auc))
                    .map_or(cfg.epochs - 1, |r| r.epoch)
            })
            .collect();
        let epochs = best_epochs.iter().sum::<usize>() / best_epochs.len() + 1;
        let all: Vec<usize> = (0..labels.len()).collect();
        let (full, full_trace) = train_fold(arch, &x, &labels, &all, &[], cfg.folds, epochs, cfg)?;
        model = full;
        trace.extend(full_trace);
        refit_epochs = Some(epochs);
    }
    model.mode = Mode::Inference;
    Ok(TrainOutcome {
        model,
        trace,
        fold_aucs,
        selected_fold,
        refit_epochs,
    })
}

#[allow(clippy::too_many_arguments)]
fn train_fold(
    arch: Architecture,
    x: &Array2<f64>,
    labels: &[u8],
    train_idx: &[usize],
    val_idx: &[usize],
    fold: usize,
    epochs: usize,
    cfg: &TrainConfig,
) -> Result<(VibModel, Vec<EpochRecord>)> {
    let mut init_rng = stream_rng(cfg.seed, "init", fold as u64);
    let mut model = VibModel::new(arch, &mut init_rng)?;
    let mut opt = Adam::new(&arch, cfg.learning_rate).with_weight_decay(cfg.weight_decay);
    let mut rng = stream_rng(cfg.seed, "fold_steps", fold as u64);

    let x_val = gather_rows(x, val_idx);
    let y_val: Vec<u8> = val_idx.iter().map(|&i| labels[i]).collect();
    let mut order = train_idx.to_vec();
    let mut records = Vec::with_capacity(epochs);
    let mut best: Option<(f64, VibModel)> = None;

    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let (mut bce, mut kl, mut seen) = (0.0, 0.0, 0usize);
        for (batch_no, idx) in order.chunks(cfg.batch_size).enumerate() {
            if idx.len() < 2 {
                continue;
            }
            let xb = gather_rows(x, idx);
            let yb: Array1<f64> = idx.iter().map(|&i| f64::from(labels[i])).collect();
            let mut grads: Option<VibParams> = None;
            let (mut b_bce, mut b_kl) = (0.0, 0.0);
            let s = cfg.latent_samples as f64;
            for _ in 0..cfg.latent_samples {
                let noise = Array2::from_shape_simple_fn((idx.len(), arch.latent), || {
                    rng.sample::<f64, _>(StandardNormal)
                });
                model.mode = Mode::Training;
                let cache = model.forward(xb.view(), &noise, Mode::Training, Some(&mut rng))?;
                let loss = VibModel::loss_of(&cache, yb.view(), cfg.beta);
                if !loss.total.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: batch_no,
                        bce: loss.bce,
                        kl: loss.kl,
                    });
                }
                b_bce += loss.bce / s;
                b_kl += loss.kl / s;
                let g = model.backward(&cache, yb.view(), cfg.beta);
                model.update_running(&cache);
                grads = Some(match grads {
                    None => g,
                    Some(mut acc) => {
                        for (a, b) in acc.tensors_mut().into_iter().zip(g.tensors()) {
                            a.iter_mut().zip(b).for_each(|(a, b)| *a += b);
                        }
                        acc
                    }
                });
            }
            let mut grads = grads.expect("latent_samples >= 1");
            if cfg.latent_samples > 1 {
                for t in grads.tensors_mut() {
                    t.iter_mut().for_each(|v| *v /= s);
                }
            }
            opt.update(&mut model.params, &grads);
            bce += b_bce * idx.len() as f64;
            kl += b_kl * idx.len() as f64;
            seen += idx.len();
        }
        model.mode = Mode::Inference;
        let auc = if val_idx.is_empty() {
            f64::NAN
        } else {
            let scores = model.predict_batch(x_val.view())?;
            roc_auc(scores.as_slice().unwrap(), &y_val).unwrap_or(f64::NAN)
        };
        let n = seen.max(1) as f64;
        records.push(EpochRecord {
            fold,
            epoch,
            bce: bce / n,
            kl: kl / n,
            total: (bce + cfg.beta * kl) / n,
            fold_auc: auc,
        });
        if !val_idx.is_empty() && best.as_ref().is_none_or(|(b, _)| auc > *b) {
            best = Some((auc, model.clone()));
        }
    }
    if !model.is_finite() {
        return Err(Error::validation(format!(
            "fold {fold} produced non-finite parameters"
        )));
    }
    let model = best.map_or(model, |(_, m)| m);
    Ok((model, records))
}

/// Trains every layer independently; layer `n` uses seed `derive(seed, n)`.
/// With `parallel`, layers train concurrently.
pub fn train_layers(
    files: &[FeatureFile],
    cfg: &TrainConfig,
    parallel: bool,
) -> Result<Vec<TrainOutcome>> {
    let job = |file: &FeatureFile| {
        let layer_cfg = TrainConfig {
            seed: derive_seed(cfg.seed, "layer", u64::from(file.layer_index)),
            ..cfg.clone()
        };
        train(
            Architecture::for_input(file.feature_dim as usize),
            file,
            &layer_cfg,
        )
    };
    if parallel {
        files.par_iter().map(job).collect()
    } else {
        files.iter().map(job).collect()
    }
}

/// Centered moving average with window `w` (shrinking at the edges).
pub fn smooth(values: &[f64], w: usize) -> Vec<f64> {
    let half = w / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}
