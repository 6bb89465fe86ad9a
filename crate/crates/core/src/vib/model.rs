// SPDX-License-Identifier: Apache-2.0

//! Forward and backward passes of the per-layer bottleneck network.
//!
//! ```text
//! G ─ W1 ─ BN ─ ReLU ─ drop ─┬─ Wμ + bμ ──── μ ──┐
//!                            └─ Wσ + bσ ─ log σ² ┴─ z = μ + σ ⊙ ε
//! z ─ Wd1 ─ BN ─ ReLU ─ drop ─ Wd2 ─ BN ─ ReLU ─ drop ─ Wo + bo ─ logit
//! ```

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uncertainty::gaussian_kl_to_standard;
use crate::util::derive_seed;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const DEFAULT_DROPOUT: f64 = 0.5;

/// Layer widths `D → hidden → latent` (encoder) and `latent → d1 → d2 → 1` (decoder).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: usize,
    pub latent: usize,
    pub decoder_hidden: [usize; 2],
    pub dropout: f64,
}

impl Architecture {
    /// 2048/512/256/128 for inputs of 256 dimensions or more; below that
    /// the first width is `8·D` and the rest keep the same 16:4:2:1 ratios.
    pub fn for_input(input_dim: usize) -> Self {
        let hidden = (8 * input_dim).min(2048);
        Self {
            input_dim,
            hidden,
            latent: (hidden / 4).max(1),
            decoder_hidden: [(hidden / 8).max(1), (hidden / 16).max(1)],
            dropout: DEFAULT_DROPOUT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            self.input_dim,
            self.hidden,
            self.latent,
            self.decoder_hidden[0],
            self.decoder_hidden[1],
        ];
        if widths.contains(&0) {
            return Err(Error::validation(format!("zero-width layer in {widths:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::validation("dropout rate must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Every trainable tensor. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct VibParams {
    pub trunk_w: Array2<f64>,
    pub trunk_gamma: Array1<f64>,
    pub trunk_beta: Array1<f64>,
    pub mu_w: Array2<f64>,
    pub mu_b: Array1<f64>,
    pub logvar_w: Array2<f64>,
    pub logvar_b: Array1<f64>,
    pub dec1_w: Array2<f64>,
    pub dec1_gamma: Array1<f64>,
    pub dec1_beta: Array1<f64>,
    pub dec2_w: Array2<f64>,
    pub dec2_gamma: Array1<f64>,
    pub dec2_beta: Array1<f64>,
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

pub const TENSOR_NAMES: [&str; 15] = [
    "trunk_w",
    "trunk_gamma",
    "trunk_beta",
    "mu_w",
    "mu_b",
    "logvar_w",
    "logvar_b",
    "dec1_w",
    "dec1_gamma",
    "dec1_beta",
    "dec2_w",
    "dec2_gamma",
    "dec2_beta",
    "out_w",
    "out_b",
];

impl VibParams {
    pub fn zeros(arch: &Architecture) -> Self {
        let (d, h, l) = (arch.input_dim, arch.hidden, arch.latent);
        let [h2, h3] = arch.decoder_hidden;
        Self {
            trunk_w: Array2::zeros((d, h)),
            trunk_gamma: Array1::zeros(h),
            trunk_beta: Array1::zeros(h),
            mu_w: Array2::zeros((h, l)),
            mu_b: Array1::zeros(l),
            logvar_w: Array2::zeros((h, l)),
            logvar_b: Array1::zeros(l),
            dec1_w: Array2::zeros((l, h2)),
            dec1_gamma: Array1::zeros(h2),
            dec1_beta: Array1::zeros(h2),
            dec2_w: Array2::zeros((h2, h3)),
            dec2_gamma: Array1::zeros(h3),
            dec2_beta: Array1::zeros(h3),
            out_w: Array2::zeros((h3, 1)),
            out_b: Array1::zeros(1),
        }
    }

    /// Uniform `±1/√fan_in` weights and biases, unit batch-norm scales.
    pub fn init<R: Rng>(arch: &Architecture, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch);
        let fill = |a: &mut [f64], fan_in: usize, rng: &mut R| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            a.iter_mut()
                .for_each(|v| *v = rng.random_range(-bound..bound));
        };
        let (d, h, l) = (arch.input_dim, arch.hidden, arch.latent);
        let [h2, h3] = arch.decoder_hidden;
        fill(p.trunk_w.as_slice_mut().unwrap(), d, rng);
        fill(p.mu_w.as_slice_mut().unwrap(), h, rng);
        fill(p.mu_b.as_slice_mut().unwrap(), h, rng);
        fill(p.logvar_w.as_slice_mut().unwrap(), h, rng);
        fill(p.logvar_b.as_slice_mut().unwrap(), h, rng);
        fill(p.dec1_w.as_slice_mut().unwrap(), l, rng);
        fill(p.dec2_w.as_slice_mut().unwrap(), h2, rng);
        fill(p.out_w.as_slice_mut().unwrap(), h3, rng);
        fill(p.out_b.as_slice_mut().unwrap(), h3, rng);
        p.trunk_gamma.fill(1.0);
        p.dec1_gamma.fill(1.0);
        p.dec2_gamma.fill(1.0);
        p
    }

    pub fn tensors(&self) -> [&[f64]; 15] {
        [
            self.trunk_w.as_slice().unwrap(),
            self.trunk_gamma.as_slice().unwrap(),
            self.trunk_beta.as_slice().unwrap(),
            self.mu_w.as_slice().unwrap(),
            self.mu_b.as_slice().unwrap(),
            self.logvar_w.as_slice().unwrap(),
            self.logvar_b.as_slice().unwrap(),
            self.dec1_w.as_slice().unwrap(),
            self.dec1_gamma.as_slice().unwrap(),
            self.dec1_beta.as_slice().unwrap(),
            self.dec2_w.as_slice().unwrap(),
            self.dec2_gamma.as_slice().unwrap(),
            self.dec2_beta.as_slice().unwrap(),
            self.out_w.as_slice().unwrap(),
            self.out_b.as_slice().unwrap(),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 15] {
        [
            self.trunk_w.as_slice_mut().unwrap(),
            self.trunk_gamma.as_slice_mut().unwrap(),
            self.trunk_beta.as_slice_mut().unwrap(),
            self.mu_w.as_slice_mut().unwrap(),
            self.mu_b.as_slice_mut().unwrap(),
            self.logvar_w.as_slice_mut().unwrap(),
            self.logvar_b.as_slice_mut().unwrap(),
            self.dec1_w.as_slice_mut().unwrap(),
            self.dec1_gamma.as_slice_mut().unwrap(),
            self.dec1_beta.as_slice_mut().unwrap(),
            self.dec2_w.as_slice_mut().unwrap(),
            self.dec2_gamma.as_slice_mut().unwrap(),
            self.dec2_beta.as_slice_mut().unwrap(),
            self.out_w.as_slice_mut().unwrap(),
            self.out_b.as_slice_mut().unwrap(),
        ]
    }

    /// Matrix products of transposed views may come back column-major;
    /// flat tensor access needs row-major storage.
    pub(crate) fn into_standard_layout(self) -> Self {
        fn m(a: Array2<f64>) -> Array2<f64> {
            if a.is_standard_layout() {
                a
            } else {
                a.as_standard_layout().into_owned()
            }
        }
        Self {
            trunk_w: m(self.trunk_w),
            mu_w: m(self.mu_w),
            logvar_w: m(self.logvar_w),
            dec1_w: m(self.dec1_w),
            dec2_w: m(self.dec2_w),
            out_w: m(self.out_w),
            ..self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Batch-norm running statistics of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

impl RunningStats {
    fn new(width: usize) -> Self {
        Self {
            mean: Array1::zeros(width),
            var: Array1::ones(width),
        }
    }

    fn update(&mut self, batch: &BnCache) {
        let n = batch.batch as f64;
        let unbiased = if batch.batch > 1 { n / (n - 1.0) } else { 1.0 };
        Zip::from(&mut self.mean)
            .and(&batch.mean)
            .for_each(|r, &m| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m);
        Zip::from(&mut self.var)
            .and(&batch.var)
            .for_each(|r, &v| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbiased);
    }

    fn is_finite(&self) -> bool {
        self.mean.iter().chain(&self.var).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Batch statistics and dropout.
    Training,
    /// Running statistics, no dropout.
    Inference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VibModel {
    pub arch: Architecture,
    pub params: VibParams,
    pub running: [RunningStats; 3],
    pub mode: Mode,
}

/// Terms of the bottleneck objective for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IbLossBreakdown {
    pub bce: f64,
    pub kl: f64,
    pub beta: f64,
    pub total: f64,
}

impl IbLossBreakdown {
    fn new(bce: f64, kl: f64, beta: f64) -> Self {
        Self {
            bce,
            kl,
            beta,
            total: bce + beta * kl,
        }
    }
}

#[derive(Debug, Clone)]
struct BnCache {
    batch: usize,
    mean: Array1<f64>,
    var: Array1<f64>,
    inv_std: Array1<f64>,
    xhat: Array2<f64>,
}

/// Cached tensors of one `W → BN → ReLU → dropout` stage.
#[derive(Debug, Clone)]
struct StageCache {
    input: Array2<f64>,
    bn: Option<BnCache>,
    /// Post-ReLU, pre-dropout activation.
    activated: Array2<f64>,
    /// Already scaled by `1/(1−p)`.
    drop_mask: Option<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    trunk: StageCache,
    h: Array2<f64>,
    mu: Array2<f64>,
    logvar: Array2<f64>,
    noise: Array2<f64>,
    dec1: StageCache,
    dec2: StageCache,
    h3: Array2<f64>,
    pub(crate) logits: Array1<f64>,
}

struct StageParams<'a> {
    w: &'a Array2<f64>,
    gamma: &'a Array1<f64>,
    beta: &'a Array1<f64>,
    running: &'a RunningStats,
}

fn stage_forward<R: Rng>(
    input: Array2<f64>,
    p: StageParams<'_>,
    mode: Mode,
    dropout: f64,
    rng: Option<&mut R>,
) -> (Array2<f64>, StageCache) {
    let pre = input.dot(p.w);
    let (normed, bn) = match mode {
        Mode::Training => {
            let batch = pre.nrows();
            let mean = pre.mean_axis(Axis(0)).expect("non-empty batch");
            let centered = &pre - &mean;
            let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).unwrap();
            let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let xhat = &centered * &inv_std;
            let y = &xhat * p.gamma + p.beta;
            (
                y,
                Some(BnCache {
                    batch,
                    mean,
                    var,
                    inv_std,
                    xhat,
                }),
            )
        }
        Mode::Inference => {
            let inv_std = p.running.var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let y = (&pre - &p.running.mean) * &(&inv_std * p.gamma) + p.beta;
            (y, None)
        }
    };
    let activated = normed.mapv(|v| v.max(0.0));
    let drop_mask = match (mode, rng) {
        (Mode::Training, Some(rng)) if dropout > 0.0 => {
            let keep = 1.0 / (1.0 - dropout);
            Some(activated.mapv(|_| {
                if rng.random::<f64>() < dropout {
                    0.0
                } else {
                    keep
                }
            }))
        }
        _ => None,
    };
    let out = match &drop_mask {
        Some(m) => &activated * m,
        None => activated.clone(),
    };
    (
        out,
        StageCache {
            input,
            bn,
            activated,
            drop_mask,
        },
    )
}

struct StageGrads {
    input: Array2<f64>,
    w: Array2<f64>,
    gamma: Array1<f64>,
    beta: Array1<f64>,
}

fn stage_backward(
    dout: Array2<f64>,
    cache: &StageCache,
    w: &Array2<f64>,
    gamma: &Array1<f64>,
) -> StageGrads {
    let mut d = match &cache.drop_mask {
        Some(m) => dout * m,
        None => dout,
    };
    Zip::from(&mut d).and(&cache.activated).for_each(|g, &a| {
        if a <= 0.0 {
            *g = 0.0
        }
    });
    let bn = cache
        .bn
        .as_ref()
        .expect("backward requires a training-mode forward pass");
    let dgamma = (&d * &bn.xhat).sum_axis(Axis(0));
    let dbeta = d.sum_axis(Axis(0));
    let dxhat = &d * gamma;
    let n = bn.batch as f64;
    let sum_dxhat = dxhat.sum_axis(Axis(0));
    let sum_dxhat_xhat = (&dxhat * &bn.xhat).sum_axis(Axis(0));
    let dpre = (&dxhat * n - &sum_dxhat - &(&bn.xhat * &sum_dxhat_xhat)) * &(&bn.inv_std / n);
    StageGrads {
        input: dpre.dot(&w.t()),
        w: cache.input.t().dot(&dpre),
        gamma: dgamma,
        beta: dbeta,
    }
}

/// `max(l, 0) − l·y + ln(1 + e^{−|l|})`.
pub fn bce_with_logit(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl VibModel {
    pub fn new<R: Rng>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        Ok(Self::from_params(arch, VibParams::init(&arch, rng)))
    }

    pub fn seeded(arch: Architecture, seed: u64) -> Result<Self> {
        Self::new(arch, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// All weights, biases and batch-norm shifts zero; unit batch-norm scales.
    pub fn zeroed(arch: Architecture) -> Self {
        let mut p = VibParams::zeros(&arch);
        p.trunk_gamma.fill(1.0);
        p.dec1_gamma.fill(1.0);
        p.dec2_gamma.fill(1.0);
        Self::from_params(arch, p)
    }

    pub fn from_params(arch: Architecture, params: VibParams) -> Self {
        Self {
            running: [
                RunningStats::new(arch.hidden),
                RunningStats::new(arch.decoder_hidden[0]),
                RunningStats::new(arch.decoder_hidden[1]),
            ],
            arch,
            params,
            mode: Mode::Inference,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent
    }

    pub fn is_finite(&self) -> bool {
        self.params.is_finite() && self.running.iter().all(RunningStats::is_finite)
    }

    fn check_batch(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.arch.input_dim {
            return Err(Error::validation(format!(
                "feature dimension {} does not match model input {}",
                x.ncols(),
                self.arch.input_dim
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::validation("empty batch"));
        }
        Ok(())
    }

    fn trunk_stage<R: Rng>(
        &self,
        x: ArrayView2<'_, f64>,
        mode: Mode,
        rng: Option<&mut R>,
    ) -> (Array2<f64>, StageCache) {
        let p = &self.params;
        stage_forward(
            x.to_owned(),
            StageParams {
                w: &p.trunk_w,
                gamma: &p.trunk_gamma,
                beta: &p.trunk_beta,
                running: &self.running[0],
            },
            mode,
            self.arch.dropout,
            rng,
        )
    }

    fn encode_stage<R: Rng>(
        &self,
        x: ArrayView2<'_, f64>,
        mode: Mode,
        rng: Option<&mut R>,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>, StageCache) {
        let p = &self.params;
        let (h, trunk) = self.trunk_stage(x, mode, rng);
        let mu = h.dot(&p.mu_w) + &p.mu_b;
        let logvar = h.dot(&p.logvar_w) + &p.logvar_b;
        (h, mu, logvar, trunk)
    }

    fn decode_stages<R: Rng>(
        &self,
        z: Array2<f64>,
        mode: Mode,
        mut rng: Option<&mut R>,
    ) -> (Array2<f64>, StageCache, StageCache, Array1<f64>) {
        let p = &self.params;
        let (h2, dec1) = stage_forward(
            z,
            StageParams {
                w: &p.dec1_w,
                gamma: &p.dec1_gamma,
                beta: &p.dec1_beta,
                running: &self.running[1],
            },
            mode,
            self.arch.dropout,
            rng.as_deref_mut(),
        );
        let (h3, dec2) = stage_forward(
            h2,
            StageParams {
                w: &p.dec2_w,
                gamma: &p.dec2_gamma,
                beta: &p.dec2_beta,
                running: &self.running[2],
            },
            mode,
            self.arch.dropout,
            rng,
        );
        let logits = h3.dot(&p.out_w).column(0).to_owned() + p.out_b[0];
        (h3, dec1, dec2, logits)
    }

    /// Latent mean and log-variance for a batch, inference mode.
    pub fn encode_batch(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        self.check_batch(&x)?;
        let (_, mu, logvar, _) = self.encode_stage::<ChaCha8Rng>(x, Mode::Inference, None);
        Ok((mu, logvar))
    }

    pub fn encode(&self, g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let x = ArrayView2::from_shape((1, g.len()), g).expect("row vector");
        let (mu, logvar) = self.encode_batch(x)?;
        Ok((mu.row(0).to_vec(), logvar.row(0).to_vec()))
    }

    /// Decoder logit for each latent row, inference mode.
    pub fn decode_logits(&self, z: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if z.ncols() != self.arch.latent || z.nrows() == 0 {
            return Err(Error::validation(format!(
                "latent batch of shape {:?}, expected (_, {})",
                z.dim(),
                self.arch.latent
            )));
        }
        let (_, _, _, logits) =
            self.decode_stages::<ChaCha8Rng>(z.to_owned(), Mode::Inference, None);
        Ok(logits)
    }

    pub fn decode(&self, z: &[f64]) -> Result<f64> {
        let z = ArrayView2::from_shape((1, z.len()), z).expect("row vector");
        Ok(sigmoid(self.decode_logits(z)?[0]))
    }

    /// Acceptance probability per row using the latent mean (no sampling).
    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.check_batch(&x)?;
        let (h, _) = self.trunk_stage::<ChaCha8Rng>(x, Mode::Inference, None);
        let mu = h.dot(&self.params.mu_w) + &self.params.mu_b;
        let (_, _, _, logits) = self.decode_stages::<ChaCha8Rng>(mu, Mode::Inference, None);
        Ok(logits.mapv(sigmoid))
    }

    pub fn predict(&self, g: &[f64]) -> Result<f64> {
        let x = ArrayView2::from_shape((1, g.len()), g).expect("row vector");
        Ok(self.predict_batch(x)?[0])
    }

    /// Forward pass in `mode`, with the given reparameterization noise.
    /// Dropout masks come from `dropout_rng` in training mode.
    pub(crate) fn forward<R: Rng>(
        &self,
        x: ArrayView2<'_, f64>,
        noise: &Array2<f64>,
        mode: Mode,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<ForwardCache> {
        self.check_batch(&x)?;
        if noise.dim() != (x.nrows(), self.arch.latent) {
            return Err(Error::validation(
                "noise shape does not match (batch, latent)",
            ));
        }
        let (h, mu, logvar, trunk) = self.encode_stage(x, mode, dropout_rng.as_deref_mut());
        let z = &mu + &(logvar.mapv(|v| (0.5 * v).exp()) * noise);
        let (h3, dec1, dec2, logits) = self.decode_stages(z, mode, dropout_rng);
        Ok(ForwardCache {
            trunk,
            h,
            mu,
            logvar,
            noise: noise.clone(),
            dec1,
            dec2,
            h3,
            logits,
        })
    }

    pub(crate) fn loss_of(
        cache: &ForwardCache,
        labels: ArrayView1<'_, f64>,
        beta: f64,
    ) -> IbLossBreakdown {
        let n = labels.len() as f64;
        let bce = cache
            .logits
            .iter()
            .zip(labels)
            .map(|(&l, &y)| bce_with_logit(l, y))
            .sum::<f64>()
            / n;
        let kl = cache
            .mu
            .outer_iter()
            .zip(cache.logvar.outer_iter())
            .map(|(m, lv)| {
                gaussian_kl_to_standard(m.as_slice().unwrap(), lv.as_slice().unwrap())
                    .expect("matching latent widths")
            })
            .sum::<f64>()
            / n;
        IbLossBreakdown::new(bce, kl, beta)
    }

    /// Gradients of `bce + β·kl` for a training-mode forward pass.
    pub(crate) fn backward(
        &self,
        cache: &ForwardCache,
        labels: ArrayView1<'_, f64>,
        beta: f64,
    ) -> VibParams {
        let p = &self.params;
        let n = labels.len() as f64;
        let dlogit: Array1<f64> = Zip::from(&cache.logits)
            .and(labels)
            .map_collect(|&l, &y| (sigmoid(l) - y) / n);
        let dlogit2 = dlogit.view().insert_axis(Axis(1));

        let mut g = VibParams::zeros(&self.arch);
        g.out_w = cache.h3.t().dot(&dlogit2);
        g.out_b[0] = dlogit.sum();
        let dh3 = dlogit2.dot(&p.out_w.t());

        let s2 = stage_backward(dh3, &cache.dec2, &p.dec2_w, &p.dec2_gamma);
        g.dec2_w = s2.w;
        g.dec2_gamma = s2.gamma;
        g.dec2_beta = s2.beta;
        let s1 = stage_backward(s2.input, &cache.dec1, &p.dec1_w, &p.dec1_gamma);
        g.dec1_w = s1.w;
        g.dec1_gamma = s1.gamma;
        g.dec1_beta = s1.beta;
        let dz = s1.input;

        let sigma = cache.logvar.mapv(|v| (0.5 * v).exp());
        let dmu = &dz + &(&cache.mu * (beta / n));
        let dlogvar = &dz * &cache.noise * &sigma * 0.5
            + &(cache.logvar.mapv(|v| v.exp() - 1.0) * (0.5 * beta / n));

        g.mu_w = cache.h.t().dot(&dmu);
        g.mu_b = dmu.sum_axis(Axis(0));
        g.logvar_w = cache.h.t().dot(&dlogvar);
        g.logvar_b = dlogvar.sum_axis(Axis(0));
        let dh = dmu.dot(&p.mu_w.t()) + dlogvar.dot(&p.logvar_w.t());

        let s0 = stage_backward(dh, &cache.trunk, &p.trunk_w, &p.trunk_gamma);
        g.trunk_w = s0.w;
        g.trunk_gamma = s0.gamma;
        g.trunk_beta = s0.beta;
        g.into_standard_layout()
    }

    /// Folds a training-mode batch's statistics into the running averages.
    pub(crate) fn update_running(&mut self, cache: &ForwardCache) {
        for (stats, stage) in self
            .running
            .iter_mut()
            .zip([&cache.trunk, &cache.dec1, &cache.dec2])
        {
            if let Some(bn) = &stage.bn {
                stats.update(bn);
            }
        }
    }

    /// Bottleneck loss of a labelled batch with noise drawn from `noise_seed`.
    /// Uses the model's current [`Mode`].
    pub fn ib_loss(
        &self,
        x: ArrayView2<'_, f64>,
        labels: &[u8],
        beta: f64,
        noise_seed: u64,
    ) -> Result<IbLossBreakdown> {
        if labels.len() != x.nrows() {
            return Err(Error::validation("one label per row required"));
        }
        if labels.iter().any(|l| *l > 1) {
            return Err(Error::validation("labels must be 0 or 1"));
        }
        let noise = standard_normal(x.nrows(), self.arch.latent, noise_seed);
        let mut drop = ChaCha8Rng::seed_from_u64(derive_seed(noise_seed, "dropout", 0));
        let cache = self.forward(x, &noise, self.mode, Some(&mut drop))?;
        let y: Array1<f64> = labels.iter().map(|&l| f64::from(l)).collect();
        Ok(Self::loss_of(&cache, y.view(), beta))
    }
}

/// `z = μ + exp(½ log σ²) ⊙ ε`.
pub fn reparameterize(mu: &[f64], log_var: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != log_var.len() || mu.len() != noise.len() {
        return Err(Error::validation(
            "mu, log_var and noise must have equal lengths",
        ));
    }
    Ok(mu
        .iter()
        .zip(log_var)
        .zip(noise)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect())
}

pub fn standard_normal(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Rows of `x` selected by `idx`, as an owned matrix.
pub(crate) fn gather_rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), x.ncols()));
    for (dst, &i) in idx.iter().enumerate() {
        out.slice_mut(s![dst, ..]).assign(&x.row(i));
    }
    out
}
