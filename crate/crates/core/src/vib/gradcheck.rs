// SPDX-License-Identifier: Apache-2.0

//! Finite-difference verification of the hand-written backward pass.

use ndarray::{Array1, Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;

use super::model::{Mode, VibModel, TENSOR_NAMES};
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `‖analytic − numeric‖ / (‖analytic‖ + ‖numeric‖)` per tensor.
    pub per_tensor: Vec<(&'static str, f64)>,
    pub max_relative_error: f64,
}

/// Compares backprop gradients of the bottleneck loss against central
/// differences. Batch statistics are used for batch-norm, dropout is off,
/// and the reparameterization noise is fixed.
pub fn gradient_check(
    model: &VibModel,
    x: ArrayView2<'_, f64>,
    labels: &[u8],
    noise: &Array2<f64>,
    beta: f64,
) -> Result<GradCheckReport> {
    if labels.len() != x.nrows() || x.nrows() < 2 {
        return Err(Error::validation("gradient check needs >= 2 labelled rows"));
    }
    let mut model = model.clone();
    model.arch.dropout = 0.0;
    let y: Array1<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let loss = |m: &VibModel| -> Result<f64> {
        let cache = m.forward::<ChaCha8Rng>(x, noise, Mode::Training, None)?;
        Ok(VibModel::loss_of(&cache, y.view(), beta).total)
    };

    let cache = model.forward::<ChaCha8Rng>(x, noise, Mode::Training, None)?;
    let analytic = model.backward(&cache, y.view(), beta);

    let mut per_tensor = Vec::with_capacity(TENSOR_NAMES.len());
    for (t, name) in TENSOR_NAMES.iter().enumerate() {
        let a = analytic.tensors()[t];
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut n2 = 0.0;
        #[allow(clippy::needless_range_loop)]
        for i in 0..a.len() {
            let orig = model.params.tensors()[t][i];
            model.params.tensors_mut()[t][i] = orig + FD_STEP;
            let up = loss(&model)?;
            model.params.tensors_mut()[t][i] = orig - FD_STEP;
            let down = loss(&model)?;
            model.params.tensors_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            diff2 += (a[i] - numeric).powi(2);
            a2 += a[i] * a[i];
            n2 += numeric * numeric;
        }
        let denom = a2.sqrt() + n2.sqrt();
        let rel = if denom == 0.0 {
            0.0
        } else {
            diff2.sqrt() / denom
        };
        per_tensor.push((*name, rel));
    }
    let max_relative_error = per_tensor.iter().map(|(_, r)| *r).fold(0.0, f64::max);
    Ok(GradCheckReport {
        per_tensor,
        max_relative_error,
    })
}
