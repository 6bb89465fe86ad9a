// SPDX-License-Identifier: Apache-2.0

//! Numerical checks of how output entropy responds to the information
//! difference between conflicting and supplementary context.
//!
//! The decision model is a tilted family `p_α(o) ∝ a_o · exp(α · b_o)`, with
//! `b_o` playing the role of the information difference ΔI for outcome `o`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::uncertainty::{instance_uncertainty, DiscreteDistribution};

/// Step of the central difference used by [`tilted_entropy_derivative`].
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct TiltedFamily {
    base_weights: Vec<f64>,
    scores: Vec<f64>,
    alpha: f64,
}

impl TiltedFamily {
    pub fn new(base_weights: Vec<f64>, scores: Vec<f64>, alpha: f64) -> Result<Self> {
        if base_weights.len() < 2 || base_weights.len() != scores.len() {
            return Err(Error::validation(format!(
                "need >= 2 outcomes with matching lengths, got {} weights and {} scores",
                base_weights.len(),
                scores.len()
            )));
        }
        if base_weights.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::validation("base weights must be strictly positive"));
        }
        if scores.iter().any(|b| !b.is_finite()) {
            return Err(Error::validation("scores must be finite"));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::validation(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(Self {
            base_weights,
            scores,
            alpha,
        })
    }

    /// Uniform base weights over two outcomes with scores `[0, delta_i]`.
    pub fn binary(delta_i: f64, alpha: f64) -> Result<Self> {
        Self::new(vec![1.0, 1.0], vec![0.0, delta_i], alpha)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.base_weights.clone(), self.scores.clone(), alpha)
    }

    fn probabilities_at(&self, alpha: f64) -> Vec<f64> {
        let logits: Vec<f64> = self
            .base_weights
            .iter()
            .zip(&self.scores)
            .map(|(a, b)| a.ln() + alpha * b)
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let unnorm: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = unnorm.iter().sum();
        unnorm.into_iter().map(|u| u / z).collect()
    }

    fn entropy_at(&self, alpha: f64) -> f64 {
        self.probabilities_at(alpha)
            .into_iter()
            .filter(|p| *p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    }
}

pub fn tilted_distribution(family: &TiltedFamily) -> DiscreteDistribution {
    let probs = family.probabilities_at(family.alpha);
    DiscreteDistribution::new(probs).expect("softmax output is a distribution")
}

/// Closed-form and finite-difference values of `dΨ_α/dα`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyDerivative {
    pub analytic: f64,
    pub numeric: f64,
}

/// `dΨ_α/dα = −α Var_{p_α}(b) − Cov_{p_α}(ln a, b)`, alongside a central
/// difference of `Ψ_α` for cross-checking.
pub fn tilted_entropy_derivative(family: &TiltedFamily) -> EntropyDerivative {
    let p = family.probabilities_at(family.alpha);
    let b = &family.scores;
    let log_a: Vec<f64> = family.base_weights.iter().map(|a| a.ln()).collect();

    let expect = |f: &dyn Fn(usize) -> f64| -> f64 { (0..p.len()).map(|i| p[i] * f(i)).sum() };
    let mean_b = expect(&|i| b[i]);
    let mean_log_a = expect(&|i| log_a[i]);
    let var_b = expect(&|i| (b[i] - mean_b).powi(2));
    let cov = expect(&|i| (log_a[i] - mean_log_a) * (b[i] - mean_b));
    let analytic = -family.alpha * var_b - cov;

    let h = FD_STEP;
    let numeric =
        (family.entropy_at(family.alpha + h) - family.entropy_at(family.alpha - h)) / (2.0 * h);
    EntropyDerivative { analytic, numeric }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub delta_i: f64,
    pub psi: f64,
}

/// ψ of the preferred outcome of a binary tilted model, for each ΔI in the grid.
pub fn psi_vs_delta_i_curve(delta_i_grid: &[f64], alpha: f64) -> Result<Vec<CurvePoint>> {
    if delta_i_grid.is_empty() {
        return Err(Error::validation("ΔI grid is empty"));
    }
    delta_i_grid
        .iter()
        .map(|&delta_i| {
            let dist = tilted_distribution(&TiltedFamily::binary(delta_i, alpha)?);
            Ok(CurvePoint {
                delta_i,
                psi: max_component_psi(&dist)?,
            })
        })
        .collect()
}

fn max_component_psi(dist: &DiscreteDistribution) -> Result<f64> {
    let top = dist
        .probabilities()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    instance_uncertainty(top.min(1.0))
}

/// True when ψ never increases as |ΔI| grows (ties in |ΔI| must agree in ψ).
pub fn is_non_increasing_in_magnitude(curve: &[CurvePoint], tol: f64) -> bool {
    let mut sorted: Vec<CurvePoint> = curve.to_vec();
    sorted.sort_by(|a, b| a.delta_i.abs().total_cmp(&b.delta_i.abs()));
    sorted.windows(2).all(|w| w[1].psi <= w[0].psi + tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MixRatioScenario {
    pub n_conflicting: u32,
    pub n_supplementary: u32,
}

impl MixRatioScenario {
    pub fn new(n_conflicting: u32, n_supplementary: u32) -> Result<Self> {
        if n_conflicting + n_supplementary == 0 {
            return Err(Error::validation("scenario needs at least one context"));
        }
        Ok(Self {
            n_conflicting,
            n_supplementary,
        })
    }

    pub fn label(&self) -> String {
        format!("{}:{}", self.n_conflicting, self.n_supplementary)
    }

    /// The five 4-context proportions 4:0 … 0:4.
    pub fn four_context_sweep() -> Vec<Self> {
        (0..=4)
            .rev()
            .map(|c| Self::new(c, 4 - c).unwrap())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixRatioPoint {
    pub ratio: String,
    pub uncertainty: f64,
}

/// Uncertainty of the decision model when each conflicting context pushes
/// the score difference by `+strength` and each supplementary one by `−strength`.
pub fn mix_ratio_uncertainty(
    scenarios: &[MixRatioScenario],
    strength: f64,
) -> Result<Vec<MixRatioPoint>> {
    if scenarios.is_empty() {
        return Err(Error::validation("no scenarios given"));
    }
    if !(strength.is_finite() && strength > 0.0) {
        return Err(Error::validation("evidence strength must be > 0"));
    }
    scenarios
        .iter()
        .map(|s| {
            let delta = strength * (f64::from(s.n_conflicting) - f64::from(s.n_supplementary));
            let dist = tilted_distribution(&TiltedFamily::binary(delta, 1.0)?);
            Ok(MixRatioPoint {
                ratio: s.label(),
                uncertainty: max_component_psi(&dist)?,
            })
        })
        .collect()
}

/// Evenly spaced grid `start, start+step, …` up to and including `end`.
pub fn linear_grid(start: f64, end: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![start],
        n => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}
