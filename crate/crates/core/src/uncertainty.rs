// SPDX-License-Identifier: Apache-2.0

//! Closed-form information quantities used across the pipeline.
//!
//! Everything here is in nats except [`total_response_entropy`], which is
//! base 2. `0 · ln 0` is treated as 0 throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for "sums to one" checks on probability vectors.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Default ε inside the TRE logarithms.
pub const TRE_EPSILON: f64 = 1e-12;

/// A finite probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    probabilities: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::validation("distribution support must be non-empty"));
        }
        if let Some(bad) = probabilities
            .iter()
            .find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0)
        {
            return Err(Error::validation(format!(
                "probability {bad} outside [0, 1]"
            )));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::validation(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { probabilities })
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || total <= 0.0 {
            return Err(Error::validation(
                "weights must be finite, non-negative and not all zero",
            ));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::validation("support size must be positive"));
        }
        Ok(Self {
            probabilities: vec![1.0 / k as f64; k],
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn support_size(&self) -> usize {
        self.probabilities.len()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.probabilities.iter().map(|&p| psi_unchecked(p)).sum()
    }
}

/// Natural-log probabilities of the tokens of one generated answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLikelihoods {
    per_token_logprob: Vec<f64>,
}

impl TokenLikelihoods {
    pub fn new(per_token_logprob: Vec<f64>) -> Result<Self> {
        if per_token_logprob.is_empty() {
            return Err(Error::validation("answer must contain at least one token"));
        }
        if let Some(bad) = per_token_logprob.iter().find(|l| l.is_nan() || **l > 0.0) {
            return Err(Error::validation(format!(
                "token log-probability {bad} must be <= 0"
            )));
        }
        Ok(Self { per_token_logprob })
    }

    pub fn answer_length(&self) -> usize {
        self.per_token_logprob.len()
    }

    pub fn logprobs(&self) -> &[f64] {
        &self.per_token_logprob
    }

    /// Average token-wise negative log-likelihood of this answer.
    pub fn psi(&self) -> f64 {
        -self.per_token_logprob.iter().sum::<f64>() / self.per_token_logprob.len() as f64
    }
}

/// Accuracy and uncertain-answer mass feeding TRE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseTally {
    pub acc: f64,
    pub uar: f64,
    pub epsilon: f64,
}

impl ResponseTally {
    pub fn new(acc: f64, uar: f64) -> Result<Self> {
        Self::with_epsilon(acc, uar, TRE_EPSILON)
    }

    pub fn with_epsilon(acc: f64, uar: f64, epsilon: f64) -> Result<Self> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(acc) || !in_unit(uar) {
            return Err(Error::validation(format!(
                "acc={acc} and uar={uar} must lie in [0, 1]"
            )));
        }
        if acc + uar > 1.0 + NORMALIZATION_TOL {
            return Err(Error::validation(format!(
                "acc + uar = {} exceeds 1",
                acc + uar
            )));
        }
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::validation("epsilon must be positive"));
        }
        Ok(Self { acc, uar, epsilon })
    }
}

fn psi_unchecked(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.ln()
    }
}

/// Instance-level uncertainty `−p ln p`.
pub fn instance_uncertainty(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!("probability {p} outside [0, 1]")));
    }
    Ok(psi_unchecked(p))
}

/// One `(q, r)` cell of the conditional-entropy double sum.
#[derive(Debug, Clone)]
pub struct ConditionalTerm {
    pub query: usize,
    pub query_weight: f64,
    pub context_weight: f64,
    pub response: DiscreteDistribution,
}

/// `H(O | R, Q) = Σ_q p(q) Σ_r p(r|q) Σ_o ψ(p(o|r,q))`.
///
/// Terms sharing a `query` id must repeat the same `query_weight`; the
/// query weights must sum to one over distinct queries and, within each
/// query, the context weights must sum to one.
pub fn conditional_entropy(terms: &[ConditionalTerm]) -> Result<f64> {
    if terms.is_empty() {
        return Err(Error::validation("no (q, r) terms given"));
    }
    let mut queries: Vec<(usize, f64, f64)> = Vec::new(); // (id, p(q), Σ p(r|q))
    for t in terms {
        if !(t.query_weight >= 0.0 && t.context_weight >= 0.0) {
            return Err(Error::validation("weights must be non-negative"));
        }
        match queries.iter_mut().find(|(id, _, _)| *id == t.query) {
            Some((_, qw, rsum)) => {
                if (*qw - t.query_weight).abs() > NORMALIZATION_TOL {
                    return Err(Error::validation(format!(
                        "query {} has inconsistent weights {} and {}",
                        t.query, qw, t.query_weight
                    )));
                }
                *rsum += t.context_weight;
            }
            None => queries.push((t.query, t.query_weight, t.context_weight)),
        }
    }
    let qsum: f64 = queries.iter().map(|(_, w, _)| w).sum();
    if (qsum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::validation(format!(
            "query weights sum to {qsum}, expected 1"
        )));
    }
    if let Some((id, _, rsum)) = queries
        .iter()
        .find(|(_, _, rsum)| (rsum - 1.0).abs() > NORMALIZATION_TOL)
    {
        return Err(Error::validation(format!(
            "context weights of query {id} sum to {rsum}, expected 1"
        )));
    }
    Ok(terms
        .iter()
        .map(|t| t.query_weight * t.context_weight * t.response.entropy())
        .sum())
}

/// Mean over answers of the average token negative log-likelihood.
pub fn mean_psi(samples: &[TokenLikelihoods]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::validation("mean_psi needs at least one sample"));
    }
    Ok(samples.iter().map(TokenLikelihoods::psi).sum::<f64>() / samples.len() as f64)
}

/// Base-2 entropy over (correct, incorrect, uncertain) response mass.
pub fn total_response_entropy(tally: &ResponseTally) -> f64 {
    let eps = tally.epsilon;
    let wrong = (1.0 - tally.acc - tally.uar).max(0.0);
    let term = |m: f64| m * (m + eps).log2();
    -(term(tally.acc) + term(wrong) + term(tally.uar))
}

/// `KL(N(μ, diag(exp(log_var))) ‖ N(0, I))`.
pub fn gaussian_kl_to_standard(mu: &[f64], log_var: &[f64]) -> Result<f64> {
    if mu.len() != log_var.len() {
        return Err(Error::validation(format!(
            "mu has {} entries but log_var has {}",
            mu.len(),
            log_var.len()
        )));
    }
    Ok(mu
        .iter()
        .zip(log_var)
        .map(|(m, lv)| 0.5 * (m * m + lv.exp() - lv - 1.0))
        .sum())
}

/// `KL(p ‖ q)` in nats; `+∞` when `q` is zero where `p` has mass.
pub fn kl_divergence(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if p.support_size() != q.support_size() {
        return Err(Error::validation(format!(
            "support mismatch: {} vs {}",
            p.support_size(),
            q.support_size()
        )));
    }
    let mut kl = 0.0;
    for (&pi, &qi) in p.probabilities().iter().zip(q.probabilities()) {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Ok(f64::INFINITY);
        }
        kl += pi * (pi / qi).ln();
    }
    Ok(kl.max(0.0))
}

/// Result of comparing an output distribution before and after retrieval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyDrop {
    /// `KL(p0 ‖ p)`, the distance the augmented output moved.
    pub u: f64,
    /// `Ψ(p) − Ψ(p0)`; negative when retrieval made the output more confident.
    pub delta_psi: f64,
}

pub fn entropy_drop_proxy(
    p0: &DiscreteDistribution,
    p: &DiscreteDistribution,
) -> Result<EntropyDrop> {
    let u = kl_divergence(p0, p)?;
    Ok(EntropyDrop {
        u,
        delta_psi: p.entropy() - p0.entropy(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, LN_2};

    fn dist(p: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(p.to_vec()).unwrap()
    }

    fn single(p: &[f64]) -> Vec<ConditionalTerm> {
        vec![ConditionalTerm {
            query: 0,
            query_weight: 1.0,
            context_weight: 1.0,
            response: dist(p),
        }]
    }

    #[test]
    fn psi_examples() {
        assert_eq!(instance_uncertainty(1.0).unwrap(), 0.0);
        assert_eq!(instance_uncertainty(0.0).unwrap(), 0.0);
        let at = instance_uncertainty(1.0 / E).unwrap();
        assert!((at - 1.0 / E).abs() < 1e-15);
        assert!(instance_uncertainty(-0.1).is_err());
        assert!(instance_uncertainty(1.5).is_err());
        assert!(instance_uncertainty(f64::NAN).is_err());
    }

    #[test]
    fn conditional_entropy_examples() {
        assert!((conditional_entropy(&single(&[0.5, 0.5])).unwrap() - LN_2).abs() < 1e-12);
        assert_eq!(conditional_entropy(&single(&[1.0, 0.0])).unwrap(), 0.0);

        // Two queries at 0.5 each, one context apiece: 0.5·0 + 0.5·ln 2.
        let terms = vec![
            ConditionalTerm {
                query: 0,
                query_weight: 0.5,
                context_weight: 1.0,
                response: dist(&[1.0, 0.0]),
            },
            ConditionalTerm {
                query: 1,
                query_weight: 0.5,
                context_weight: 1.0,
                response: dist(&[0.5, 0.5]),
            },
        ];
        assert!((conditional_entropy(&terms).unwrap() - 0.346574).abs() < 1e-6);
    }

    #[test]
    fn conditional_entropy_rejects_unnormalized_weights() {
        let mut terms = single(&[0.5, 0.5]);
        terms[0].query_weight = 0.7;
        assert!(conditional_entropy(&terms).is_err());
        let mut terms = single(&[0.5, 0.5]);
        terms[0].context_weight = 0.4;
        assert!(conditional_entropy(&terms).is_err());
        assert!(conditional_entropy(&[]).is_err());
    }

    #[test]
    fn mean_psi_examples() {
        let a = TokenLikelihoods::new(vec![0.5f64.ln(), 0.25f64.ln()]).unwrap();
        assert!((mean_psi(&[a]).unwrap() - 1.039721).abs() < 1e-6);
        let certain = TokenLikelihoods::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(mean_psi(&[certain]).unwrap(), 0.0);
        let one = TokenLikelihoods::new(vec![-1.0]).unwrap();
        let three = TokenLikelihoods::new(vec![-3.0, -3.0]).unwrap();
        assert_eq!(mean_psi(&[one, three]).unwrap(), 2.0);
        assert!(mean_psi(&[]).is_err());
        assert!(TokenLikelihoods::new(vec![]).is_err());
        assert!(TokenLikelihoods::new(vec![0.1]).is_err());
    }

    #[test]
    fn tre_examples() {
        let t = |a, u| total_response_entropy(&ResponseTally::new(a, u).unwrap());
        assert!(t(1.0, 0.0).abs() < 1e-10);
        assert!((t(0.5, 0.0) - 1.0).abs() < 1e-10);
        assert!((t(1.0 / 3.0, 1.0 / 3.0) - 3f64.log2()).abs() < 1e-10);
        assert!(ResponseTally::new(0.7, 0.5).is_err());
    }

    #[test]
    fn gaussian_kl_examples() {
        assert_eq!(gaussian_kl_to_standard(&[0.0], &[0.0]).unwrap(), 0.0);
        assert!((gaussian_kl_to_standard(&[1.0], &[0.0]).unwrap() - 0.5).abs() < 1e-15);
        let v = gaussian_kl_to_standard(&[0.0, 0.0], &[4f64.ln(), 0.0]).unwrap();
        assert!((v - 0.806853).abs() < 1e-6);
        assert!(gaussian_kl_to_standard(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn entropy_drop_examples() {
        let half = dist(&[0.5, 0.5]);
        let d = entropy_drop_proxy(&half, &half).unwrap();
        assert_eq!((d.u, d.delta_psi), (0.0, 0.0));

        let d = entropy_drop_proxy(&half, &dist(&[0.9, 0.1])).unwrap();
        // 0.5 ln(0.5/0.9) + 0.5 ln(0.5/0.1); H(0.9, 0.1) − ln 2.
        assert!((d.u - 0.5108256237659907).abs() < 1e-12);
        assert!((d.delta_psi - -0.3680642071684971).abs() < 1e-12);

        let d = entropy_drop_proxy(&dist(&[1.0, 0.0]), &half).unwrap();
        assert!((d.u - LN_2).abs() < 1e-15);
        assert!((d.delta_psi - LN_2).abs() < 1e-15);
    }

    #[test]
    fn entropy_drop_edge_cases() {
        let d = entropy_drop_proxy(&dist(&[0.5, 0.5]), &dist(&[1.0, 0.0])).unwrap();
        assert_eq!(d.u, f64::INFINITY);
        assert!(entropy_drop_proxy(&dist(&[1.0]), &dist(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(DiscreteDistribution::new(vec![]).is_err());
        let d = DiscreteDistribution::from_weights(&[2.0, 1.0, 1.0]).unwrap();
        assert_eq!(d.probabilities(), &[0.5, 0.25, 0.25]);
    }
}
