// SPDX-License-Identifier: Apache-2.0

//! Synthetic evaluation: token contexts with known window provenance, a
//! toy answer model driven by the windows that survive filtering, and the
//! parameter sweep built on both.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::FeatureSource;
use crate::filter::{filter_context, score_window, FilterConfig, LayerEnsemble};
use crate::metrics::{compute_report, AnswerRecord, AnswerSource, Metric};
use crate::util::stream_rng;
use crate::vib::sigmoid;
use crate::windowing::{
    interleave_mixed, sliding_windows, Source, TokenSequence, WindowSpec, DEFAULT_BLOCK,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalCorpusSpec {
    pub n_contexts: usize,
    pub segments_per_context: usize,
    pub segment_len: usize,
    /// Probability that a segment is an interleaved two-source segment.
    pub mixed_fraction: f64,
    pub block: usize,
    pub closed_book_accuracy: f64,
    pub seed: u64,
}

impl Default for EvalCorpusSpec {
    fn default() -> Self {
        Self {
            n_contexts: 200,
            segments_per_context: 16,
            segment_len: 7,
            mixed_fraction: 0.5,
            block: DEFAULT_BLOCK,
            closed_book_accuracy: 0.5,
            seed: 11,
        }
    }
}

impl EvalCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_contexts == 0 || self.segments_per_context == 0 {
            return Err(Error::validation(
                "eval corpus needs at least one context and segment",
            ));
        }
        if self.segment_len < 2 || self.block == 0 || self.block >= self.segment_len {
            return Err(Error::validation(format!(
                "segment_len {} must exceed block {} (and be at least 2) for mixed segments to exist",
                self.segment_len, self.block
            )));
        }
        for (name, v) in [
            ("mixed_fraction", self.mixed_fraction),
            ("closed_book_accuracy", self.closed_book_accuracy),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// One evaluation question with its tagged retrieved context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub id: String,
    pub query: String,
    pub closed_book_correct: bool,
    pub context: TokenSequence,
}

/// Contexts are concatenations of `segment_len`-token segments. A segment
/// is either single-source or an interleaving of both sources, so with
/// `window_len == segment_len` every window's provenance is known.
pub fn generate_eval_corpus(spec: &EvalCorpusSpec) -> Result<Vec<EvalSample>> {
    spec.validate()?;
    (0..spec.n_contexts)
        .map(|i| {
            let mut rng = stream_rng(spec.seed, "eval", i as u64);
            let mut context = TokenSequence::default();
            for s in 0..spec.segments_per_context {
                let tok = |src: &str, k: usize| format!("c{i}s{s}{src}{k}");
                let segment = if rng.random::<f64>() < spec.mixed_fraction {
                    let n_supp = spec.segment_len - spec.segment_len / 2;
                    let supp = TokenSequence::single_source(
                        (0..n_supp).map(|k| tok("a", k)),
                        Source::Supplementary,
                    );
                    let conf = TokenSequence::single_source(
                        (0..spec.segment_len - n_supp).map(|k| tok("b", k)),
                        Source::Conflicting,
                    );
                    interleave_mixed(&supp, &conf, spec.block.min(n_supp), Source::Supplementary)?
                } else {
                    let source = if rng.random::<bool>() {
                        Source::Supplementary
                    } else {
                        Source::Conflicting
                    };
                    TokenSequence::single_source((0..spec.segment_len).map(|k| tok("p", k)), source)
                };
                context.extend_from(&segment);
            }
            Ok(EvalSample {
                id: format!("eval-{i}"),
                query: format!("question {i}?"),
                closed_book_correct: rng.random::<f64>() < spec.closed_book_accuracy,
                context,
            })
        })
        .collect()
}

/// Binary answer model. The log-odds of the reference answer start at
/// `±memory_prior` (sign from closed-book correctness); every kept
/// single-source window adds the question's evidence strength, every kept
/// mixed window adds `mixed_strength` with a sign fixed by a hash of its
/// tokens. A question's strength is `evidence_strength` scaled by a factor
/// drawn uniformly from `1 ± strength_spread`, keyed by its id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnswerSimConfig {
    pub evidence_strength: f64,
    pub strength_spread: f64,
    pub mixed_strength: f64,
    pub memory_prior: f64,
    /// Answers whose top probability falls below this are uncertain.
    pub certainty_floor: f64,
}

impl Default for AnswerSimConfig {
    fn default() -> Self {
        Self {
            evidence_strength: 2.0,
            strength_spread: 0.75,
            mixed_strength: 2.0,
            memory_prior: 0.5,
            certainty_floor: 0.8,
        }
    }
}

fn unit_hash(text: &str) -> f64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")) as f64 / u64::MAX as f64
}

fn token_sign(tokens: &[String]) -> f64 {
    if unit_hash(&tokens.join("\u{1f}")) < 0.5 {
        1.0
    } else {
        -1.0
    }
}

pub fn simulate_answer(
    sample: &EvalSample,
    kept: &[WindowSpec],
    cfg: &AnswerSimConfig,
) -> AnswerRecord {
    let ctx = &sample.context;
    let memory = if sample.closed_book_correct {
        cfg.memory_prior
    } else {
        -cfg.memory_prior
    };
    let strength =
        cfg.evidence_strength * (1.0 + cfg.strength_spread * (2.0 * unit_hash(&sample.id) - 1.0));
    let evidence: f64 = kept
        .iter()
        .map(|w| {
            if w.is_mixed(ctx) {
                cfg.mixed_strength * token_sign(ctx.window_tokens(w))
            } else {
                strength
            }
        })
        .sum();
    let logit = memory + evidence;
    let p_ref = sigmoid(logit);
    let chose_ref = logit >= 0.0;
    let p_chosen = if chose_ref { p_ref } else { 1.0 - p_ref };
    let chosen_sign = if chose_ref { 1.0 } else { -1.0 };
    let answer_source = if p_chosen < cfg.certainty_floor {
        AnswerSource::Uncertain
    } else if evidence * chosen_sign <= 0.0 {
        AnswerSource::Memory
    } else if memory * chosen_sign < 0.0 || evidence.abs() > memory.abs() {
        AnswerSource::Context
    } else {
        AnswerSource::Memory
    };
    AnswerRecord {
        id: sample.id.clone(),
        closed_book_correct: sample.closed_book_correct,
        answer_source,
        correct: answer_source != AnswerSource::Uncertain && chose_ref,
        token_logprobs: Some(vec![p_chosen.ln()]),
    }
}

/// Outcome of running one filter configuration over an eval corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantOutcome {
    pub records: Vec<AnswerRecord>,
    pub windows: usize,
    pub accepted: usize,
    pub accepted_mixed: usize,
    pub rejected_mixed: usize,
    /// Windows whose decision matches their provenance (accept pure, reject mixed).
    pub correct_decisions: usize,
}

impl VariantOutcome {
    pub fn window_accuracy(&self) -> f64 {
        self.correct_decisions as f64 / self.windows as f64
    }

    pub fn accepted_mixed_fraction(&self) -> Option<f64> {
        (self.accepted > 0).then(|| self.accepted_mixed as f64 / self.accepted as f64)
    }

    pub fn rejected_mixed_fraction(&self) -> Option<f64> {
        let rejected = self.windows - self.accepted;
        (rejected > 0).then(|| self.rejected_mixed as f64 / rejected as f64)
    }
}

pub fn run_variant<F: FeatureSource + ?Sized>(
    ensemble: &LayerEnsemble,
    corpus: &[EvalSample],
    source: &F,
    filter: &FilterConfig,
    answers: &AnswerSimConfig,
) -> Result<VariantOutcome> {
    let mut out = VariantOutcome {
        records: Vec::with_capacity(corpus.len()),
        windows: 0,
        accepted: 0,
        accepted_mixed: 0,
        rejected_mixed: 0,
        correct_decisions: 0,
    };
    for sample in corpus {
        let result = filter_context(ensemble, &sample.query, &sample.context, source, filter)?;
        for d in &result.decisions {
            let mixed = d.window.is_mixed(&sample.context);
            out.windows += 1;
            match (d.accepted, mixed) {
                (true, true) => out.accepted_mixed += 1,
                (false, true) => out.rejected_mixed += 1,
                _ => {}
            }
            out.accepted += usize::from(d.accepted);
            out.correct_decisions += usize::from(d.accepted != mixed);
        }
        out.records
            .push(simulate_answer(sample, &result.kept, answers));
    }
    Ok(out)
}

/// Scoring wall time with features precomputed. Windows are scored one
/// call at a time, as a streaming filter would, so the cost of a context
/// is proportional to its window count. The fastest of `repeats` passes
/// is kept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Latency {
    pub ms_per_context: f64,
    pub ms_per_window: f64,
}

pub fn measure_latency<F: FeatureSource + ?Sized>(
    ensemble: &LayerEnsemble,
    corpus: &[EvalSample],
    source: &F,
    window_len: usize,
    stride: usize,
    repeats: usize,
) -> Result<Latency> {
    let mut batches = Vec::with_capacity(corpus.len());
    for sample in corpus {
        let windows = sliding_windows(sample.context.len(), window_len, stride)?;
        let feats = windows
            .iter()
            .map(|w| source.layer_features(&sample.context, w))
            .collect::<Result<Vec<_>>>()?;
        batches.push((windows, feats));
    }
    let n_windows: usize = batches.iter().map(|(w, _)| w.len()).sum();
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        for (windows, feats) in &batches {
            for (w, f) in windows.iter().zip(feats) {
                std::hint::black_box(score_window(ensemble, *w, f)?);
            }
        }
        best = best.min(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(Latency {
        ms_per_context: best / corpus.len() as f64,
        ms_per_window: best / n_windows as f64,
    })
}

/// Grid over the threshold, the bottleneck strength and the window length.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub xi: Vec<f64>,
    pub beta: Vec<f64>,
    pub window_len: Vec<usize>,
}

impl SweepGrid {
    pub fn single(xi: f64, beta: f64, window_len: usize) -> Self {
        Self {
            xi: vec![xi],
            beta: vec![beta],
            window_len: vec![window_len],
        }
    }

    pub fn len(&self) -> usize {
        self.xi.len() * self.beta.len() * self.window_len.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Applies an axis spec `name=start:end:step` or `name=v1,v2,...`.
    pub fn apply(&mut self, spec: &str) -> Result<()> {
        let (name, values) = parse_axis(spec)?;
        match name {
            "xi" => self.xi = values,
            "beta" => self.beta = values,
            "window_len" | "window" => {
                self.window_len = values
                    .iter()
                    .map(|v| {
                        if *v >= 1.0 && v.fract() == 0.0 {
                            Ok(*v as usize)
                        } else {
                            Err(Error::validation(format!(
                                "window length {v} is not a positive integer"
                            )))
                        }
                    })
                    .collect::<Result<_>>()?
            }
            other => {
                return Err(Error::validation(format!(
                    "unknown sweep axis {other:?} (xi | beta | window_len)"
                )))
            }
        }
        Ok(())
    }
}

fn parse_axis(spec: &str) -> Result<(&str, Vec<f64>)> {
    let (name, body) = spec
        .split_once('=')
        .ok_or_else(|| Error::validation(format!("grid spec {spec:?} lacks '='")))?;
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::validation(format!("grid spec {spec:?}: bad number {s:?}")))
    };
    let values = match body.split(':').collect::<Vec<_>>()[..] {
        [start, end, step] => {
            let (start, end, step) = (num(start)?, num(end)?, num(step)?);
            if step.is_nan() || step <= 0.0 || end < start {
                return Err(Error::validation(format!(
                    "grid spec {spec:?}: empty range"
                )));
            }
            let n = ((end - start) / step + 1e-9).floor() as usize + 1;
            (0..n).map(|i| start + i as f64 * step).collect()
        }
        [_] => body.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => {
            return Err(Error::validation(format!(
                "grid spec {spec:?}: expected start:end:step"
            )))
        }
    };
    if values.is_empty() {
        return Err(Error::validation(format!(
            "grid spec {spec:?} has no values"
        )));
    }
    Ok((name.trim(), values))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub xi: f64,
    pub beta: f64,
    pub window_len: usize,
    pub mean_auc: f64,
    pub acc: f64,
    pub uar: f64,
    pub window_accuracy: f64,
    pub mean_psi: f64,
    pub tre: f64,
    pub latency_ms_per_context: f64,
    pub latency_ms_per_window: f64,
}

/// Runs every grid point. `ensemble_for(beta)` supplies a trained ensemble
/// and its mean held-out AUC; it is called once per distinct `beta`.
pub fn sweep<F, E>(
    grid: &SweepGrid,
    corpus: &[EvalSample],
    source: &F,
    base: &FilterConfig,
    answers: &AnswerSimConfig,
    mut ensemble_for: E,
) -> Result<Vec<SweepRow>>
where
    F: FeatureSource + ?Sized,
    E: FnMut(f64) -> Result<(LayerEnsemble, f64)>,
{
    if grid.is_empty() {
        return Err(Error::validation("sweep grid is empty"));
    }
    if corpus.is_empty() {
        return Err(Error::validation("eval corpus is empty"));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &beta in &grid.beta {
        let (mut ensemble, mean_auc) = ensemble_for(beta)?;
        let mut latency = BTreeMap::new();
        for &window_len in &grid.window_len {
            let filter = FilterConfig {
                window_len,
                stride: window_len,
                ..base.clone()
            };
            for &xi in &grid.xi {
                ensemble.set_xi(xi)?;
                let outcome = run_variant(&ensemble, corpus, source, &filter, answers)?;
                let report = compute_report(&outcome.records)?;
                if let Entry::Vacant(slot) = latency.entry(window_len) {
                    slot.insert(measure_latency(
                        &ensemble, corpus, source, window_len, window_len, 5,
                    )?);
                }
                let l = latency[&window_len];
                rows.push(SweepRow {
                    xi,
                    beta,
                    window_len,
                    mean_auc,
                    acc: report.acc,
                    uar: report.uar,
                    window_accuracy: outcome.window_accuracy(),
                    mean_psi: report.mean_psi.value().unwrap_or(f64::NAN),
                    tre: report.tre,
                    latency_ms_per_context: l.ms_per_context,
                    latency_ms_per_window: l.ms_per_window,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Pearson correlation between the Mean-ψ and TRE columns of sweep rows.
pub fn psi_tre_coupling(rows: &[SweepRow]) -> Result<Metric> {
    let runs: Vec<(f64, f64)> = rows.iter().map(|r| (r.mean_psi, r.tre)).collect();
    crate::metrics::psi_tre_correlation(&runs)
}
