// SPDX-License-Identifier: Apache-2.0

//! Answer-level evaluation: preference rates, accuracy, correction and
//! resistance rates, response entropy and Mean-ψ.

use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::uncertainty::{mean_psi, total_response_entropy, ResponseTally, TokenLikelihoods};

/// A rate that may be undefined because its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Value(f64),
    Undefined,
}

impl Metric {
    fn ratio(num: usize, den: usize) -> Self {
        if den == 0 {
            Metric::Undefined
        } else {
            Metric::Value(num as f64 / den as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(v),
            Metric::Undefined => None,
        }
    }

    pub fn is_undefined(self) -> bool {
        self == Metric::Undefined
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Value(v) => write!(f, "{v}"),
            Metric::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Metric::Value(v) => s.serialize_f64(*v),
            Metric::Undefined => s.serialize_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerSource {
    Memory,
    Context,
    Uncertain,
}

/// One evaluated answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub id: String,
    /// Answered correctly without any context (membership in `L`).
    pub closed_book_correct: bool,
    pub answer_source: AnswerSource,
    /// Answered correctly with the (conflicting) context.
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
}

impl AnswerRecord {
    /// Wrong closed-book, right with context.
    pub fn corrected(&self) -> bool {
        !self.closed_book_correct && self.correct
    }

    /// Right closed-book and still right with context.
    pub fn resisted(&self) -> bool {
        self.closed_book_correct && self.correct
    }
}

/// Additive counts behind a [`MetricsReport`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    #[serde(rename = "S")]
    pub s: usize,
    pub f_m: usize,
    pub f_c: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "C_r")]
    pub c_r: usize,
    #[serde(rename = "C_crt")]
    pub c_crt: usize,
    #[serde(rename = "C_def")]
    pub c_def: usize,
}

impl Counts {
    pub fn add(&mut self, r: &AnswerRecord) {
        self.s += 1;
        match r.answer_source {
            AnswerSource::Memory => self.f_m += 1,
            AnswerSource::Context => self.f_c += 1,
            AnswerSource::Uncertain => {}
        }
        self.l += usize::from(r.closed_book_correct);
        self.c_r += usize::from(r.correct);
        self.c_crt += usize::from(r.corrected());
        self.c_def += usize::from(r.resisted());
    }

    pub fn merge(self, o: Counts) -> Counts {
        Counts {
            s: self.s + o.s,
            f_m: self.f_m + o.f_m,
            f_c: self.f_c + o.f_c,
            l: self.l + o.l,
            c_r: self.c_r + o.c_r,
            c_crt: self.c_crt + o.c_crt,
            c_def: self.c_def + o.c_def,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub struct MetricsReport {
    #[serde(flatten)]
    pub counts: Counts,
    pub mpr: f64,
    pub cpr: f64,
    pub uar: f64,
    pub acc: f64,
    pub cr: Metric,
    pub rr: Metric,
    pub tre: f64,
    #[serde(rename = "mean_psi")]
    pub mean_psi: Metric,
}

impl MetricsReport {
    pub fn from_counts(counts: Counts, mean_psi: Metric) -> Result<Self> {
        let c = counts;
        if c.s == 0 {
            return Err(Error::validation("no answer records"));
        }
        let s = c.s as f64;
        let uncertain = c.s - c.f_m - c.f_c;
        let acc = c.c_r as f64 / s;
        let uar = uncertain as f64 / s;
        let tally = ResponseTally::new(acc, uar)?;
        Ok(Self {
            counts: c,
            mpr: c.f_m as f64 / s,
            cpr: c.f_c as f64 / s,
            uar,
            acc,
            cr: Metric::ratio(c.c_crt, c.s - c.l),
            rr: Metric::ratio(c.c_def, c.l),
            tre: total_response_entropy(&tally),
            mean_psi,
        })
    }

    pub fn has_undefined(&self) -> bool {
        self.cr.is_undefined() || self.rr.is_undefined() || self.mean_psi.is_undefined()
    }

    pub const CSV_HEADER: [&'static str; 15] = [
        "S", "f_m", "f_c", "L", "C_r", "C_crt", "C_def", "MPR", "CPR", "UAR", "ACC", "CR", "RR",
        "TRE", "mean_psi",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        let c = &self.counts;
        vec![
            c.s.to_string(),
            c.f_m.to_string(),
            c.f_c.to_string(),
            c.l.to_string(),
            c.c_r.to_string(),
            c.c_crt.to_string(),
            c.c_def.to_string(),
            self.mpr.to_string(),
            self.cpr.to_string(),
            self.uar.to_string(),
            self.acc.to_string(),
            self.cr.to_string(),
            self.rr.to_string(),
            self.tre.to_string(),
            self.mean_psi.to_string(),
        ]
    }
}

pub fn compute_report(records: &[AnswerRecord]) -> Result<MetricsReport> {
    let mut counts = Counts::default();
    let mut likelihoods = Vec::new();
    for r in records {
        if r.correct && r.answer_source == AnswerSource::Uncertain {
            return Err(Error::validation(format!(
                "record {} is marked both correct and uncertain",
                r.id
            )));
        }
        counts.add(r);
        if let Some(lp) = &r.token_logprobs {
            likelihoods.push(TokenLikelihoods::new(lp.clone())?);
        }
    }
    let psi = if likelihoods.is_empty() {
        Metric::Undefined
    } else {
        Metric::Value(mean_psi(&likelihoods)?)
    };
    MetricsReport::from_counts(counts, psi)
}

pub fn read_answer_records<R: BufRead>(reader: R) -> Result<Vec<AnswerRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::format("answers", format!("line {}: {e}", lineno + 1)))?,
        );
    }
    Ok(out)
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercase, trim, drop terminal punctuation and English articles,
/// collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lower = text.to_lowercase();
    let trimmed = lower
        .trim()
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    trimmed
        .split_whitespace()
        .filter(|w| !ARTICLES.contains(w))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(prediction: &str, gold: &str) -> bool {
    normalize_answer(prediction) == normalize_answer(gold)
}

/// Pearson correlation of (Mean-ψ, TRE) pairs.
pub fn psi_tre_correlation(runs: &[(f64, f64)]) -> Result<Metric> {
    if runs.len() < 3 {
        return Err(Error::validation("correlation needs at least 3 runs"));
    }
    let n = runs.len() as f64;
    let mx = runs.iter().map(|r| r.0).sum::<f64>() / n;
    let my = runs.iter().map(|r| r.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in runs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Metric::Undefined);
    }
    Ok(Metric::Value((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

/// Area under the ROC curve via the rank-sum statistic, ties averaged.
/// `None` when either class is absent.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "one label per score");
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64 * avg_rank;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}
