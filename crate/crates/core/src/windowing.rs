// SPDX-License-Identifier: Apache-2.0

//! Token sequences tagged by source, and the windows cut from them.

use std::io::BufRead;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW_LEN: usize = 7;
pub const DEFAULT_BLOCK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Conflicting,
    Supplementary,
}

impl Source {
    pub fn other(self) -> Self {
        match self {
            Source::Conflicting => Source::Supplementary,
            Source::Supplementary => Source::Conflicting,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    tokens: Vec<String>,
    tags: Vec<Source>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<String>, tags: Vec<Source>) -> Result<Self> {
        if tokens.len() != tags.len() {
            return Err(Error::validation(format!(
                "{} tokens but {} source tags",
                tokens.len(),
                tags.len()
            )));
        }
        Ok(Self { tokens, tags })
    }

    /// Every token tagged with the same source.
    pub fn single_source<S: Into<String>>(
        tokens: impl IntoIterator<Item = S>,
        source: Source,
    ) -> Self {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let tags = vec![source; tokens.len()];
        Self { tokens, tags }
    }

    /// Whitespace tokenization; the default tokenizer of the CLI.
    pub fn from_text(text: &str, source: Source) -> Self {
        Self::single_source(text.split_whitespace(), source)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn tags(&self) -> &[Source] {
        &self.tags
    }

    pub fn push(&mut self, token: String, tag: Source) {
        self.tokens.push(token);
        self.tags.push(tag);
    }

    pub fn extend_from(&mut self, other: &TokenSequence) {
        self.tokens.extend_from_slice(&other.tokens);
        self.tags.extend_from_slice(&other.tags);
    }

    pub fn window_tokens(&self, w: &WindowSpec) -> &[String] {
        &self.tokens[w.start..w.end()]
    }

    pub fn window_tags(&self, w: &WindowSpec) -> &[Source] {
        &self.tags[w.start..w.end()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowSpec {
    pub start: usize,
    pub length: usize,
    pub window_index: usize,
}

impl WindowSpec {
    pub fn end(&self) -> usize {
        self.start + self.length
    }

    /// Tags of the covered tokens are not all equal.
    pub fn is_mixed(&self, seq: &TokenSequence) -> bool {
        let tags = seq.window_tags(self);
        tags.iter().any(|t| *t != tags[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub window: WindowSpec,
    /// 1 for a single-source window, 0 for a mixed one.
    pub label: u8,
}

/// Alternates `block`-token runs of the two inputs, `first` source leading.
/// Once one input runs out, the rest of the other is appended.
pub fn interleave_mixed(
    supplementary: &TokenSequence,
    conflicting: &TokenSequence,
    block: usize,
    first: Source,
) -> Result<TokenSequence> {
    if block < 1 {
        return Err(Error::validation("interleave block must be >= 1"));
    }
    let (lead, follow) = match first {
        Source::Supplementary => (supplementary, conflicting),
        Source::Conflicting => (conflicting, supplementary),
    };
    let mut out = TokenSequence::default();
    let (mut i, mut j) = (0, 0);
    while i < lead.len() || j < follow.len() {
        for (src, pos) in [(lead, &mut i), (follow, &mut j)] {
            let end = (*pos + block).min(src.len());
            for k in *pos..end {
                out.push(src.tokens[k].clone(), src.tags[k]);
            }
            *pos = end;
        }
    }
    Ok(out)
}

/// Uniformly placed window of exactly `len` tokens.
pub fn random_window<R: Rng + ?Sized>(
    seq: &TokenSequence,
    len: usize,
    rng: &mut R,
) -> Result<WindowSpec> {
    if len == 0 {
        return Err(Error::validation("window length must be >= 1"));
    }
    if seq.len() < len {
        return Err(Error::validation(format!(
            "sequence of {} tokens is shorter than the window length {len}; pad or skip the sample",
            seq.len()
        )));
    }
    let start = rng.random_range(0..=seq.len() - len);
    Ok(WindowSpec {
        start,
        length: len,
        window_index: 0,
    })
}

pub fn random_window_seeded(seq: &TokenSequence, len: usize, seed: u64) -> Result<WindowSpec> {
    random_window(seq, len, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Windows of `len` tokens starting every `stride` tokens. The last window
/// may be shorter. With `stride == len` this is a partition of the sequence.
pub fn sliding_windows(seq_len: usize, len: usize, stride: usize) -> Result<Vec<WindowSpec>> {
    if len == 0 || stride == 0 {
        return Err(Error::validation("window length and stride must be >= 1"));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start < seq_len {
        let length = len.min(seq_len - start);
        out.push(WindowSpec {
            start,
            length,
            window_index: out.len(),
        });
        if start + length == seq_len {
            break;
        }
        start += stride;
    }
    Ok(out)
}

pub fn partition_windows(seq_len: usize, len: usize) -> Result<Vec<WindowSpec>> {
    sliding_windows(seq_len, len, len)
}

pub fn label_window(seq: &TokenSequence, window: WindowSpec) -> LabeledWindow {
    LabeledWindow {
        window,
        label: u8::from(!window.is_mixed(seq)),
    }
}

/// One line of the JSON-lines corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub query: String,
    pub supplementary_tokens: Vec<String>,
    pub conflicting_tokens: Vec<String>,
}

impl CorpusRecord {
    pub fn supplementary(&self) -> TokenSequence {
        TokenSequence::single_source(
            self.supplementary_tokens.iter().cloned(),
            Source::Supplementary,
        )
    }

    pub fn conflicting(&self) -> TokenSequence {
        TokenSequence::single_source(self.conflicting_tokens.iter().cloned(), Source::Conflicting)
    }
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<CorpusRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format("corpus", format!("line {}: {e}", lineno + 1)))?;
        out.push(rec);
    }
    Ok(out)
}
