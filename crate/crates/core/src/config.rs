// SPDX-License-Identifier: Apache-2.0

//! Run configuration shared by the command-line tools.
//!
//! A config file is plain text with one `key = value` pair per line.
//! Blank lines and lines starting with `#` are ignored, and keys use
//! snake_case:
//!
//! ```text
//! # svib.conf
//! window_len = 7
//! stride = 7
//! block = 4
//! xi = 0.68
//! beta = 1e-5
//! seed = 0
//! fallback = keep-top-1
//! separator = " "
//! corpus = data/corpus.jsonl
//! features = out/features
//! models = out/models
//! out = out
//! epochs = 200
//! learning_rate = 1e-3
//! batch_size = 64
//! ```
//!
//! Values may be wrapped in double quotes, which is the only way to give a
//! separator that starts or ends with whitespace. The `SVIB_CONFIG`
//! environment variable names the file to load when none is given
//! explicitly; command-line flags override anything read from it.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::filter::{FallbackPolicy, DEFAULT_XI};
use crate::vib::TrainConfig;
use crate::windowing::{DEFAULT_BLOCK, DEFAULT_WINDOW_LEN};

pub const CONFIG_ENV: &str = "SVIB_CONFIG";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub window_len: usize,
    /// `None` follows `window_len`.
    pub stride: Option<usize>,
    pub block: usize,
    pub xi: f64,
    pub beta: f64,
    pub seed: u64,
    pub fallback: FallbackPolicy,
    pub separator: String,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub corpus: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            window_len: DEFAULT_WINDOW_LEN,
            stride: None,
            block: DEFAULT_BLOCK,
            xi: DEFAULT_XI,
            beta: train.beta,
            seed: 0,
            fallback: FallbackPolicy::default(),
            separator: " ".to_string(),
            epochs: train.epochs,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            corpus: None,
            features: None,
            models: None,
            out: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::validation(format!("config key {key}: cannot parse {value:?}")))
}

impl RunConfig {
    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.window_len)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "window_len" => self.window_len = parse(key, value)?,
            "stride" => self.stride = Some(parse(key, value)?),
            "block" => self.block = parse(key, value)?,
            "xi" => self.xi = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "fallback" => self.fallback = value.parse()?,
            "separator" => self.separator = value.to_string(),
            "epochs" => self.epochs = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "corpus" => self.corpus = Some(value.into()),
            "features" => self.features = Some(value.into()),
            "models" => self.models = Some(value.into()),
            "out" => self.out = Some(value.into()),
            other => return Err(Error::validation(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::validation(format!("config line {}: expected key = value", lineno + 1))
            })?;
            let value = value.trim();
            let value = value
                .strip_prefix('"')
                .and_then(|v| v.strip_suffix('"'))
                .unwrap_or(value);
            cfg.set(key.trim(), value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse_str(&fs::read_to_string(path)?)
    }

    /// Loads `explicit` if given, else the file named by `SVIB_CONFIG`,
    /// else the defaults.
    pub fn load(explicit: Option<&Path>) -> Result<Self> {
        match explicit {
            Some(p) => Self::from_file(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::from_file(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.stride() == 0 || self.block == 0 {
            return Err(Error::validation(
                "window_len, stride and block must be positive",
            ));
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return Err(Error::validation(format!("xi {} outside [0, 1]", self.xi)));
        }
        self.train_config().validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            beta: self.beta,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!((c.window_len, c.stride(), c.block), (7, 7, 4));
        assert_eq!((c.xi, c.beta), (0.68, 1e-5));
        assert_eq!(c.fallback, FallbackPolicy::KeepTop1);
        assert_eq!(c.separator, " ");
    }

    #[test]
    fn parses_file_text() {
        let c = RunConfig::parse_str(
            "# comment\n\nwindow_len = 9\nxi=0.5\nfallback = empty-context\nseparator = \" | \"\nmodels = m\n",
        )
        .unwrap();
        assert_eq!(c.window_len, 9);
        assert_eq!(c.stride(), 9);
        assert_eq!(c.xi, 0.5);
        assert_eq!(c.fallback, FallbackPolicy::EmptyContext);
        assert_eq!(c.separator, " | ");
        assert_eq!(c.models, Some(PathBuf::from("m")));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse_str("nope = 1").is_err());
        assert!(RunConfig::parse_str("xi").is_err());
        assert!(RunConfig::parse_str("xi = 2").is_err());
        assert!(RunConfig::parse_str("window_len = x").is_err());
        assert!(RunConfig::parse_str("beta = 0").is_err());
    }
}
