// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{sha256_hex, write_atomic};
use crate::windowing::Source;

/// Bundle of per-layer feature files. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model_name: String,
    #[serde(rename = "N")]
    pub n_layers: usize,
    #[serde(rename = "D")]
    pub feature_dim: usize,
    pub window_len: usize,
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub held_out_files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
    /// sha256 of each entry of `files` then `held_out_files`, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub file_hashes: Vec<String>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.files.len() != self.n_layers {
            return Err(Error::format(
                "manifest",
                format!("N={} but {} files listed", self.n_layers, self.files.len()),
            ));
        }
        if !self.held_out_files.is_empty() && self.held_out_files.len() != self.n_layers {
            return Err(Error::format(
                "manifest",
                format!(
                    "N={} but {} held-out files listed",
                    self.n_layers,
                    self.held_out_files.len()
                ),
            ));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Manifest = serde_json::from_slice(&fs::read(path)?)
            .map_err(|e| Error::format("manifest", e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    /// Serialized form; stable for identical content.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        self.validate()?;
        let bytes = self.to_bytes()?;
        write_atomic(path, &bytes)?;
        Ok(sha256_hex(&bytes))
    }

    pub fn resolve(manifest_path: &Path, entry: &str) -> PathBuf {
        manifest_path
            .parent()
            .map_or_else(|| PathBuf::from(entry), |d| d.join(entry))
    }

    pub fn training_paths(&self, manifest_path: &Path) -> Vec<PathBuf> {
        self.files
            .iter()
            .map(|f| Self::resolve(manifest_path, f))
            .collect()
    }

    pub fn held_out_paths(&self, manifest_path: &Path) -> Vec<PathBuf> {
        self.held_out_files
            .iter()
            .map(|f| Self::resolve(manifest_path, f))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowTruth {
    Conflicting,
    Supplementary,
    Mixed,
}

impl WindowTruth {
    pub fn label(self) -> u8 {
        u8::from(self != WindowTruth::Mixed)
    }

    pub fn from_source(source: Option<Source>) -> Self {
        match source {
            Some(Source::Conflicting) => WindowTruth::Conflicting,
            Some(Source::Supplementary) => WindowTruth::Supplementary,
            None => WindowTruth::Mixed,
        }
    }
}

/// True source of every held-out synthetic window, keyed by `window_ref`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub windows: Vec<(u64, WindowTruth)>,
}
