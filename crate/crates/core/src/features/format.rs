// SPDX-License-Identifier: Apache-2.0

//! SVF1 (labelled training) and SVQ1 (unlabelled inference) feature files.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! header (25 bytes)
//!   magic         [u8; 4]   "SVF1" | "SVQ1"
//!   version       u32       1
//!   layer_index   u32
//!   feature_dim   u32       D
//!   record_count  u64
//!   has_labels    u8        1 for SVF1, 0 for SVQ1
//! record (repeated record_count times)
//!   window_ref    u64
//!   label         u8        SVF1 only; 0 or 1
//!   features      [f32; D]
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::util::write_atomic;

pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Training,
    Inference,
}

impl FileKind {
    pub fn magic(self) -> &'static [u8; 4] {
        match self {
            FileKind::Training => b"SVF1",
            FileKind::Inference => b"SVQ1",
        }
    }

    fn has_labels(self) -> bool {
        self == FileKind::Training
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub window_ref: u64,
    pub label: Option<u8>,
    pub features: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub kind: FileKind,
    pub layer_index: u32,
    pub feature_dim: u32,
    pub records: Vec<FeatureRecord>,
}

impl FeatureFile {
    pub fn new(kind: FileKind, layer_index: u32, feature_dim: u32) -> Self {
        Self {
            kind,
            layer_index,
            feature_dim,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, window_ref: u64, label: Option<u8>, features: &[f64]) -> Result<()> {
        let record = FeatureRecord {
            window_ref,
            label,
            features: features.iter().map(|&v| v as f32).collect(),
        };
        self.check_record(&record)?;
        self.records.push(record);
        Ok(())
    }

    fn check_record(&self, r: &FeatureRecord) -> Result<()> {
        if r.features.len() != self.feature_dim as usize {
            return Err(Error::validation(format!(
                "record has {} features, file dimension is {}",
                r.features.len(),
                self.feature_dim
            )));
        }
        match (self.kind, r.label) {
            (FileKind::Training, Some(0 | 1)) | (FileKind::Inference, None) => Ok(()),
            (FileKind::Training, Some(l)) => {
                Err(Error::validation(format!("label {l} is not binary")))
            }
            (FileKind::Training, None) => Err(Error::validation("training records need a label")),
            (FileKind::Inference, Some(_)) => {
                Err(Error::validation("inference records carry no label"))
            }
        }
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().filter_map(|r| r.label).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        for r in &self.records {
            self.check_record(r)?;
        }
        let per_record = 8 + usize::from(self.kind.has_labels()) + 4 * self.feature_dim as usize;
        let mut out = Vec::with_capacity(HEADER_LEN + per_record * self.records.len());
        out.extend_from_slice(self.kind.magic());
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.layer_index.to_le_bytes());
        out.extend_from_slice(&self.feature_dim.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        out.push(u8::from(self.kind.has_labels()));
        for r in &self.records {
            out.extend_from_slice(&r.window_ref.to_le_bytes());
            if let Some(label) = r.label {
                out.push(label);
            }
            for v in &r.features {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(
                "header",
                format!("file has {} bytes, header needs {HEADER_LEN}", bytes.len()),
            ));
        }
        let kind = match &bytes[0..4] {
            b"SVF1" => FileKind::Training,
            b"SVQ1" => FileKind::Inference,
            other => {
                return Err(Error::format(
                    "magic",
                    format!("bad magic {:?}", String::from_utf8_lossy(other)),
                ))
            }
        };
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != FORMAT_VERSION {
            return Err(Error::format(
                "version",
                format!("unsupported version {version}, expected {FORMAT_VERSION}"),
            ));
        }
        let layer_index = u32_at(8);
        let feature_dim = u32_at(12);
        let record_count = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let has_labels = bytes[24];
        if has_labels > 1 || (has_labels == 1) != kind.has_labels() {
            return Err(Error::format(
                "has_labels",
                format!("flag {has_labels} does not match magic {:?}", kind.magic()),
            ));
        }

        let dim = feature_dim as usize;
        let per_record = 8 + usize::from(kind.has_labels()) + 4 * dim;
        let payload = &bytes[HEADER_LEN..];
        let expected = usize::try_from(record_count)
            .ok()
            .and_then(|n| n.checked_mul(per_record));
        if expected != Some(payload.len()) {
            return Err(Error::format(
                "record_count",
                format!(
                    "record_count mismatch: header says {record_count}, payload holds {} bytes ({} per record)",
                    payload.len(),
                    per_record
                ),
            ));
        }

        let mut records = Vec::with_capacity(record_count as usize);
        for chunk in payload.chunks_exact(per_record) {
            let window_ref = u64::from_le_bytes(chunk[0..8].try_into().unwrap());
            let (label, rest) = if kind.has_labels() {
                let l = chunk[8];
                if l > 1 {
                    return Err(Error::format(
                        "label",
                        format!("label byte {l} is not binary"),
                    ));
                }
                (Some(l), &chunk[9..])
            } else {
                (None, &chunk[8..])
            };
            let features = rest
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            records.push(FeatureRecord {
                window_ref,
                label,
                features,
            });
        }
        Ok(Self {
            kind,
            layer_index,
            feature_dim,
            records,
        })
    }
}

pub fn write_feature_file(path: &Path, file: &FeatureFile) -> Result<()> {
    write_atomic(path, &file.to_bytes()?)?;
    Ok(())
}

pub fn read_feature_file(path: &Path) -> Result<FeatureFile> {
    FeatureFile::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(kind: FileKind) -> FeatureFile {
        let mut f = FeatureFile::new(kind, 3, 4);
        let label = |l| (kind == FileKind::Training).then_some(l);
        f.push(10, label(1), &[0.5, -1.25, 3.0, 0.0]).unwrap();
        f.push(11, label(0), &[f64::MAX, 1e-40, -0.0, 7.0]).unwrap();
        f
    }

    #[test]
    fn header_layout_is_fixed() {
        let bytes = sample(FileKind::Training).to_bytes().unwrap();
        assert_eq!(&bytes[0..4], b"SVF1");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &4u32.to_le_bytes());
        assert_eq!(&bytes[16..24], &2u64.to_le_bytes());
        assert_eq!(bytes[24], 1);
        assert_eq!(bytes.len(), 25 + 2 * (8 + 1 + 16));
        assert_eq!(&bytes[25..33], &10u64.to_le_bytes());
        assert_eq!(bytes[33], 1);
        assert_eq!(&bytes[34..38], &0.5f32.to_le_bytes());

        let q = sample(FileKind::Inference).to_bytes().unwrap();
        assert_eq!(&q[0..4], b"SVQ1");
        assert_eq!(q[24], 0);
        assert_eq!(q.len(), 25 + 2 * (8 + 16));
    }

    #[test]
    fn round_trip_both_kinds() {
        for kind in [FileKind::Training, FileKind::Inference] {
            let f = sample(kind);
            let back = FeatureFile::from_bytes(&f.to_bytes().unwrap()).unwrap();
            assert_eq!(back, f);
        }
    }

    #[test]
    fn corrupt_inputs_name_the_field() {
        let good = sample(FileKind::Training).to_bytes().unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        let e = FeatureFile::from_bytes(&bad).unwrap_err();
        assert!(matches!(e, Error::Format { field: "magic", .. }));
        assert!(e.to_string().contains("bad magic"));

        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(
            FeatureFile::from_bytes(&bad).unwrap_err(),
            Error::Format {
                field: "version",
                ..
            }
        ));

        let truncated = &good[..good.len() - 3];
        let e = FeatureFile::from_bytes(truncated).unwrap_err();
        assert!(e.to_string().contains("record_count mismatch"), "{e}");

        let mut bad = good.clone();
        bad[16] = 7;
        assert!(FeatureFile::from_bytes(&bad)
            .unwrap_err()
            .to_string()
            .contains("record_count mismatch"));

        let mut bad = good.clone();
        bad[24] = 0;
        assert!(matches!(
            FeatureFile::from_bytes(&bad).unwrap_err(),
            Error::Format {
                field: "has_labels",
                ..
            }
        ));

        let mut bad = good;
        bad[33] = 2;
        assert!(matches!(
            FeatureFile::from_bytes(&bad).unwrap_err(),
            Error::Format { field: "label", .. }
        ));

        assert!(matches!(
            FeatureFile::from_bytes(b"SVF1").unwrap_err(),
            Error::Format {
                field: "header",
                ..
            }
        ));
    }

    #[test]
    fn push_validates_records() {
        let mut f = FeatureFile::new(FileKind::Training, 0, 2);
        assert!(f.push(0, Some(1), &[1.0]).is_err());
        assert!(f.push(0, None, &[1.0, 2.0]).is_err());
        assert!(f.push(0, Some(3), &[1.0, 2.0]).is_err());
        let mut q = FeatureFile::new(FileKind::Inference, 0, 2);
        assert!(q.push(0, Some(1), &[1.0, 2.0]).is_err());
    }
}
