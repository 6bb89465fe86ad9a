// SPDX-License-Identifier: Apache-2.0

//! Sliding-window variational information bottleneck (Swin-VIB) filtering
//! of retrieved context.
//!
//! Retrieved context is cut into fixed-length windows. For each window, a
//! frozen language model's per-layer attention is reduced to a feature
//! vector, and one bottleneck classifier per layer estimates whether the
//! window carries a clear conflicting-or-supplementary signal. Windows
//! whose ensemble-averaged acceptance probability falls below a threshold
//! are dropped before the prompt is assembled.
//!
//! The crate also carries the uncertainty metrics used to evaluate the
//! effect on answers, and a small numerical harness for the entropy
//! arguments behind the method.

pub mod config;
pub mod error;
pub mod features;
pub mod filter;
pub mod metrics;
pub mod sim;
pub mod theory;
pub mod uncertainty;
mod util;
pub mod vib;
pub mod windowing;

pub use error::{Error, Result};
pub use util::{derive_seed, sha256_hex, write_atomic};
