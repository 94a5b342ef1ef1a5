//! Robustness certification of feed-forward ReLU classifiers over semantic
//! feature neighborhoods (brightness, contrast, hue, saturation, lightness).
//!
//! The certifier splits a feature neighborhood into a sequence of analyzer
//! calls and predicts each step's diameter by fitting parametric models of the
//! analyzer's proof velocity and sensitivity, so that large certifiable parts
//! are taken in one step and the robustness frontier is approached without
//! wasting calls on doomed diameters. Reference splitting strategies
//! (long-edge branch-and-bound, uniform splitting, a greedy oracle) share the
//! same analyzer and report schema for comparison.
//!
//! The built-in analyzer propagates per-neuron linear bounds with full
//! back-substitution over an input box, so every certificate is sound with
//! respect to the concrete network semantics (up to floating-point rounding,
//! which is not outward-rounded).
//!
//! # Crate layout
//!
//! - [`net`] — network representation, inference, JSON model format
//! - [`feature`] — perturbation functions and their composition
//! - [`encode`] — sound affine enclosures of feature neighborhoods
//! - [`analyzer`] — the linear-relaxation box analyzer
//! - [`predictor`] — velocity/sensitivity regression and step-size solving
//! - [`region`] — certified-region geometry: vertices, diameters, offsets
//! - [`scheduler`] — the adaptive verification loops
//! - [`baselines`] — branch-and-bound, uniform splitting, greedy oracle
//! - [`report`] — step logs, CSV summaries
//! - [`fixtures`] — deterministic model/input generators
//! - [`harness`] — experiment runner used by the CLI
//!
//! # Running examples
//!
//! Each major capability has a runnable example:
//!
//! ```bash
//! cargo run --release --example verify_brightness
//! cargo run --release --example verify_two_features
//! cargo run --release --example compare_strategies
//! ```

pub mod analyzer;
pub mod baselines;
pub mod encode;
pub mod feature;
pub mod fixtures;
pub mod harness;
pub mod net;
pub mod predictor;
pub mod region;
pub mod report;
pub mod scheduler;

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum CertError {
    /// A tensor or layer dimension does not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A caller violated an operation's contract (e.g. offset out of range).
    #[error("contract violation: {0}")]
    Contract(String),
    /// A model or configuration is structurally invalid.
    #[error("invalid model: {0}")]
    Model(String),
    /// The requested feature combination has no sound encoding.
    #[error("unsupported feature combination: {0}")]
    UnsupportedFeatures(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CertError>;
