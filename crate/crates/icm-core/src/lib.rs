//! Localization and control of implicit attribute decisions in a small
//! diffusion testbed.
//!
//! The pipeline: generate images under an underspecified condition, capture
//! pooled activations at named attention sites, pseudo-label the outputs with
//! a pixel oracle, fit linear probes per (layer, timestep), rank layers by
//! probe accuracy, and intervene on the top-ranked sites — either by adding
//! probe-derived steering vectors during sampling or by fine-tuning low-rank
//! adapters on the selected layers only.

pub mod actstore;
pub mod probekit;
pub mod rng;
pub mod scalar;
pub mod toydiff;
pub mod types;

pub use scalar::Scalar;
pub use types::{Branch, LayerId};

/// Probes and metrics run in f64; these are the concrete working types.
pub type ProbeModel = probekit::ProbeModel<f64>;
pub type ScalerStats = probekit::ScalerStats<f64>;
pub type SteeringVector = probekit::SteeringVector<f64>;
pub type ProbeDataset = actstore::ProbeDataset<f64>;
