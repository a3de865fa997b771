//! Explainable offline signature verification.
//!
//! A questioned signature is compared against a writer's reference set and a
//! universal background model (UBM) of third-party signatures. The evidence is
//! a distance-ratio likelihood ratio per feature channel, together with the
//! probability that it belongs to the UBM or the reference LR population.
//!
//! Modules, bottom-up:
//! - [`corpus`]: image loading, preprocessing and dataset manifests;
//! - [`features`]: handcrafted feature channels and the exchange format;
//! - [`distances`]: DTW, l1 and cosine matching;
//! - [`ubm`]: construction and persistence of the background model;
//! - [`evidence`]: likelihood ratios, membership probabilities and fusion;
//! - [`evaluation`]: enrollment protocols, DET curves, EER and sweeps.

pub mod corpus;
pub mod distances;
pub mod error;
pub mod evaluation;
pub mod evidence;
pub mod exec;
pub mod features;
pub mod synth;
pub mod ubm;

pub use error::{Error, Result};
pub use exec::Execution;
