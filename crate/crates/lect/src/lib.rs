//! Energy-based OOD detection for text-attributed graphs with generated
//! pseudo-OOD nodes.
//!
//! The pipeline: ingest a node-text graph, wire pseudo-OOD nodes to random
//! training neighborhoods, generate their texts (chain-of-thought LLM or the
//! offline template generator), encode all texts with a frozen encoder, train
//! a projector + two-layer graph convolution with contrastive energy losses,
//! then detect OOD nodes by thresholded energy.

pub mod cli;
pub mod contrastive;
pub mod encode;
pub mod energy;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod net;
pub mod oodgen;
pub mod seeds;
pub mod trainer;
pub mod vocab;

pub use error::{LectError, Result};
