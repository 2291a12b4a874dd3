//! Personality-aware human-centric multimodal reasoning.
//!
//! The crate covers the full loop around a small multiple-choice behavior
//! prediction task grounded in video clips: a typed clip-episode corpus
//! with timeline trisection and dataset splits, a synthetic corpus
//! generator with verifiable gold traces, subword/embedding/feature
//! encoders, an attention-based reasoner whose answer distribution fuses
//! dialogue, video and behavior evidence under personality conditioning, a
//! personality predictor that can replace gold profiles in a second stage,
//! multi-label metrics with a paired bootstrap test, and a training
//! harness with rule baselines, ablations and reports.
//!
//! Start with the `examples/` directory: each file exercises one capability
//! end to end. The `phmr` binary exposes the same flows as subcommands.

pub mod analysis;
pub mod autodiff;
pub mod config;
pub mod corpus;
pub mod encode;
pub mod error;
pub mod mbti;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod syngen;
pub mod text;
pub mod train;

#[cfg(test)]
pub(crate) mod testsupport;

pub use error::{Error, Result};
