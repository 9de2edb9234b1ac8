//! Aspect-based sentence embeddings trained with a supervised contrastive
//! objective and evaluated as aspect-conditioned retrieval.
//!
//! The pipeline: build or ingest an aspect-labeled [`corpus`], sample
//! [`triplets`] (single-aspect, intersection or union schemes), train the
//! small [`encoder`] with the objectives in [`training`], then score the
//! embeddings with [`retrieval`] and inspect them with [`viz`].

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod retrieval;
pub mod rng;
pub mod synthetic;
pub mod training;
pub mod triplets;
pub mod viz;

pub use error::{Error, Result};
