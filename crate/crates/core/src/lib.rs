//! Sentiment classification of Chinese microblog posts with a text CNN,
//! implemented without an ML framework.
//!
//! The pipeline runs in order: [`corpus`] cleaning and segmentation,
//! [`labeler`] three-class relabeling, [`sampler`] split and rebalancing,
//! [`features`] encoding, [`model`] + [`trainer`] for the network, and
//! [`metrics`] for evaluation. [`nncore`] holds the layer math.

pub mod corpus;
pub mod dataset;
pub mod error;
pub mod features;
pub mod labeler;
pub mod metrics;
pub mod model;
pub mod nncore;
pub mod sampler;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
