//! Feature-driven selective classification.
//!
//! An n-class image recognition problem is decomposed into a two-level tree of
//! small sigmoid MLPs. Initial nodes look at raw pixels and predict a coarse
//! feature category (a color bin or a texture orientation); only the final node
//! that owns that category is evaluated, on a compact feature vector. An
//! optional baseline classifier is activated when the initial node is unsure.
//!
//! Alongside the classifier, [`sim`] models a small neural engine (a 1-D array
//! of MAC units, FIFOs, a partial-sum buffer, zero-input gating and selective
//! path activation) and accounts cycles and energy per inference.
//!
//! Module map:
//!
//! - [`nn`]: MLP model, SGD/backprop training, piecewise-linear sigmoid, MAC counting.
//! - [`image`], [`features`]: RGB images, HSV color bins, Gabor texture responses.
//! - [`select`]: per-feature probe networks and class grouping.
//! - [`tree`]: building, classifying, merging and extending trees.
//! - [`metrics`]: OPS, benefit and training cost reports.
//! - [`sim`]: the neural engine simulator.
//! - [`data`], [`config`], [`cli`]: datasets, run configuration and the `falcon` command.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod features;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod select;
pub mod sim;
pub mod tree;

pub(crate) mod rng;

pub use error::{Error, Result};
