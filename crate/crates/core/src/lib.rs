//! Training-time out-of-distribution detection on a feature backbone.
//!
//! A classifier is trained with cross-entropy until its penultimate features
//! collapse onto class means. From then on, convex mixtures of pairs of
//! in-distribution features act as pseudo-outliers: they are pushed onto
//! concentric radius shells around the running feature mean and rotated away
//! from every class direction. At test time a handful of post-hoc scorers turn
//! features or logits into an ID-ness score.

pub mod app;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod objective;
pub mod pseudo_ood;
pub mod scorers;
pub mod trainer;

pub use error::{Error, Result};
