//! Long-term stability labelling for multi-session point-cloud maps.
//!
//! Observations of the same area are filtered ([`preprocess`]), aligned to a
//! reference session ([`registration`]) and labelled per point with a score in
//! `[0, 1]` derived from the distance to the nearest point in every other
//! session ([`labelling`]). Labelled maps are cut into fixed-size submaps for a
//! learned model and model predictions are voted back onto the map
//! ([`tiling`]). [`metrics`] covers sample weighting, ROC/AUC, thresholds,
//! mIoU and RMSE. [`synth`] builds seeded scenes with exact ground truth, and
//! [`io`] and [`pipeline`] bind everything to files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cloud;
pub mod error;
pub mod io;
pub mod labelling;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod registration;
pub mod synth;
pub mod tiling;

pub use error::{Error, Result};
