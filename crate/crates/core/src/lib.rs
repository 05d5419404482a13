//! Geometric core of a visual-query 3D localization pipeline: camera models,
//! detection-score peak selection, multi-view localization, Sim3 alignment,
//! evaluation metrics and a synthetic scene oracle.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod camera;
pub mod cli;
pub mod io;
pub mod localize;
pub mod metrics;
pub mod signal;
pub mod simkit;
