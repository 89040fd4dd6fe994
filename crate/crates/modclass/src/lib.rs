//! Modulation-classification workbench on raw I/Q data.
//!
//! The crate synthesizes digitally modulated complex-baseband signals under
//! two independently parameterized generation profiles, trains 1-D
//! convolutional and residual networks from scratch on the resulting frames,
//! and measures within-dataset versus cross-dataset classification accuracy.
//!
//! Pipeline: [`siggen`] makes signals, [`datastore`] owns the on-disk frame
//! format and the train/val/test partition, [`nn`] is the tensor engine,
//! [`models`] builds the two network layouts, [`trainer`] runs the epoch
//! loop, and [`evaluator`] produces accuracy-vs-SNR tables and confusion
//! matrices. [`cli`] wires these into the `modclass` binary; the `examples/`
//! directory has one runnable example per capability.

pub mod cli;
pub mod datastore;
mod error;
pub mod evaluator;
pub mod models;
pub mod nn;
pub mod selftest;
pub mod siggen;
pub mod trainer;

pub use error::{Error, Result};
