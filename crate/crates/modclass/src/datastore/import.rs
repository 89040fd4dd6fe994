//! Extension point for importing externally produced datasets.
//!
//! No converter ships with the crate: the public corpora the profiles
//! emulate have their own container formats, and parsing them is out of
//! scope. Callers can register converters for their own formats.

use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

/// A converter from one external container format into a [`Dataset`].
pub trait DatasetConverter: Send + Sync {
    /// Tag callers pass to select this converter (e.g. `"hdf5-iq"`).
    fn format_tag(&self) -> &str;
    fn convert(&self, path: &Path) -> Result<Dataset>;
}

/// Registry of available converters. Starts empty.
#[derive(Default)]
pub struct ConverterRegistry {
    converters: Vec<Box<dyn DatasetConverter>>,
}

impl ConverterRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, converter: Box<dyn DatasetConverter>) {
        self.converters.push(converter);
    }

    pub fn tags(&self) -> Vec<&str> {
        self.converters.iter().map(|c| c.format_tag()).collect()
    }

    pub fn import(&self, path: &Path, format_tag: &str) -> Result<Dataset> {
        match self.converters.iter().find(|c| c.format_tag() == format_tag) {
            Some(converter) => converter.convert(path),
            None => Err(Error::UnsupportedFormat(format_tag.to_string())),
        }
    }
}

/// Import using the built-in (empty) registry: always an
/// unsupported-format error in this build.
pub fn import_external(path: &Path, format_tag: &str) -> Result<Dataset> {
    ConverterRegistry::new().import(path, format_tag)
}
