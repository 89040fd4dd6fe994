//! On-disk frame format, long-signal slicing, unit-power normalization, and
//! the train/validation/test partition.

mod frame;
mod import;
mod manifest;
mod modf;

pub use frame::{normalize_unit_power, quantize_f32, slice_long_signal, LabeledFrame, FRAME_LEN};
pub use import::{import_external, ConverterRegistry, DatasetConverter};
pub use manifest::{partition, DatasetManifest, Split, DEFAULT_SPLIT_FRACTIONS};
pub use modf::{read_dataset, read_dataset_bytes, write_dataset, MODF_VERSION};

use crate::error::{Error, Result};

/// Frames plus the manifest that interprets them. Frames are in canonical
/// manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub frames: Vec<LabeledFrame>,
    pub manifest: DatasetManifest,
}

impl Dataset {
    /// Replace the manifest with a partitioned copy.
    pub fn partition(&mut self, fractions: [f64; 3], seed: u64) -> Result<()> {
        self.manifest = partition(&self.manifest, fractions, seed)?;
        Ok(())
    }

    /// Frame indices belonging to one split, in canonical order.
    pub fn split_indices(&self, split: Split) -> Result<Vec<usize>> {
        if self.manifest.split_assignment.is_none() {
            return Err(Error::InvalidArgument(
                "dataset has no partition; call partition() first".into(),
            ));
        }
        Ok((0..self.frames.len())
            .filter(|&i| self.manifest.split_of(i) == Some(split))
            .collect())
    }

    /// Normalize every frame to unit power in place.
    pub fn normalize_all(&mut self) -> Result<()> {
        for frame in &mut self.frames {
            normalize_unit_power(frame)?;
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<&'static str> {
        self.manifest.classes.iter().map(|c| c.name()).collect()
    }
}

/// Total frames in a dense (class, SNR, per-cell) grid. The paper-scale
/// corpora are checked by this formula rather than materialized.
pub fn cell_total(classes: usize, snr_points: usize, per_cell: usize) -> u64 {
    classes as u64 * snr_points as u64 * per_cell as u64
}

/// Frames obtained by slicing `long_signals` signals of `long_len` samples
/// into `frame_len`-sample frames.
pub fn sliced_total(long_signals: u64, long_len: usize, frame_len: usize) -> Result<u64> {
    if frame_len == 0 || long_len % frame_len != 0 {
        return Err(Error::InvalidArgument(format!(
            "long length {long_len} not divisible by frame length {frame_len}"
        )));
    }
    Ok(long_signals * (long_len / frame_len) as u64)
}
