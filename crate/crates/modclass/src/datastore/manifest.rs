//! Dataset manifest: generation provenance, canonical frame ordering, and
//! the stratified train/validation/test partition.
//!
//! Frames are ordered class-major, then SNR, then signal index, then slice
//! index within a long signal. That ordering is what lets the partition work
//! from the manifest alone.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::siggen::{GeneratorProfile, ModulationClass};

/// Which partition a frame belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "TRAIN")]
    Train,
    #[serde(rename = "VAL")]
    Val,
    #[serde(rename = "TEST")]
    Test,
}

impl Split {
    pub fn as_char(self) -> char {
        match self {
            Split::Train => 'T',
            Split::Val => 'V',
            Split::Test => 'E',
        }
    }

    pub fn from_char(c: char) -> Result<Self> {
        match c {
            'T' => Ok(Split::Train),
            'V' => Ok(Split::Val),
            'E' => Ok(Split::Test),
            other => Err(Error::Parse(format!("unknown split char {other:?}"))),
        }
    }
}

/// The default 75 / 12.5 / 12.5 train/val/test fractions.
pub const DEFAULT_SPLIT_FRACTIONS: [f64; 3] = [0.75, 0.125, 0.125];

/// Everything needed to interpret and reproduce a stored dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u16,
    pub dataset_id: String,
    pub master_seed: u64,
    pub profile: GeneratorProfile,
    pub classes: Vec<ModulationClass>,
    pub snr_grid_db: Vec<f64>,
    /// Signals generated per (class, SNR) cell: frames for profile A,
    /// long signals for profile B.
    pub signals_per_cell: usize,
    /// Frames each generated signal contributes (1 for A, 32 for B).
    pub slices_per_signal: usize,
    pub frame_count: usize,
    /// Train/val/test fractions used by the partition, if one was made.
    pub split_fractions: Option<[f64; 3]>,
    pub split_seed: Option<u64>,
    /// One character per frame in canonical order: T, V, or E.
    pub split_assignment: Option<String>,
}

impl DatasetManifest {
    pub fn cell_count(&self) -> usize {
        self.classes.len() * self.snr_grid_db.len()
    }

    pub fn frames_per_cell(&self) -> usize {
        self.signals_per_cell * self.slices_per_signal
    }

    pub fn expected_frame_count(&self) -> usize {
        self.cell_count() * self.frames_per_cell()
    }

    /// Decompose a canonical frame index into
    /// (class index, snr index, signal index, slice index).
    pub fn locate(&self, frame_idx: usize) -> (usize, usize, usize, usize) {
        let slice_idx = frame_idx % self.slices_per_signal;
        let signal_flat = frame_idx / self.slices_per_signal;
        let signal_idx = signal_flat % self.signals_per_cell;
        let cell = signal_flat / self.signals_per_cell;
        let snr_idx = cell % self.snr_grid_db.len();
        let class_idx = cell / self.snr_grid_db.len();
        (class_idx, snr_idx, signal_idx, slice_idx)
    }

    pub fn split_of(&self, frame_idx: usize) -> Option<Split> {
        self.split_assignment
            .as_ref()
            .and_then(|s| s.as_bytes().get(frame_idx).copied())
            .and_then(|b| Split::from_char(b as char).ok())
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        if self.classes.is_empty() || self.snr_grid_db.is_empty() {
            return Err(Error::StructuralMismatch(
                "manifest needs at least one class and one SNR".into(),
            ));
        }
        if self.frame_count != self.expected_frame_count() {
            return Err(Error::StructuralMismatch(format!(
                "manifest frame_count {} != classes*snrs*signals*slices {}",
                self.frame_count,
                self.expected_frame_count()
            )));
        }
        if self.slices_per_signal != self.profile.slices_per_signal() {
            return Err(Error::StructuralMismatch(
                "slices_per_signal disagrees with profile".into(),
            ));
        }
        if let Some(assignment) = &self.split_assignment {
            if assignment.len() != self.frame_count {
                return Err(Error::StructuralMismatch(format!(
                    "split assignment length {} != frame count {}",
                    assignment.len(),
                    self.frame_count
                )));
            }
            for c in assignment.chars() {
                Split::from_char(c)?;
            }
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stratified partition of the manifest's frames.
///
/// Each (class, SNR) cell is split independently at *signal* granularity, so
/// all frames sliced from one long signal land in the same split. Val and
/// test counts round down; the deficit goes to the training split.
pub fn partition(
    manifest: &DatasetManifest,
    fractions: [f64; 3],
    seed: u64,
) -> Result<DatasetManifest> {
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || fractions.iter().any(|&f| f < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "split fractions {fractions:?} must be non-negative and sum to 1"
        )));
    }
    manifest.validate()?;

    let n_classes = manifest.classes.len();
    let n_snrs = manifest.snr_grid_db.len();
    let per_cell = manifest.signals_per_cell;
    let slices = manifest.slices_per_signal;

    let mut assignment = String::with_capacity(manifest.frame_count);
    for class_idx in 0..n_classes {
        for snr_idx in 0..n_snrs {
            let n_val = (fractions[1] * per_cell as f64 + 1e-9).floor() as usize;
            let n_test = (fractions[2] * per_cell as f64 + 1e-9).floor() as usize;
            let n_train = per_cell - n_val - n_test;

            let cell_seed = mix64(mix64(seed ^ mix64(class_idx as u64)) ^ (snr_idx as u64));
            let mut rng = ChaCha8Rng::seed_from_u64(cell_seed);
            let mut order: Vec<usize> = (0..per_cell).collect();
            order.shuffle(&mut rng);

            let mut signal_split = vec![Split::Train; per_cell];
            for (rank, &signal) in order.iter().enumerate() {
                signal_split[signal] = if rank < n_train {
                    Split::Train
                } else if rank < n_train + n_val {
                    Split::Val
                } else {
                    Split::Test
                };
            }
            for &split in &signal_split {
                for _ in 0..slices {
                    assignment.push(split.as_char());
                }
            }
        }
    }

    let mut out = manifest.clone();
    out.split_fractions = Some(fractions);
    out.split_seed = Some(seed);
    out.split_assignment = Some(assignment);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_manifest(per_cell: usize, slices: usize) -> DatasetManifest {
        let profile = if slices == 1 {
            GeneratorProfile::profile_a()
        } else {
            GeneratorProfile::profile_b()
        };
        let classes = profile.classes();
        let grid = vec![0.0, 2.0];
        DatasetManifest {
            format_version: 1,
            dataset_id: "test".into(),
            master_seed: 7,
            profile,
            classes: classes.clone(),
            snr_grid_db: grid.clone(),
            signals_per_cell: per_cell,
            slices_per_signal: slices,
            frame_count: classes.len() * grid.len() * per_cell * slices,
            split_fractions: None,
            split_seed: None,
            split_assignment: None,
        }
    }

    fn cell_counts(m: &DatasetManifest, class_idx: usize, snr_idx: usize) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for idx in 0..m.frame_count {
            let (c, s, _, _) = m.locate(idx);
            if c == class_idx && s == snr_idx {
                match m.split_of(idx).unwrap() {
                    Split::Train => counts.0 += 1,
                    Split::Val => counts.1 += 1,
                    Split::Test => counts.2 += 1,
                }
            }
        }
        counts
    }

    #[test]
    fn cell_of_4096_splits_3072_512_512() {
        let m = toy_manifest(4096, 1);
        let p = partition(&m, DEFAULT_SPLIT_FRACTIONS, 99).unwrap();
        assert_eq!(cell_counts(&p, 0, 0), (3072, 512, 512));
    }

    #[test]
    fn cell_of_8_splits_6_1_1() {
        let m = toy_manifest(8, 1);
        let p = partition(&m, DEFAULT_SPLIT_FRACTIONS, 1).unwrap();
        for c in 0..6 {
            for s in 0..2 {
                assert_eq!(cell_counts(&p, c, s), (6, 1, 1));
            }
        }
    }

    #[test]
    fn partition_is_deterministic() {
        let m = toy_manifest(40, 1);
        let a = partition(&m, DEFAULT_SPLIT_FRACTIONS, 5).unwrap();
        let b = partition(&m, DEFAULT_SPLIT_FRACTIONS, 5).unwrap();
        assert_eq!(a.split_assignment, b.split_assignment);
        let c = partition(&m, DEFAULT_SPLIT_FRACTIONS, 6).unwrap();
        assert_ne!(a.split_assignment, c.split_assignment);
    }

    #[test]
    fn sibling_slices_share_a_split() {
        let m = toy_manifest(10, 32);
        let p = partition(&m, DEFAULT_SPLIT_FRACTIONS, 3).unwrap();
        for idx in 0..p.frame_count {
            let (_, _, _, slice) = p.locate(idx);
            if slice > 0 {
                assert_eq!(p.split_of(idx), p.split_of(idx - slice));
            }
        }
    }

    #[test]
    fn bad_fractions_rejected() {
        let m = toy_manifest(8, 1);
        assert!(partition(&m, [0.5, 0.3, 0.1], 1).is_err());
        assert!(partition(&m, [1.2, -0.1, -0.1], 1).is_err());
    }

    #[test]
    fn every_frame_lands_in_exactly_one_split() {
        let m = toy_manifest(13, 32);
        let p = partition(&m, DEFAULT_SPLIT_FRACTIONS, 11).unwrap();
        let assignment = p.split_assignment.as_ref().unwrap();
        assert_eq!(assignment.len(), p.frame_count);
        let (mut t, mut v, mut e) = (0usize, 0, 0);
        for idx in 0..p.frame_count {
            match p.split_of(idx).unwrap() {
                Split::Train => t += 1,
                Split::Val => v += 1,
                Split::Test => e += 1,
            }
        }
        assert_eq!(t + v + e, p.frame_count);
        // 13 signals per cell: floor(1.625) = 1 val, 1 test, 11 train.
        assert_eq!(v, 6 * 2 * 1 * 32);
        assert_eq!(e, 6 * 2 * 1 * 32);
    }

    #[test]
    fn locate_roundtrips_canonical_order() {
        let m = toy_manifest(5, 32);
        let mut idx = 0;
        for c in 0..m.classes.len() {
            for s in 0..m.snr_grid_db.len() {
                for sig in 0..5 {
                    for sl in 0..32 {
                        assert_eq!(m.locate(idx), (c, s, sig, sl));
                        idx += 1;
                    }
                }
            }
        }
        assert_eq!(idx, m.frame_count);
    }
}
