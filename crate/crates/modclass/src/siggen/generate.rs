//! Deterministic dataset generation.
//!
//! Every generated signal owns an independent RNG stream keyed by
//! `(master_seed, class index, SNR index, signal index)`, so generation is
//! order-independent: the same configuration yields byte-identical datasets
//! regardless of worker count, and any single signal can be reproduced from
//! its stored seed alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::constellation::ModulationClass;
use super::profile::GeneratorProfile;
use super::synth::{add_noise, synthesize_clean, FrameMeta, SRRC_SPAN_SYMBOLS};
use crate::datastore::{
    quantize_f32, slice_long_signal, Dataset, DatasetManifest, LabeledFrame, MODF_VERSION,
};
use crate::error::{Error, Result};

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the RNG stream for one generated signal.
pub fn signal_seed(master_seed: u64, class_idx: usize, snr_idx: usize, signal_idx: usize) -> u64 {
    let mut h = mix64(master_seed);
    h = mix64(h ^ (class_idx as u64).wrapping_mul(0xA24B_AED4_963E_E407));
    h = mix64(h ^ (snr_idx as u64).wrapping_mul(0x9FB2_1C65_1E98_DF25));
    h = mix64(h ^ (signal_idx as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
    h
}

fn draw_in_range<R: Rng>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.gen_range(range[0]..=range[1])
    }
}

/// Generate the frames of one signal (one frame for profile A, a sliced long
/// signal for profile B). Parameter draws, data bits, and noise all come from
/// the stream keyed by `seed`; drawn parameters are rounded to their 32-bit
/// wire values before synthesis so stored metadata reproduces the signal
/// exactly.
pub fn generate_signal(
    profile: &GeneratorProfile,
    class: ModulationClass,
    snr_db: f64,
    seed: u64,
) -> Result<Vec<LabeledFrame>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rolloff = quantize_f32(draw_in_range(&mut rng, profile.rolloff_range));
    let cfo = quantize_f32(draw_in_range(&mut rng, profile.cfo_range));
    let sps = if profile.sps_choices.len() == 1 {
        profile.sps_choices[0]
    } else {
        profile.sps_choices[rng.gen_range(0..profile.sps_choices.len())]
    };
    let power_scale_db = quantize_f32(draw_in_range(&mut rng, profile.power_scale_db_range));

    let meta = FrameMeta {
        class,
        snr_db: quantize_f32(snr_db),
        rolloff,
        cfo,
        sps,
        power_scale_db,
        seed,
        profile_id: profile.profile_id,
    };

    let out_len = profile.long_signal_len.unwrap_or(profile.frame_len);
    let n_symbols = out_len.div_ceil(sps) + SRRC_SPAN_SYMBOLS + 1;
    let mut x = synthesize_clean(&meta, n_symbols, out_len, &mut rng)?;
    add_noise(
        &mut x,
        meta.snr_db,
        profile.snr_convention,
        meta.rolloff,
        meta.sps,
        &mut rng,
    )?;

    if profile.long_signal_len.is_some() {
        slice_long_signal(&x, profile.frame_len, meta)
    } else {
        Ok(vec![LabeledFrame::from_complex(&x, meta)?])
    }
}

/// Generate a full dataset over the (class, SNR) grid.
///
/// Produces `classes * snr_grid * signals_per_cell` signals; for profile B
/// each long signal is sliced into `long_signal_len / frame_len` frames.
/// Output order is canonical (class-major, then SNR, then signal, then
/// slice) and independent of worker scheduling.
pub fn generate_dataset(
    profile: &GeneratorProfile,
    classes: &[ModulationClass],
    snr_grid_db: &[f64],
    signals_per_cell: usize,
    master_seed: u64,
) -> Result<Dataset> {
    profile.validate()?;
    if signals_per_cell == 0 {
        return Err(Error::InvalidArgument("signals_per_cell must be >= 1".into()));
    }
    if snr_grid_db.is_empty() {
        return Err(Error::InvalidArgument("empty SNR grid".into()));
    }
    if classes.is_empty() {
        return Err(Error::InvalidArgument("empty class list".into()));
    }

    let mut tasks = Vec::with_capacity(classes.len() * snr_grid_db.len() * signals_per_cell);
    for (class_idx, &class) in classes.iter().enumerate() {
        for (snr_idx, &snr_db) in snr_grid_db.iter().enumerate() {
            for signal_idx in 0..signals_per_cell {
                tasks.push((class, snr_db, signal_seed(master_seed, class_idx, snr_idx, signal_idx)));
            }
        }
    }

    let per_signal: Vec<Vec<LabeledFrame>> = tasks
        .into_par_iter()
        .map(|(class, snr_db, seed)| generate_signal(profile, class, snr_db, seed))
        .collect::<Result<_>>()?;
    let frames: Vec<LabeledFrame> = per_signal.into_iter().flatten().collect();

    let manifest = DatasetManifest {
        format_version: MODF_VERSION,
        dataset_id: format!("{}-s{}", profile.profile_id.as_str(), master_seed),
        master_seed,
        profile: profile.clone(),
        classes: classes.to_vec(),
        snr_grid_db: snr_grid_db.to_vec(),
        signals_per_cell,
        slices_per_signal: profile.slices_per_signal(),
        frame_count: frames.len(),
        split_fractions: None,
        split_seed: None,
        split_assignment: None,
    };
    manifest.validate()?;
    Ok(Dataset { frames, manifest })
}
