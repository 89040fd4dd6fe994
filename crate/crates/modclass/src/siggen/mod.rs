//! Synthesis of digitally modulated complex-baseband signals under two
//! independently parameterized generation pipelines.

mod constellation;
mod generate;
mod profile;
mod srrc;
mod synth;

pub use constellation::{constellation, map_symbols, ModulationClass};
pub use generate::{generate_dataset, generate_signal, signal_seed};
pub use profile::{snr_offset_estimate, GeneratorProfile, ProfileId, SnrConvention};
pub use srrc::srrc_taps;
pub use synth::{
    add_noise, apply_cfo, noise_variance, synthesize_clean, FrameMeta, SRRC_SPAN_SYMBOLS,
};
