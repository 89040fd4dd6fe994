//! The labeled 2 x 1024 I/Q frame, unit-power normalization, and
//! long-signal slicing.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::siggen::FrameMeta;

/// Samples per frame row. Every stored frame is 2 x 1024 (I row, Q row).
pub const FRAME_LEN: usize = 1024;

/// Round an f64 through f32, so in-memory values match the 32-bit wire
/// representation bit for bit.
pub fn quantize_f32(x: f64) -> f64 {
    x as f32 as f64
}

/// One labeled I/Q record: row 0 holds I, row 1 holds Q.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFrame {
    /// Length `2 * FRAME_LEN`, I row first.
    pub iq: Vec<f64>,
    pub meta: FrameMeta,
}

impl LabeledFrame {
    /// Build a frame from complex samples, quantizing each component to its
    /// 32-bit wire value.
    pub fn from_complex(samples: &[Complex64], meta: FrameMeta) -> Result<Self> {
        if samples.len() != FRAME_LEN {
            return Err(Error::InvalidArgument(format!(
                "frame needs {FRAME_LEN} samples, got {}",
                samples.len()
            )));
        }
        let mut iq = Vec::with_capacity(2 * FRAME_LEN);
        iq.extend(samples.iter().map(|s| quantize_f32(s.re)));
        iq.extend(samples.iter().map(|s| quantize_f32(s.im)));
        Ok(LabeledFrame { iq, meta })
    }

    pub fn i_row(&self) -> &[f64] {
        &self.iq[..FRAME_LEN]
    }

    pub fn q_row(&self) -> &[f64] {
        &self.iq[FRAME_LEN..]
    }

    /// Mean per-sample power `(1/L) * sum(I^2 + Q^2)`.
    pub fn power(&self) -> f64 {
        let mut acc = 0.0;
        for k in 0..FRAME_LEN {
            acc += self.iq[k] * self.iq[k] + self.iq[FRAME_LEN + k] * self.iq[FRAME_LEN + k];
        }
        acc / FRAME_LEN as f64
    }

    pub fn is_finite(&self) -> bool {
        self.iq.iter().all(|v| v.is_finite())
    }
}

/// Scale a frame in place so its mean per-sample power is exactly 1.
///
/// Both rows are multiplied by the same positive scalar. An all-zero frame is
/// rejected as degenerate input.
pub fn normalize_unit_power(frame: &mut LabeledFrame) -> Result<()> {
    let p = frame.power();
    if p <= 0.0 || !p.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "cannot normalize frame with power {p}"
        )));
    }
    let scale = 1.0 / p.sqrt();
    for v in &mut frame.iq {
        *v *= scale;
    }
    Ok(())
}

/// Split a long signal into contiguous non-overlapping frames that inherit
/// the parent's label and metadata.
pub fn slice_long_signal(
    samples: &[Complex64],
    frame_len: usize,
    meta: FrameMeta,
) -> Result<Vec<LabeledFrame>> {
    if frame_len != FRAME_LEN {
        return Err(Error::InvalidArgument(format!(
            "frame_len {frame_len} unsupported (store uses {FRAME_LEN})"
        )));
    }
    if samples.is_empty() || samples.len() % frame_len != 0 {
        return Err(Error::InvalidArgument(format!(
            "signal length {} not divisible by frame length {frame_len}",
            samples.len()
        )));
    }
    samples
        .chunks_exact(frame_len)
        .map(|chunk| LabeledFrame::from_complex(chunk, meta))
        .collect()
}
