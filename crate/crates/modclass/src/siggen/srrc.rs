//! Square-root raised-cosine pulse design.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Design SRRC taps with `span_symbols * sps + 1` coefficients.
///
/// `rolloff` is the excess-bandwidth factor in (0, 1], `sps` the samples per
/// symbol, and `span_symbols` the (even) total filter span in symbols. The
/// closed-form singularities at `t = 0` and `|t| = 1/(4*rolloff)` symbol
/// periods use their analytic limits. Taps are scaled to unit energy, so the
/// self-convolution sampled at the symbol rate has unit center value and the
/// cascade of two such filters is Nyquist.
pub fn srrc_taps(rolloff: f64, sps: usize, span_symbols: usize) -> Result<Vec<f64>> {
    if !(rolloff > 0.0 && rolloff <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "rolloff {rolloff} outside (0, 1]"
        )));
    }
    if sps < 2 {
        return Err(Error::InvalidArgument(format!("sps {sps} < 2")));
    }
    if span_symbols == 0 || span_symbols % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "span_symbols {span_symbols} must be even and positive"
        )));
    }

    let len = span_symbols * sps + 1;
    let mid = (span_symbols * sps / 2) as i64;
    let beta = rolloff;
    let mut taps: Vec<f64> = (0..len)
        .map(|i| {
            let t = (i as i64 - mid) as f64 / sps as f64;
            srrc_point(t, beta)
        })
        .collect();

    let energy: f64 = taps.iter().map(|h| h * h).sum();
    let scale = 1.0 / energy.sqrt();
    for h in &mut taps {
        *h *= scale;
    }
    Ok(taps)
}

/// Unnormalized SRRC impulse response at `t` symbol periods.
fn srrc_point(t: f64, beta: f64) -> f64 {
    if t.abs() < 1e-12 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    let four_bt = 4.0 * beta * t;
    let denom_factor = 1.0 - four_bt * four_bt;
    if denom_factor.abs() < 1e-10 {
        // |t| = 1/(4*beta): analytic limit.
        let a = PI / (4.0 * beta);
        return (beta / 2.0f64.sqrt())
            * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * t * (1.0 - beta)).sin() + four_bt * (PI * t * (1.0 + beta)).cos();
    num / (PI * t * denom_factor)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Test-side oracle: full linear convolution.
    fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, &av) in a.iter().enumerate() {
            for (j, &bv) in b.iter().enumerate() {
                out[i + j] += av * bv;
            }
        }
        out
    }

    #[test]
    fn taps_are_even_symmetric() {
        let taps = srrc_taps(0.35, 8, 16).unwrap();
        assert_eq!(taps.len(), 16 * 8 + 1);
        let n = taps.len();
        for k in 0..n {
            assert!(
                (taps[k] - taps[n - 1 - k]).abs() < 1e-15,
                "asymmetry at tap {k}"
            );
        }
    }

    #[test]
    fn self_convolution_is_nyquist() {
        for &rolloff in &[0.2, 0.35, 0.5, 1.0] {
            for &sps in &[8usize, 10, 12] {
                let span = crate::siggen::SRRC_SPAN_SYMBOLS;
                let taps = srrc_taps(rolloff, sps, span).unwrap();
                let r = convolve(&taps, &taps);
                let center = taps.len() - 1;
                assert!(
                    (r[center] - 1.0).abs() < 1e-12,
                    "center value {} for rolloff {rolloff} sps {sps}",
                    r[center]
                );
                for m in 1..span {
                    let isi_right = r[center + m * sps].abs();
                    let isi_left = r[center - m * sps].abs();
                    assert!(
                        isi_right < 1e-3 && isi_left < 1e-3,
                        "ISI {isi_right}/{isi_left} at offset {m} (rolloff {rolloff}, sps {sps})"
                    );
                }
            }
        }
    }

    #[test]
    fn small_rolloff_limit_approaches_sinc() {
        // At beta = 1e-6 the closed form should track sinc(t) closely.
        let sps = 8;
        let span = 16;
        let taps = srrc_taps(1e-6, sps, span).unwrap();
        let mid = span * sps / 2;
        let center = taps[mid];
        for (i, &h) in taps.iter().enumerate() {
            let t = (i as f64 - mid as f64) / sps as f64;
            let sinc = if t.abs() < 1e-12 {
                1.0
            } else {
                (PI * t).sin() / (PI * t)
            };
            // Compare shapes via normalization by the center tap.
            assert!(
                (h / center - sinc).abs() < 1e-4,
                "tap {i}: {} vs sinc {}",
                h / center,
                sinc
            );
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(srrc_taps(0.0, 8, 16).is_err());
        assert!(srrc_taps(-0.1, 8, 16).is_err());
        assert!(srrc_taps(1.2, 8, 16).is_err());
        assert!(srrc_taps(0.35, 1, 16).is_err());
        assert!(srrc_taps(0.35, 8, 15).is_err());
        assert!(srrc_taps(1.0, 8, 16).is_ok());
    }

    #[test]
    fn quarter_rolloff_hits_singular_tap() {
        // rolloff 0.25 places |t| = 1/(4*0.25) = 1 exactly on the symbol grid.
        let span = crate::siggen::SRRC_SPAN_SYMBOLS;
        let taps = srrc_taps(0.25, 8, span).unwrap();
        assert!(taps.iter().all(|h| h.is_finite()));
        let r = convolve(&taps, &taps);
        let center = taps.len() - 1;
        for m in 1..span {
            assert!(r[center + m * 8].abs() < 1e-3);
        }
    }
}
