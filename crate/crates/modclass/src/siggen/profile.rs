//! Generation profiles: the full parameter distribution of one synthetic
//! dataset. Profile A emulates a fixed-parameter frame corpus with total-SNR
//! labeling; profile B emulates a randomized-parameter corpus of long signals
//! with in-band SNR labeling.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::constellation::ModulationClass;
use crate::error::{Error, Result};

/// Which of the two built-in generation pipelines a signal came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProfileId {
    A,
    B,
}

impl ProfileId {
    pub fn as_str(self) -> &'static str {
        match self {
            ProfileId::A => "A",
            ProfileId::B => "B",
        }
    }

    pub fn from_str_tag(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(ProfileId::A),
            "B" | "b" => Ok(ProfileId::B),
            other => Err(Error::InvalidArgument(format!("unknown profile id {other:?}"))),
        }
    }
}

/// SNR labeling convention.
///
/// `Total` measures noise over the full sampling bandwidth; `Inband` over the
/// signal's occupied bandwidth, taken as the SRRC two-sided support
/// `(1 + rolloff) / sps` of the sampling bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SnrConvention {
    Total,
    Inband,
}

impl SnrConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            SnrConvention::Total => "TOTAL",
            SnrConvention::Inband => "INBAND",
        }
    }
}

/// Full parameter distribution of one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorProfile {
    pub profile_id: ProfileId,
    /// Closed interval of SRRC roll-off values, inside (0, 1).
    pub rolloff_range: [f64; 2],
    /// Closed interval of carrier frequency offsets, cycles/sample.
    pub cfo_range: [f64; 2],
    /// Samples-per-symbol values drawn uniformly per signal.
    pub sps_choices: Vec<usize>,
    pub snr_convention: SnrConvention,
    /// Closed interval of per-signal power scaling, dB.
    pub power_scale_db_range: [f64; 2],
    /// Output frame length in samples.
    pub frame_len: usize,
    /// Long-signal length in samples (profile B only).
    pub long_signal_len: Option<usize>,
}

impl GeneratorProfile {
    /// Fixed-parameter profile: rolloff 0.35, 8 samples/symbol, no CFO, no
    /// power randomization, total-SNR labeling, 1024-sample frames.
    pub fn profile_a() -> Self {
        GeneratorProfile {
            profile_id: ProfileId::A,
            rolloff_range: [0.35, 0.35],
            cfo_range: [0.0, 0.0],
            sps_choices: vec![8],
            snr_convention: SnrConvention::Total,
            power_scale_db_range: [0.0, 0.0],
            frame_len: 1024,
            long_signal_len: None,
        }
    }

    /// Randomized profile: rolloff in [0.2, 0.5], CFO in [-0.01, 0.01]
    /// cycles/sample, sps in {8, 10, 12}, power scale in [-3, 3] dB, in-band
    /// SNR labeling, 32768-sample long signals sliced to 1024-sample frames.
    pub fn profile_b() -> Self {
        GeneratorProfile {
            profile_id: ProfileId::B,
            rolloff_range: [0.2, 0.5],
            cfo_range: [-0.01, 0.01],
            sps_choices: vec![8, 10, 12],
            snr_convention: SnrConvention::Inband,
            power_scale_db_range: [-3.0, 3.0],
            frame_len: 1024,
            long_signal_len: Some(32768),
        }
    }

    pub fn by_id(id: ProfileId) -> Self {
        match id {
            ProfileId::A => Self::profile_a(),
            ProfileId::B => Self::profile_b(),
        }
    }

    /// SNR grid used when the caller does not supply one: -20..=30 dB step 2
    /// (total) for A, 0..=13 dB step 1 (in-band) for B.
    pub fn default_snr_grid_db(&self) -> Vec<f64> {
        match self.profile_id {
            ProfileId::A => (0..26).map(|k| -20.0 + 2.0 * k as f64).collect(),
            ProfileId::B => (0..14).map(|k| k as f64).collect(),
        }
    }

    /// Both profiles use the same six-class list.
    pub fn classes(&self) -> Vec<ModulationClass> {
        ModulationClass::ALL.to_vec()
    }

    /// Frames produced per generated signal (1 for A, long/frame for B).
    pub fn slices_per_signal(&self) -> usize {
        match self.long_signal_len {
            Some(long) => long / self.frame_len,
            None => 1,
        }
    }

    /// Check the structural invariants of the profile's id.
    pub fn validate(&self) -> Result<()> {
        let [r0, r1] = self.rolloff_range;
        if !(r0 > 0.0 && r1 < 1.0 && r0 <= r1) {
            return Err(Error::InvalidArgument(format!(
                "rolloff range [{r0}, {r1}] must lie inside (0, 1)"
            )));
        }
        let [c0, c1] = self.cfo_range;
        if c0 > c1 {
            return Err(Error::InvalidArgument("empty cfo range".into()));
        }
        if self.sps_choices.is_empty() || self.sps_choices.iter().any(|&s| s < 2) {
            return Err(Error::InvalidArgument("sps choices must be >= 2".into()));
        }
        let [p0, p1] = self.power_scale_db_range;
        if p0 > p1 {
            return Err(Error::InvalidArgument("empty power scale range".into()));
        }
        match self.profile_id {
            ProfileId::A => {
                if self.snr_convention != SnrConvention::Total {
                    return Err(Error::InvalidArgument("profile A uses TOTAL SNR".into()));
                }
                if c0 != 0.0 || c1 != 0.0 {
                    return Err(Error::InvalidArgument("profile A has no CFO".into()));
                }
                if self.sps_choices.len() != 1 {
                    return Err(Error::InvalidArgument("profile A uses a single sps".into()));
                }
                if r0 != r1 {
                    return Err(Error::InvalidArgument(
                        "profile A uses a single rolloff value".into(),
                    ));
                }
                if p0 != 0.0 || p1 != 0.0 {
                    return Err(Error::InvalidArgument(
                        "profile A has no power randomization".into(),
                    ));
                }
                if self.frame_len != 1024 {
                    return Err(Error::InvalidArgument("profile A frame_len must be 1024".into()));
                }
                if self.long_signal_len.is_some() {
                    return Err(Error::InvalidArgument(
                        "profile A does not use long signals".into(),
                    ));
                }
            }
            ProfileId::B => {
                if self.snr_convention != SnrConvention::Inband {
                    return Err(Error::InvalidArgument("profile B uses INBAND SNR".into()));
                }
                if r0 == r1 {
                    return Err(Error::InvalidArgument(
                        "profile B needs a non-degenerate rolloff range".into(),
                    ));
                }
                if c0 == c1 {
                    return Err(Error::InvalidArgument(
                        "profile B needs a non-degenerate cfo range".into(),
                    ));
                }
                if self.sps_choices.len() < 2 {
                    return Err(Error::InvalidArgument("profile B needs >= 2 sps choices".into()));
                }
                match self.long_signal_len {
                    Some(32768) => {}
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "profile B long_signal_len must be 32768, got {other:?}"
                        )))
                    }
                }
                if self.long_signal_len.unwrap() % self.frame_len != 0 {
                    return Err(Error::InvalidArgument(
                        "long_signal_len must divide into frame_len".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let profile: GeneratorProfile =
            toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

/// Mean total-vs-inband SNR offset of a profile, in dB.
///
/// For each (rolloff, sps) draw the instantaneous offset is
/// `10*log10(sps / (1 + rolloff))`; this returns its mean under the profile's
/// distribution (uniform over `sps_choices`, uniform over `rolloff_range`,
/// using the closed-form integral of `log10(1 + r)`). Only defined for the
/// in-band convention.
pub fn snr_offset_estimate(profile: &GeneratorProfile) -> Result<f64> {
    if profile.snr_convention != SnrConvention::Inband {
        return Err(Error::InvalidArgument(
            "SNR offset is undefined for the TOTAL convention".to_string(),
        ));
    }
    let mean_sps_db = profile
        .sps_choices
        .iter()
        .map(|&s| 10.0 * (s as f64).log10())
        .sum::<f64>()
        / profile.sps_choices.len() as f64;

    let [r0, r1] = profile.rolloff_range;
    let mean_bw_db = if (r1 - r0).abs() < 1e-15 {
        10.0 * (1.0 + r0).log10()
    } else {
        // Mean of ln(1 + r) over [r0, r1]: antiderivative (1+r)ln(1+r) - (1+r).
        let f = |r: f64| (1.0 + r) * (1.0 + r).ln() - (1.0 + r);
        let mean_ln = (f(r1) - f(r0)) / (r1 - r0);
        10.0 * mean_ln / std::f64::consts::LN_10
    };
    Ok(mean_sps_db - mean_bw_db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_profiles_validate() {
        GeneratorProfile::profile_a().validate().unwrap();
        GeneratorProfile::profile_b().validate().unwrap();
    }

    #[test]
    fn offset_single_point() {
        let mut p = GeneratorProfile::profile_b();
        p.rolloff_range = [0.35, 0.35];
        p.sps_choices = vec![10];
        let off = snr_offset_estimate(&p).unwrap();
        let expected = 10.0 * (10.0f64 / 1.35).log10();
        assert!((off - expected).abs() < 1e-12);
        assert!((off - 8.70).abs() < 0.01, "offset {off}");
    }

    #[test]
    fn offset_round_numbers() {
        let mut p = GeneratorProfile::profile_b();
        p.rolloff_range = [1.0 - 1e-9, 1.0 - 1e-9];
        p.sps_choices = vec![4];
        let off = snr_offset_estimate(&p).unwrap();
        assert!((off - 10.0 * 2.0f64.log10()).abs() < 1e-6);
        assert!((off - 3.01).abs() < 0.01);
    }

    #[test]
    fn offset_rejected_for_total_convention() {
        let p = GeneratorProfile::profile_a();
        assert!(snr_offset_estimate(&p).is_err());
    }

    #[test]
    fn default_profile_b_offset_near_eight_db() {
        let off = snr_offset_estimate(&GeneratorProfile::profile_b()).unwrap();
        assert!(
            (off - 8.0).abs() <= 1.5,
            "profile B mean offset {off} outside 8 +- 1.5 dB"
        );
    }

    #[test]
    fn offset_mean_matches_monte_carlo() {
        // Independent oracle: numerically average the instantaneous offset.
        let p = GeneratorProfile::profile_b();
        let n = 200_000;
        let mut acc = 0.0;
        for i in 0..n {
            let u = (i as f64 + 0.5) / n as f64;
            let r = p.rolloff_range[0] + u * (p.rolloff_range[1] - p.rolloff_range[0]);
            for &sps in &p.sps_choices {
                acc += 10.0 * (sps as f64 / (1.0 + r)).log10();
            }
        }
        let mc = acc / (n as f64 * p.sps_choices.len() as f64);
        let analytic = snr_offset_estimate(&p).unwrap();
        assert!((mc - analytic).abs() < 1e-6, "mc {mc} vs analytic {analytic}");
    }

    #[test]
    fn toml_roundtrip() {
        for p in [GeneratorProfile::profile_a(), GeneratorProfile::profile_b()] {
            let text = p.to_toml_string().unwrap();
            let back = GeneratorProfile::from_toml_str(&text).unwrap();
            assert_eq!(p, back);
        }
    }

    #[test]
    fn grids_have_documented_sizes() {
        assert_eq!(GeneratorProfile::profile_a().default_snr_grid_db().len(), 26);
        assert_eq!(GeneratorProfile::profile_b().default_snr_grid_db().len(), 14);
    }

    #[test]
    fn invariant_violations_rejected() {
        let mut p = GeneratorProfile::profile_a();
        p.cfo_range = [0.0, 0.01];
        assert!(p.validate().is_err());

        let mut p = GeneratorProfile::profile_b();
        p.long_signal_len = Some(16384);
        assert!(p.validate().is_err());

        let mut p = GeneratorProfile::profile_b();
        p.sps_choices = vec![10];
        assert!(p.validate().is_err());
    }
}
