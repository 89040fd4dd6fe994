//! Gray-coded constellations for the six supported modulation classes.
//!
//! Mapping convention, documented once here and relied on by tests:
//! a symbol's bits (MSB first) form a natural binary value `v`. For PSK
//! constellations the point sits at angle `2*pi*gray_decode(v)/M`, so
//! angularly adjacent points differ in exactly one bit. For square QAM the
//! upper half of the bits selects the I level and the lower half the Q
//! level, each through `gray_decode`, with level index 0 at the most
//! positive amplitude (this puts BPSK bit 0 at +1). Every constellation is
//! scaled to unit average symbol power.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// The six digital modulation classes shared by both generation profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ModulationClass {
    #[serde(rename = "BPSK")]
    Bpsk,
    #[serde(rename = "QPSK")]
    Qpsk,
    #[serde(rename = "8PSK")]
    Psk8,
    #[serde(rename = "16QAM")]
    Qam16,
    #[serde(rename = "64QAM")]
    Qam64,
    #[serde(rename = "256QAM")]
    Qam256,
}

impl ModulationClass {
    /// All classes in canonical (wire) order.
    pub const ALL: [ModulationClass; 6] = [
        ModulationClass::Bpsk,
        ModulationClass::Qpsk,
        ModulationClass::Psk8,
        ModulationClass::Qam16,
        ModulationClass::Qam64,
        ModulationClass::Qam256,
    ];

    pub fn bits_per_symbol(self) -> usize {
        match self {
            ModulationClass::Bpsk => 1,
            ModulationClass::Qpsk => 2,
            ModulationClass::Psk8 => 3,
            ModulationClass::Qam16 => 4,
            ModulationClass::Qam64 => 6,
            ModulationClass::Qam256 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModulationClass::Bpsk => "BPSK",
            ModulationClass::Qpsk => "QPSK",
            ModulationClass::Psk8 => "8PSK",
            ModulationClass::Qam16 => "16QAM",
            ModulationClass::Qam64 => "64QAM",
            ModulationClass::Qam256 => "256QAM",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::UnknownClass(name.to_string()))
    }

    /// Canonical index, also the on-disk `class` byte.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).unwrap()
    }

    pub fn from_index(idx: usize) -> Result<Self> {
        Self::ALL
            .get(idx)
            .copied()
            .ok_or_else(|| Error::UnknownClass(format!("class index {idx}")))
    }
}

fn gray_decode(g: usize) -> usize {
    let mut n = g;
    let mut shift = 1;
    while (g >> shift) != 0 {
        n ^= g >> shift;
        shift += 1;
    }
    n
}

/// Constellation points indexed by the natural bit value of a symbol.
pub fn constellation(class: ModulationClass) -> Vec<Complex64> {
    match class {
        ModulationClass::Bpsk => psk_points(2),
        ModulationClass::Psk8 => psk_points(8),
        ModulationClass::Qpsk => qam_points(2),
        ModulationClass::Qam16 => qam_points(4),
        ModulationClass::Qam64 => qam_points(8),
        ModulationClass::Qam256 => qam_points(16),
    }
}

fn psk_points(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|v| {
            let k = gray_decode(v);
            let theta = 2.0 * std::f64::consts::PI * k as f64 / order as f64;
            Complex64::new(theta.cos(), theta.sin())
        })
        .collect()
}

fn qam_points(side: usize) -> Vec<Complex64> {
    let half_bits = (side as f64).log2().round() as usize;
    let order = side * side;
    // Unnormalized levels: level index 0 -> +(side-1), index side-1 -> -(side-1).
    let level = |idx: usize| (side as f64 - 1.0) - 2.0 * idx as f64;
    let mean_power: f64 = (0..order)
        .map(|v| {
            let i = level(gray_decode(v >> half_bits));
            let q = level(gray_decode(v & (side - 1)));
            i * i + q * q
        })
        .sum::<f64>()
        / order as f64;
    let scale = 1.0 / mean_power.sqrt();
    (0..order)
        .map(|v| {
            let i = level(gray_decode(v >> half_bits));
            let q = level(gray_decode(v & (side - 1)));
            Complex64::new(i * scale, q * scale)
        })
        .collect()
}

/// Map a bit sequence (values 0/1, MSB of each symbol first) to symbols.
///
/// The bit count must divide evenly into symbols.
pub fn map_symbols(bits: &[u8], class: ModulationClass) -> Result<Vec<Complex64>> {
    let bps = class.bits_per_symbol();
    if bits.len() % bps != 0 {
        return Err(Error::InvalidArgument(format!(
            "bit count {} not divisible by {} bits/symbol of {}",
            bits.len(),
            bps,
            class.name()
        )));
    }
    let points = constellation(class);
    Ok(bits
        .chunks_exact(bps)
        .map(|chunk| {
            let v = chunk.iter().fold(0usize, |acc, &b| (acc << 1) | (b as usize & 1));
            points[v]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bpsk_bit_zero_is_plus_one() {
        let s = map_symbols(&[0], ModulationClass::Bpsk).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        let s1 = map_symbols(&[1], ModulationClass::Bpsk).unwrap();
        assert!((s1[0] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn qam16_scale_is_inverse_sqrt_ten() {
        // Oracle: enumerate the +-1,+-3 grid directly.
        let mut grid_power = 0.0;
        for i in [-3.0f64, -1.0, 1.0, 3.0] {
            for q in [-3.0f64, -1.0, 1.0, 3.0] {
                grid_power += i * i + q * q;
            }
        }
        grid_power /= 16.0;
        assert!((grid_power - 10.0).abs() < 1e-12);

        let points = constellation(ModulationClass::Qam16);
        // Largest-magnitude point is (3,3)/sqrt(10).
        let corner = points
            .iter()
            .map(|p| p.norm())
            .fold(0.0f64, f64::max);
        assert!((corner - (18.0f64 / 10.0).sqrt()).abs() < 1e-12);
        // Smallest is (1,1)/sqrt(10).
        let inner = points.iter().map(|p| p.norm()).fold(f64::INFINITY, f64::min);
        assert!((inner - (2.0f64 / 10.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn qpsk_four_distinct_unit_points_gray_adjacent() {
        // Oracle: enumerate the full 2-bit mapping table.
        let inputs: [(u8, u8); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];
        let mut mapped = Vec::new();
        for &(b0, b1) in &inputs {
            let s = map_symbols(&[b0, b1], ModulationClass::Qpsk).unwrap();
            mapped.push(((b0, b1), s[0]));
        }
        for (_, p) in &mapped {
            assert!((p.norm() - 1.0).abs() < 1e-12, "QPSK point not unit magnitude");
        }
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert!((mapped[i].1 - mapped[j].1).norm() > 1e-9, "points not distinct");
            }
        }
        // Sort by angle; angular neighbors (including wraparound) differ in one bit.
        mapped.sort_by(|a, b| a.1.arg().partial_cmp(&b.1.arg()).unwrap());
        for i in 0..4 {
            let (ba, _) = mapped[i];
            let (bb, _) = mapped[(i + 1) % 4];
            let diff = (ba.0 ^ bb.0) as u32 + (ba.1 ^ bb.1) as u32;
            assert_eq!(diff, 1, "Gray adjacency violated between {ba:?} and {bb:?}");
        }
    }

    #[test]
    fn every_constellation_has_unit_average_power() {
        for class in ModulationClass::ALL {
            let points = constellation(class);
            assert_eq!(points.len(), 1 << class.bits_per_symbol());
            let mean: f64 = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / points.len() as f64;
            assert!(
                (mean - 1.0).abs() < 1e-12,
                "{}: mean power {mean}",
                class.name()
            );
        }
    }

    #[test]
    fn psk8_gray_adjacency_around_circle() {
        let points = constellation(ModulationClass::Psk8);
        let mut order: Vec<usize> = (0..8).collect();
        order.sort_by(|&a, &b| points[a].arg().partial_cmp(&points[b].arg()).unwrap());
        for i in 0..8 {
            let a = order[i];
            let b = order[(i + 1) % 8];
            assert_eq!((a ^ b).count_ones(), 1, "labels {a:03b} and {b:03b} not Gray-adjacent");
        }
    }

    #[test]
    fn indivisible_bit_count_rejected() {
        assert!(map_symbols(&[0, 1, 0], ModulationClass::Qpsk).is_err());
        assert!(map_symbols(&[0, 1, 0, 1, 1], ModulationClass::Qam16).is_err());
    }

    #[test]
    fn class_roundtrips() {
        for class in ModulationClass::ALL {
            assert_eq!(ModulationClass::from_name(class.name()).unwrap(), class);
            assert_eq!(ModulationClass::from_index(class.index()).unwrap(), class);
        }
        assert!(ModulationClass::from_name("AM-DSB").is_err());
        assert!(ModulationClass::from_index(6).is_err());
    }

    #[test]
    fn bits_per_symbol_table() {
        let expected = [1, 2, 3, 4, 6, 8];
        for (class, bps) in ModulationClass::ALL.iter().zip(expected) {
            assert_eq!(class.bits_per_symbol(), bps);
        }
    }
}
