//! Uncoded PAM: constellation construction, Gray bit labeling, and
//! minimum-distance slicing. Both SK and Modulo-SK carry the message as a
//! single PAM point and only ever touch the channel with scaled estimation
//! errors afterwards.

use crate::error::{Error, Result};

/// Unit-average-power M-PAM constellation, M = 2^k.
///
/// Points are `a * (2i - M + 1)` for `i = 0..M`; they are never
/// materialized because M can reach 2^60.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PamConstellation {
    k_bits: u32,
    m: u64,
    half_spacing: f64,
}

impl PamConstellation {
    /// Builds the 2^k-point constellation with unit average power.
    pub fn build(k_bits: u32) -> Result<Self> {
        if !(1..=60).contains(&k_bits) {
            return Err(Error::Config(format!(
                "k_bits must be in 1..=60 so indices fit an integer word, got {k_bits}"
            )));
        }
        let m = 1u64 << k_bits;
        let mf = m as f64;
        // a^2 (M^2 - 1) / 3 = 1
        let half_spacing = (3.0 / (mf * mf - 1.0)).sqrt();
        Ok(PamConstellation {
            k_bits,
            m,
            half_spacing,
        })
    }

    pub fn k_bits(&self) -> u32 {
        self.k_bits
    }

    pub fn m_points(&self) -> u64 {
        self.m
    }

    /// Half the minimum distance (the `a` in the SER formula).
    pub fn half_spacing(&self) -> f64 {
        self.half_spacing
    }

    pub fn min_distance(&self) -> f64 {
        2.0 * self.half_spacing
    }

    /// Amplitude of point `index`.
    pub fn point(&self, index: u64) -> f64 {
        debug_assert!(index < self.m);
        let centered = 2 * (index as i128) - (self.m as i128) + 1;
        self.half_spacing * centered as f64
    }

    /// Index of the nearest constellation point, ties toward the lower
    /// index, inputs beyond the edge clipped to the outermost point.
    pub fn slice_index(&self, y: f64) -> u64 {
        // Work on the centered index line j = i - M/2, where the point
        // amplitude is d * (j + 1/2).
        let t = y / self.min_distance() - 0.5;
        let j = (t - 0.5).ceil();
        let i = j as i128 + (self.m / 2) as i128;
        i.clamp(0, self.m as i128 - 1) as u64
    }

    /// Nearest point plus its Gray bit label.
    pub fn slice(&self, y: f64) -> (u64, MessageBits) {
        let i = self.slice_index(y);
        (i, MessageBits::from_index(i, self.k_bits))
    }

    /// Gray-labelled modulation: the bit vector is read as the Gray code
    /// of the constellation index, so adjacent points differ in one bit.
    pub fn map_bits(&self, bits: &MessageBits) -> Result<f64> {
        if bits.len() != self.k_bits as usize {
            return Err(Error::Config(format!(
                "message has {} bits, constellation carries {}",
                bits.len(),
                self.k_bits
            )));
        }
        Ok(self.point(bits.index()))
    }
}

/// A K-bit message label (most significant bit first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageBits {
    bits: Vec<u8>,
}

impl MessageBits {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() || bits.len() > 60 {
            return Err(Error::Config(format!(
                "message length must be 1..=60 bits, got {}",
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Config("message bits must be 0 or 1".into()));
        }
        Ok(MessageBits { bits })
    }

    /// Label of constellation point `index` (Gray encoding).
    pub fn from_index(index: u64, k_bits: u32) -> Self {
        let gray = index ^ (index >> 1);
        let bits = (0..k_bits)
            .rev()
            .map(|pos| ((gray >> pos) & 1) as u8)
            .collect();
        MessageBits { bits }
    }

    /// Constellation index this label maps to (Gray decoding).
    pub fn index(&self) -> u64 {
        let gray = self
            .bits
            .iter()
            .fold(0u64, |acc, &b| (acc << 1) | u64::from(b));
        gray_to_binary(gray)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }
}

fn gray_to_binary(gray: u64) -> u64 {
    let mut b = gray;
    b ^= b >> 1;
    b ^= b >> 2;
    b ^= b >> 4;
    b ^= b >> 8;
    b ^= b >> 16;
    b ^= b >> 32;
    b
}

/// Hamming distance between two equal-length labels.
pub fn count_bit_errors(sent: &MessageBits, decoded: &MessageBits) -> Result<u32> {
    if sent.len() != decoded.len() {
        return Err(Error::Config(format!(
            "bit count mismatch: {} vs {}",
            sent.len(),
            decoded.len()
        )));
    }
    Ok(sent
        .bits
        .iter()
        .zip(&decoded.bits)
        .filter(|(a, b)| a != b)
        .count() as u32)
}

/// Hamming distance between the Gray labels of two constellation indices.
pub fn index_bit_errors(sent: u64, decoded: u64) -> u32 {
    ((sent ^ (sent >> 1)) ^ (decoded ^ (decoded >> 1))).count_ones()
}
