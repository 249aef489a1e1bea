//! Fixed-width binary fingerprints and Tanimoto similarity.

use std::fmt;

use crate::error::{GenboError, Result};

/// Default fingerprint width, matching 1024-bit Morgan fingerprints.
pub const DEFAULT_BITS: usize = 1024;

/// Immutable bit vector. Bit `i` lives in word `i / 64` at position `63 - i % 64`
/// so that word order and hex order agree.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    words: Vec<u64>,
    len: usize,
}

impl Fingerprint {
    pub fn zeros(len: usize) -> Self {
        Fingerprint { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut fp = Fingerprint::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                fp.words[i / 64] |= 1u64 << (63 - i % 64);
            }
        }
        fp
    }

    /// Parses a bit string such as `"1100"`.
    pub fn from_bit_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(GenboError::invalid(format!("bad bit character {c:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Fingerprint::from_bits(&bits))
    }

    /// Decodes lowercase (or uppercase) hex, most-significant nibble first.
    /// The width is four bits per hex character.
    pub fn from_hex(hex: &str) -> Result<Self> {
        let hex = hex.trim();
        let mut fp = Fingerprint::zeros(hex.len() * 4);
        for (k, c) in hex.chars().enumerate() {
            let nibble = c.to_digit(16).ok_or_else(|| GenboError::InvalidHex(hex.to_string()))?;
            for j in 0..4 {
                if nibble & (1 << (3 - j)) != 0 {
                    let i = 4 * k + j;
                    fp.words[i / 64] |= 1u64 << (63 - i % 64);
                }
            }
        }
        Ok(fp)
    }

    /// Lowercase hex, zero-padded to `ceil(len / 4)` characters.
    pub fn to_hex(&self) -> String {
        let n_chars = self.len.div_ceil(4);
        let mut out = String::with_capacity(n_chars);
        for k in 0..n_chars {
            let mut nibble = 0u32;
            for j in 0..4 {
                let i = 4 * k + j;
                if i < self.len && self.bit(i) {
                    nibble |= 1 << (3 - j);
                }
            }
            out.push(std::char::from_digit(nibble, 16).unwrap());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for width {}", self.len);
        self.words[i / 64] & (1u64 << (63 - i % 64)) != 0
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Popcount of the bitwise AND.
    pub fn intersection(&self, other: &Fingerprint) -> Result<u32> {
        if self.len != other.len {
            return Err(GenboError::LengthMismatch { left: self.len, right: other.len });
        }
        Ok(self.words.iter().zip(&other.words).map(|(a, b)| (a & b).count_ones()).sum())
    }

    /// Concatenation `self ⊕ other`.
    pub fn concat(&self, other: &Fingerprint) -> Fingerprint {
        let bits: Vec<bool> = (0..self.len)
            .map(|i| self.bit(i))
            .chain((0..other.len).map(|i| other.bit(i)))
            .collect();
        Fingerprint::from_bits(&bits)
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({}b, {})", self.len, self.to_hex())
    }
}

/// Tanimoto ratio from set counts; the all-zero case is defined as 0.
#[inline]
pub fn tanimoto_from_counts(inter: u32, ones_a: u32, ones_b: u32) -> f64 {
    let union = ones_a + ones_b - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn tanimoto_similarity(a: &Fingerprint, b: &Fingerprint) -> Result<f64> {
    let inter = a.intersection(b)?;
    Ok(tanimoto_from_counts(inter, a.count_ones(), b.count_ones()))
}

/// Scaled Tanimoto kernel `σ² ⟨a,b⟩ / (⟨a,a⟩ + ⟨b,b⟩ − ⟨a,b⟩)`.
pub fn tanimoto_kernel(a: &Fingerprint, b: &Fingerprint, outputscale: f64) -> Result<f64> {
    if !(outputscale > 0.0) {
        return Err(GenboError::invalid("outputscale must be positive"));
    }
    Ok(outputscale * tanimoto_similarity(a, b)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp(s: &str) -> Fingerprint {
        Fingerprint::from_bit_str(s).unwrap()
    }

    #[test]
    fn identical_vectors_have_unit_similarity() {
        let a = fp("1011001");
        assert_eq!(tanimoto_kernel(&a, &a, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn hand_example() {
        // <a,b> = 1, <a,a> = <b,b> = 2 -> 1 / (2 + 2 - 1)
        let k = tanimoto_kernel(&fp("1100"), &fp("1010"), 1.0).unwrap();
        assert!((k - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_vector_convention() {
        let z = fp("0000");
        assert_eq!(tanimoto_kernel(&z, &fp("1010"), 1.0).unwrap(), 0.0);
        assert_eq!(tanimoto_kernel(&z, &z, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(
            tanimoto_kernel(&fp("10"), &fp("101"), 1.0),
            Err(GenboError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn hex_layout() {
        let a = fp("10000001");
        assert_eq!(a.to_hex(), "81");
        let b = fp("111");
        // padded to one nibble, trailing bit zero
        assert_eq!(b.to_hex(), "e");
        assert_eq!(Fingerprint::from_hex("81").unwrap(), a);
        assert!(Fingerprint::from_hex("8g").is_err());
    }

    #[test]
    fn concat_counts() {
        let c = fp("10").concat(&fp("011"));
        assert_eq!(c, fp("10011"));
        assert_eq!(c.count_ones(), 3);
    }

    #[test]
    fn wide_vectors_cross_word_boundaries() {
        let mut bits = vec![false; 130];
        bits[0] = true;
        bits[63] = true;
        bits[64] = true;
        bits[129] = true;
        let a = Fingerprint::from_bits(&bits);
        assert_eq!(a.count_ones(), 4);
        let back = Fingerprint::from_hex(&a.to_hex()).unwrap();
        assert!((0..130).all(|i| back.bit(i) == a.bit(i)));
    }
}
