//! Packed bit vectors and the Hamming kernel.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A fixed-length sequence of bits packed into `u64` words, bit `i` stored at
/// bit `i % 64` of word `i / 64`. Bits past `len` are always zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitVector {
    words: Vec<u64>,
    len: usize,
}

const fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        BitVector {
            words: vec![0; words_for(len)],
            len,
        }
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for bit in bits {
            if len % 64 == 0 {
                words.push(0);
            }
            if bit {
                words[len / 64] |= 1 << (len % 64);
            }
            len += 1;
        }
        BitVector { words, len }
    }

    /// Builds a vector from raw words; stray bits beyond `len` are rejected.
    pub fn from_words(words: Vec<u64>, len: usize) -> Result<Self> {
        if words.len() != words_for(len) {
            return Err(Error::LengthMismatch {
                left: words.len(),
                right: words_for(len),
            });
        }
        let v = BitVector { words, len };
        if v.tail_is_clean() {
            Ok(v)
        } else {
            Err(Error::param("bits set beyond the vector length"))
        }
    }

    fn tail_is_clean(&self) -> bool {
        let rem = self.len % 64;
        rem == 0 || self.words.last().is_none_or(|w| w >> rem == 0)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    /// XORs `mask` into this vector in place.
    pub fn xor_assign(&mut self, mask: &BitVector) -> Result<()> {
        check_len(self, mask)?;
        for (w, m) in self.words.iter_mut().zip(&mask.words) {
            *w ^= m;
        }
        Ok(())
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn complement(&self) -> BitVector {
        let mut out = BitVector {
            words: self.words.iter().map(|w| !w).collect(),
            len: self.len,
        };
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = out.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Packs the bits into `ceil(len / 8)` bytes, least significant bit first
    /// within each byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len.div_ceil(8));
        self.write_bytes(&mut out);
        out
    }

    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        let nbytes = self.len.div_ceil(8);
        let mut written = 0;
        for w in &self.words {
            for b in w.to_le_bytes() {
                if written == nbytes {
                    return;
                }
                out.push(b);
                written += 1;
            }
        }
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::LengthMismatch {
                left: bytes.len(),
                right: len.div_ceil(8),
            });
        }
        let mut words = vec![0u64; words_for(len)];
        for (i, b) in bytes.iter().enumerate() {
            words[i / 8] |= (*b as u64) << (8 * (i % 8));
        }
        BitVector::from_words(words, len)
    }

    /// Number of positions where `self` and `other` differ.
    pub fn hamming(&self, other: &BitVector) -> Result<u32> {
        check_len(self, other)?;
        Ok(xor_popcount(&self.words, &other.words))
    }
}

fn check_len(a: &BitVector, b: &BitVector) -> Result<()> {
    if a.len != b.len {
        return Err(Error::LengthMismatch {
            left: a.len,
            right: b.len,
        });
    }
    Ok(())
}

/// `popcount(a ^ b)` over equally long word slices.
#[inline]
pub fn xor_popcount(a: &[u64], b: &[u64]) -> u32 {
    debug_assert_eq!(a.len(), b.len());
    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    {
        if std::is_x86_feature_detected!("popcnt") {
            // SAFETY: the CPU supports the instruction, checked just above.
            return unsafe { xor_popcount_popcnt(a, b) };
        }
    }
    xor_popcount_portable(a, b)
}

#[inline]
fn xor_popcount_portable(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

#[cfg(all(feature = "std", target_arch = "x86_64"))]
#[target_feature(enable = "popcnt")]
unsafe fn xor_popcount_popcnt(a: &[u64], b: &[u64]) -> u32 {
    let mut acc = [0u32; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += (x[0] ^ y[0]).count_ones();
        acc[1] += (x[1] ^ y[1]).count_ones();
        acc[2] += (x[2] ^ y[2]).count_ones();
        acc[3] += (x[3] ^ y[3]).count_ones();
    }
    let tail: u32 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| (x ^ y).count_ones())
        .sum();
    acc.iter().sum::<u32>() + tail
}
