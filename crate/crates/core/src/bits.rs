//! Packed bit strings.
//!
//! Bits are stored LSB-first inside `u64` words. Byte serialization is
//! big-endian within each byte: bit 0 of the string is the most significant
//! bit of byte 0, and the final byte is zero-padded.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        BitString {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut s = BitString::default();
        for b in bits {
            s.push(b);
        }
        s
    }

    /// Parses a string of `0`/`1` characters; anything else is ignored.
    pub fn from_str01(s: &str) -> Self {
        Self::from_bits(s.chars().filter_map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        }))
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> Option<Self> {
        if bytes.len() * 8 < len {
            return None;
        }
        Some(Self::from_bits((0..len).map(|i| bytes[i / 8] >> (7 - i % 8) & 1 == 1)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.len.div_ceil(8)];
        for i in 0..self.len {
            if self.get(i) {
                out[i / 8] |= 0x80 >> (i % 8);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn push(&mut self, v: bool) {
        if self.len.is_multiple_of(64) {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, v);
    }

    pub fn extend_from(&mut self, other: &BitString) {
        for b in other.iter() {
            self.push(b);
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// `len` bits starting at `start`, packed into words (bit `k` of the
    /// result is bit `start + k`).
    pub fn slice(&self, start: usize, len: usize) -> BitString {
        assert!(start + len <= self.len);
        let mut out = BitString::zeros(len);
        for (k, w) in out.words.iter_mut().enumerate() {
            *w = self.word_at(start + 64 * k);
        }
        out.mask_tail();
        out
    }

    /// 64 bits starting at bit `pos`, zero beyond the end.
    #[inline]
    pub(crate) fn word_at(&self, pos: usize) -> u64 {
        let (q, r) = (pos / 64, pos % 64);
        let lo = self.words.get(q).copied().unwrap_or(0);
        if r == 0 {
            return lo;
        }
        let hi = self.words.get(q + 1).copied().unwrap_or(0);
        lo >> r | hi << (64 - r)
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }

    fn mask_tail(&mut self) {
        let r = self.len % 64;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }

    pub fn xor(&self, other: &BitString) -> BitString {
        assert_eq!(self.len, other.len);
        BitString {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect(),
            len: self.len,
        }
    }

    /// Reversed copy: bit `k` of the result is bit `len-1-k` of `self`.
    pub fn reversed(&self) -> BitString {
        Self::from_bits((0..self.len).rev().map(|i| self.get(i)))
    }
}

impl std::fmt::Display for BitString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}
