//! Toeplitz-hash randomness extraction.
//!
//! The `ℓ × m` matrix is `T[i][j] = seed[i - j + m - 1]`, so row `i` reads
//! the seed window `seed[i..i+m]` against the raw block reversed:
//! `out[i] = parity(seed[i..i+m] & reverse(raw))`. The product runs on packed
//! 64-bit words.

use std::path::Path;

use rand::{RngCore, TryRngCore};
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::security::ExtractionSpec;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToeplitzSeed {
    bits: BitString,
    m: usize,
    ell: usize,
}

pub fn required_seed_length(m: usize, ell: usize) -> usize {
    (m + ell).saturating_sub(1)
}

impl ToeplitzSeed {
    pub fn new(bits: BitString, m: usize, ell: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Dimension("raw block length must be positive".into()));
        }
        let need = required_seed_length(m, ell);
        if bits.len() != need {
            return Err(Error::Dimension(format!(
                "seed has {} bits, m={m} and ell={ell} need {need}",
                bits.len()
            )));
        }
        Ok(ToeplitzSeed { bits, m, ell })
    }

    /// Takes the first `m+ℓ-1` bits of a longer pool.
    pub fn from_pool(pool: &BitString, m: usize, ell: usize) -> Result<Self> {
        let need = required_seed_length(m, ell);
        if pool.len() < need {
            return Err(Error::SeedExhausted {
                needed: need,
                available: pool.len(),
            });
        }
        Self::new(pool.slice(0, need), m, ell)
    }

    pub fn random<R: RngCore>(rng: &mut R, m: usize, ell: usize) -> Result<Self> {
        let need = required_seed_length(m, ell);
        let mut bytes = vec![0u8; need.div_ceil(8)];
        rng.fill_bytes(&mut bytes);
        Self::new(BitString::from_bytes(&bytes, need).expect("sized"), m, ell)
    }

    pub fn from_os(m: usize, ell: usize) -> Result<Self> {
        let need = required_seed_length(m, ell);
        let mut bytes = vec![0u8; need.div_ceil(8)];
        rand::rngs::OsRng
            .try_fill_bytes(&mut bytes)
            .map_err(|e| Error::Config(format!("OS entropy unavailable: {e}")))?;
        Self::new(BitString::from_bytes(&bytes, need).expect("sized"), m, ell)
    }

    /// Reads a seed file: `⌈(m+ℓ-1)/8⌉` raw bytes, MSB-first.
    pub fn read(path: &Path, m: usize, ell: usize) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let need = required_seed_length(m, ell);
        let bits = BitString::from_bytes(&bytes, need).ok_or(Error::SeedExhausted {
            needed: need,
            available: bytes.len() * 8,
        })?;
        Self::new(bits, m, ell)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.bits.to_bytes())?;
        Ok(())
    }

    pub fn bits(&self) -> &BitString {
        &self.bits
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn matches(&self, spec: &ExtractionSpec) -> bool {
        self.m == spec.m && self.ell == spec.ell
    }
}

pub fn extract(raw: &BitString, seed: &ToeplitzSeed) -> Result<BitString> {
    if raw.len() != seed.m {
        return Err(Error::Dimension(format!(
            "raw block has {} bits, seed expects {}",
            raw.len(),
            seed.m
        )));
    }
    let rr = raw.reversed();
    let rw = rr.words();
    let mut out = BitString::zeros(seed.ell);
    for i in 0..seed.ell {
        let mut acc = 0u64;
        for (k, &r) in rw.iter().enumerate() {
            acc ^= seed.bits.word_at(i + 64 * k) & r;
        }
        out.set(i, acc.count_ones() & 1 == 1);
    }
    Ok(out)
}

/// Extracted bits as bytes, MSB-first, final byte zero-padded.
pub fn write_output(path: &Path, bits: &BitString) -> Result<()> {
    std::fs::write(path, bits.to_bytes())?;
    Ok(())
}
