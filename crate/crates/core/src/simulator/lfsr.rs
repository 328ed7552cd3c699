//! Galois LFSR used to pick the inputs `(x, y)` of each round.

use crate::error::{Error, Result};

/// 16-bit maximal-length taps (`x^16 + x^14 + x^13 + x^11 + 1`).
pub const TAPS_16: u32 = 0xB400;
/// 32-bit maximal-length taps (`x^32 + x^22 + x^2 + x + 1`).
pub const TAPS_32: u32 = 0x8020_0003;
pub const DEFAULT_STATE: u32 = 0xACE1;

/// Right-shifting Galois register: the output bit is the LSB and, when it is
/// set, the taps are XORed into the shifted state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lfsr {
    state: u32,
    taps: u32,
}

impl Lfsr {
    pub fn new(state: u32, taps: u32) -> Result<Self> {
        if state == 0 {
            return Err(Error::ZeroLfsrState);
        }
        if taps == 0 {
            return Err(Error::Config("LFSR taps must be non-zero".into()));
        }
        let width = 32 - taps.leading_zeros();
        if width < 32 && state >> width != 0 {
            return Err(Error::Config(format!(
                "LFSR state {state:#x} is wider than the {width}-bit register"
            )));
        }
        Ok(Lfsr { state, taps })
    }

    pub fn state(&self) -> u32 {
        self.state
    }

    #[inline]
    pub fn next_bit(&mut self) -> u8 {
        let out = (self.state & 1) as u8;
        self.state >>= 1;
        if out == 1 {
            self.state ^= self.taps;
        }
        out
    }

    /// Three successive output bits `(b2, b1, b0)` give `x = 2 b2 + b1`,
    /// `y = b0`.
    #[inline]
    pub fn next_inputs(&mut self) -> (u8, u8) {
        let b2 = self.next_bit();
        let b1 = self.next_bit();
        let b0 = self.next_bit();
        (2 * b2 + b1, b0)
    }
}

/// Stateless form of [`Lfsr::next_inputs`]: returns `(x, y, next_state)`.
pub fn lfsr_inputs(state: u32, taps: u32) -> Result<(u8, u8, u32)> {
    let mut l = Lfsr::new(state, taps)?;
    let (x, y) = l.next_inputs();
    Ok((x, y, l.state))
}
