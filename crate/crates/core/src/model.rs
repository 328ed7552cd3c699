//! Bloch-sphere description of qubit preparations and binary projective
//! measurements.
//!
//! Every observable of a prepare-and-measure round depends on the states and
//! measurements only through the scalar products `S_x · T_y`, so the crate
//! never builds density matrices. The outcome law is
//!
//! ```text
//! p(b | x, y) = (1 + b S_x · T_y) / 2,    b = ±1
//! ```

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerances;

/// A real 3-vector in Bloch coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub const ZERO: BlochVector = BlochVector::new(0.0, 0.0, 0.0);
    pub const X: BlochVector = BlochVector::new(1.0, 0.0, 0.0);
    pub const Y: BlochVector = BlochVector::new(0.0, 1.0, 0.0);
    pub const Z: BlochVector = BlochVector::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        BlochVector { x, y, z }
    }

    /// Unit vector from polar angle `theta` (from +z) and azimuth `phi`.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        BlochVector::new(st * cp, st * sp, ct)
    }

    pub fn dot(self, other: BlochVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: BlochVector) -> BlochVector {
        BlochVector::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> BlochVector {
        let n = self.norm();
        if n == 0.0 {
            self
        } else {
            self * (1.0 / n)
        }
    }

    /// Rotates by the rotation vector `omega` (axis `omega/|omega|`, angle
    /// `|omega|`) using Rodrigues' formula.
    pub fn rotated_by(self, omega: BlochVector) -> BlochVector {
        let angle = omega.norm();
        if angle == 0.0 {
            return self;
        }
        self.rotated(omega * (1.0 / angle), angle)
    }

    /// Rotates about the unit `axis` by `angle` radians (right-hand rule).
    pub fn rotated(self, axis: BlochVector, angle: f64) -> BlochVector {
        let (s, c) = angle.sin_cos();
        self * c + axis.cross(self) * s + axis * (axis.dot(self) * (1.0 - c))
    }

    fn check_state(self) -> Result<()> {
        let n = self.norm();
        if n > 1.0 + tolerances::STATE_NORM || !n.is_finite() {
            return Err(Error::StateOutsideBall(n));
        }
        Ok(())
    }

    fn check_measurement(self) -> Result<()> {
        let n = self.norm();
        if (n - 1.0).abs() > tolerances::MEASUREMENT_NORM || !n.is_finite() {
            return Err(Error::NonUnitMeasurement(n));
        }
        Ok(())
    }
}

impl From<[f64; 3]> for BlochVector {
    fn from(v: [f64; 3]) -> Self {
        BlochVector::new(v[0], v[1], v[2])
    }
}

impl From<BlochVector> for [f64; 3] {
    fn from(v: BlochVector) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Add for BlochVector {
    type Output = BlochVector;
    fn add(self, o: BlochVector) -> BlochVector {
        BlochVector::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for BlochVector {
    type Output = BlochVector;
    fn sub(self, o: BlochVector) -> BlochVector {
        BlochVector::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for BlochVector {
    type Output = BlochVector;
    fn mul(self, k: f64) -> BlochVector {
        BlochVector::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Neg for BlochVector {
    type Output = BlochVector;
    fn neg(self) -> BlochVector {
        BlochVector::new(-self.x, -self.y, -self.z)
    }
}

/// Binary measurement outcome `b = ±1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub fn sign(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }

    /// Raw-bit encoding used by the extractor: `+1 -> 1`, `-1 -> 0`.
    pub fn bit(self) -> bool {
        self == Outcome::Plus
    }
}

/// `p(b | state, meas) = (1 + b S·T) / 2`.
pub fn outcome_probability(state: BlochVector, meas: BlochVector, b: Outcome) -> Result<f64> {
    meas.check_measurement()?;
    state.check_state()?;
    Ok(probability_unchecked(state, meas, b))
}

#[inline]
pub(crate) fn probability_unchecked(state: BlochVector, meas: BlochVector, b: Outcome) -> f64 {
    (0.5 * (1.0 + b.sign() * state.dot(meas))).clamp(0.0, 1.0)
}

/// Four preparations `S_0..S_3` and two measurements `T_0, T_1`.
///
/// Serialized as a flat object with keys `"S0".."S3"`, `"T0"`, `"T1"`, each a
/// 3-element array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StrategyRecord", into = "StrategyRecord")]
pub struct Strategy {
    pub preparations: [BlochVector; 4],
    pub measurements: [BlochVector; 2],
}

#[derive(Serialize, Deserialize)]
struct StrategyRecord {
    #[serde(rename = "S0")]
    s0: BlochVector,
    #[serde(rename = "S1")]
    s1: BlochVector,
    #[serde(rename = "S2")]
    s2: BlochVector,
    #[serde(rename = "S3")]
    s3: BlochVector,
    #[serde(rename = "T0")]
    t0: BlochVector,
    #[serde(rename = "T1")]
    t1: BlochVector,
}

impl TryFrom<StrategyRecord> for Strategy {
    type Error = Error;
    fn try_from(r: StrategyRecord) -> Result<Self> {
        Strategy::new([r.s0, r.s1, r.s2, r.s3], [r.t0, r.t1])
    }
}

impl From<Strategy> for StrategyRecord {
    fn from(s: Strategy) -> Self {
        let [s0, s1, s2, s3] = s.preparations;
        let [t0, t1] = s.measurements;
        StrategyRecord { s0, s1, s2, s3, t0, t1 }
    }
}

impl Strategy {
    pub fn new(preparations: [BlochVector; 4], measurements: [BlochVector; 2]) -> Result<Self> {
        let s = Strategy {
            preparations,
            measurements,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.preparations {
            s.check_state()?;
        }
        for t in &self.measurements {
            t.check_measurement()?;
        }
        Ok(())
    }

    /// Applies the same rotation to every preparation and measurement.
    pub fn rotated(&self, axis: BlochVector, angle: f64) -> Strategy {
        let axis = axis.normalized();
        Strategy {
            preparations: self.preparations.map(|s| s.rotated(axis, angle)),
            measurements: self.measurements.map(|t| t.rotated(axis, angle)),
        }
    }
}

/// The BB84 configuration: `S_0 = -S_1 = T_0 = z`, `S_2 = -S_3 = T_1 = x`.
pub fn bb84_reference() -> Strategy {
    use BlochVector as V;
    Strategy {
        preparations: [V::Z, -V::Z, V::X, -V::X],
        measurements: [V::Z, V::X],
    }
}

/// Conditional outcome probabilities `p(b | x, y)`.
///
/// Only `p(+1 | x, y)` is stored; `p(-1 | x, y)` is its complement, so
/// normalization holds by construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    p_plus: [[f64; 2]; 4],
}

impl OutcomeDistribution {
    /// Builds a distribution from `p(+1 | x, y)` indexed `[x][y]`.
    pub fn from_plus(p_plus: [[f64; 2]; 4]) -> Result<Self> {
        for row in &p_plus {
            for &p in row {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::out_of_range("p(+1|x,y)", "[0, 1]", p));
                }
            }
        }
        Ok(OutcomeDistribution { p_plus })
    }

    pub fn uniform() -> Self {
        OutcomeDistribution {
            p_plus: [[0.5; 2]; 4],
        }
    }

    pub fn p(&self, b: Outcome, x: usize, y: usize) -> f64 {
        match b {
            Outcome::Plus => self.p_plus[x][y],
            Outcome::Minus => 1.0 - self.p_plus[x][y],
        }
    }

    pub fn p_plus(&self) -> &[[f64; 2]; 4] {
        &self.p_plus
    }

    /// Average guessing probability `(1/8) Σ_{x,y} max_b p(b|x,y)` for an
    /// observer with no extra side information.
    pub fn guessing_probability(&self) -> f64 {
        self.p_plus
            .iter()
            .flatten()
            .map(|&p| p.max(1.0 - p))
            .sum::<f64>()
            / 8.0
    }
}

pub fn distribution_from_strategy(s: &Strategy) -> Result<OutcomeDistribution> {
    let mut p_plus = [[0.0; 2]; 4];
    for (x, &state) in s.preparations.iter().enumerate() {
        for (y, &meas) in s.measurements.iter().enumerate() {
            p_plus[x][y] = outcome_probability(state, meas, Outcome::Plus)?;
        }
    }
    Ok(OutcomeDistribution { p_plus })
}
