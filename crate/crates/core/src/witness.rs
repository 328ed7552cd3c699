//! Dimension witness and the guessing-probability bound.
//!
//! The witness is the absolute value of the 2×2 determinant
//!
//! ```text
//! | p(1|0,0) - p(1|1,0)   p(1|2,0) - p(1|3,0) |
//! | p(1|0,1) - p(1|1,1)   p(1|2,1) - p(1|3,1) |
//! ```
//!
//! It vanishes for classical preparations and is at most 1 for qubits. The
//! guessing probability of any observer holding the devices' internal
//! variables is bounded by `f(W) = (1 + sqrt((1 + sqrt(1 - W²)) / 2)) / 2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Outcome, OutcomeDistribution};
use crate::tolerances;

/// How rounds without a detection enter the statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InconclusivePolicy {
    /// Fair sampling: drop inconclusive rounds.
    #[default]
    Discard,
    /// Count inconclusive rounds as `b = -1`.
    MapToMinus,
}

/// Event counts per `(x, y)` cell, indexed `[x][y]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsTable {
    pub n_plus: [[u64; 2]; 4],
    pub n_minus: [[u64; 2]; 4],
    #[serde(default)]
    pub n_inconclusive: [[u64; 2]; 4],
}

impl CountsTable {
    pub fn record(&mut self, x: usize, y: usize, b: Option<Outcome>) {
        match b {
            Some(Outcome::Plus) => self.n_plus[x][y] += 1,
            Some(Outcome::Minus) => self.n_minus[x][y] += 1,
            None => self.n_inconclusive[x][y] += 1,
        }
    }

    /// `(n⁺, n)` per cell under `policy`, where `n` is the number of rounds
    /// that enter the frequency estimate.
    pub fn effective_counts(&self, policy: InconclusivePolicy) -> ([[u64; 2]; 4], [[u64; 2]; 4]) {
        let mut total = [[0; 2]; 4];
        for x in 0..4 {
            for y in 0..2 {
                total[x][y] = self.n_plus[x][y] + self.n_minus[x][y];
                if policy == InconclusivePolicy::MapToMinus {
                    total[x][y] += self.n_inconclusive[x][y];
                }
            }
        }
        (self.n_plus, total)
    }

    pub fn total_rounds(&self) -> u64 {
        (0..4)
            .flat_map(|x| (0..2).map(move |y| (x, y)))
            .map(|(x, y)| self.n_plus[x][y] + self.n_minus[x][y] + self.n_inconclusive[x][y])
            .sum()
    }

    pub fn conclusive_rounds(&self) -> u64 {
        self.n_plus.iter().chain(&self.n_minus).flatten().sum()
    }
}

pub fn frequencies_from_counts(
    c: &CountsTable,
    policy: InconclusivePolicy,
) -> Result<OutcomeDistribution> {
    let (plus, total) = c.effective_counts(policy);
    let mut p = [[0.0; 2]; 4];
    for x in 0..4 {
        for y in 0..2 {
            if total[x][y] == 0 {
                return Err(Error::EmptyCell { x, y });
            }
            p[x][y] = plus[x][y] as f64 / total[x][y] as f64;
        }
    }
    OutcomeDistribution::from_plus(p)
}

/// Witness value together with the signed determinant entries
/// `[[a, b], [c, d]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessValue {
    /// `|a d - b c|`, clamped to 1 when it exceeds 1 by no more than
    /// rounding.
    pub w: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl WitnessValue {
    pub fn signed(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    /// True when the estimate exceeds the qubit bound by more than rounding,
    /// which finite-sample frequencies can do.
    pub fn beyond_qubit_bound(&self) -> bool {
        self.w > 1.0 + tolerances::QUBIT_BOUND
    }
}

/// Signed determinant entries from `p(+1|x,y)`.
pub(crate) fn determinant_entries(p: &[[f64; 2]; 4]) -> [f64; 4] {
    [
        p[0][0] - p[1][0],
        p[2][0] - p[3][0],
        p[0][1] - p[1][1],
        p[2][1] - p[3][1],
    ]
}

pub fn witness_from_distribution(d: &OutcomeDistribution) -> WitnessValue {
    let [a, b, c, dd] = determinant_entries(d.p_plus());
    let mut w = (a * dd - b * c).abs();
    if w > 1.0 && w <= 1.0 + tolerances::QUBIT_BOUND {
        w = 1.0;
    }
    WitnessValue { w, a, b, c, d: dd }
}

fn check_unit_interval(w: f64) -> Result<f64> {
    if w.is_nan() || w < 0.0 {
        return Err(Error::out_of_range("witness", "[0, 1]", w));
    }
    if w > 1.0 + tolerances::QUBIT_BOUND {
        return Err(Error::BeyondQubitBound(w));
    }
    Ok(w.min(1.0))
}

/// `f(W) = (1 + sqrt((1 + sqrt(1 - W²)) / 2)) / 2`.
pub fn guessing_bound(w: f64) -> Result<f64> {
    let w = check_unit_interval(w)?;
    Ok(0.5 * (1.0 + ((1.0 + (1.0 - w * w).sqrt()) / 2.0).sqrt()))
}

/// `-log2 f(W)`, the certified min-entropy per raw bit.
///
/// Computed through `ln_1p` so that tiny witnesses (`H ~ W²/(16 ln 2)`) keep
/// full relative precision.
pub fn min_entropy_per_bit(w: f64) -> Result<f64> {
    let w = check_unit_interval(w)?;
    // f(W) = 1 - g with g = (1 - sqrt((1 + r)/2)) / 2, r = sqrt(1 - W²).
    // 1 - r = W² / (1 + r);  1 - sqrt(u) = (1 - u) / (1 + sqrt(u)).
    let r = (1.0 - w * w).sqrt();
    let u = (1.0 + r) / 2.0;
    let one_minus_u = w * w / (2.0 * (1.0 + r));
    let g = one_minus_u / (1.0 + u.sqrt()) / 2.0;
    Ok(-(-g).ln_1p() / std::f64::consts::LN_2)
}

/// Certified lower bound `2W` on the average commutator norm
/// `∫ r(μ) ‖[M₀, M₁]‖ dμ` of the measurement device.
pub fn commutator_lower_bound(w: f64) -> f64 {
    2.0 * w
}
