//! Accounting for rounds that violate the qubit assumption (multi-photon
//! emissions).
//!
//! If a fraction `α` of rounds is qubit-like, the largest observable witness
//! for a given qubit witness `W_qa` is `4α(1-α) + α(2α-1) W_qa` (when below
//! 1). Inverting gives the floors below. Certification needs `α > 1/2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerances;

/// Photon-number statistics of the source and round counts of one window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceStats {
    /// Probability that the source emits at most one photon.
    pub q_single: f64,
    /// Single-pair probability per gate, when known.
    pub p1: Option<f64>,
    /// Double-pair probability per gate, when known.
    pub p2: Option<f64>,
    /// Preparations made (`N`).
    pub preparations: u64,
    /// Conclusive events (`M`).
    pub conclusive: u64,
}

impl SourceStats {
    /// Derives `q = 1 - p2 / (p1 + p2)` from pair statistics.
    pub fn from_pair_probabilities(p1: f64, p2: f64, preparations: u64, conclusive: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p1) || p1 == 0.0 {
            return Err(Error::out_of_range("p1", "(0, 1]", p1));
        }
        if !(0.0..=p1).contains(&p2) {
            return Err(Error::out_of_range("p2", "[0, p1]", p2));
        }
        SourceStats {
            q_single: 1.0 - p2 / (p1 + p2),
            p1: Some(p1),
            p2: Some(p2),
            preparations,
            conclusive,
        }
        .validated()
    }

    pub fn with_q(q_single: f64, preparations: u64, conclusive: u64) -> Result<Self> {
        SourceStats {
            q_single,
            p1: None,
            p2: None,
            preparations,
            conclusive,
        }
        .validated()
    }

    fn validated(self) -> Result<Self> {
        if !(0.0..=1.0).contains(&self.q_single) {
            return Err(Error::out_of_range("q_single", "[0, 1]", self.q_single));
        }
        if self.conclusive > self.preparations {
            return Err(Error::Config(format!(
                "conclusive events ({}) exceed preparations ({})",
                self.conclusive, self.preparations
            )));
        }
        Ok(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitFractionEstimate {
    pub alpha_hat: f64,
    pub epsilon_alpha: f64,
    pub postselected: bool,
}

/// Margin as a fraction of `N`: `sqrt(ln(1/ε) / (2N))`.
fn fractional_margin(eps: f64, n: u64) -> Result<f64> {
    crate::security::hoeffding_margin(eps, n)
}

/// `α̂ = q - t/N` for the full set of preparations.
pub fn alpha_no_postselection(s: &SourceStats, eps: f64) -> Result<QubitFractionEstimate> {
    let margin = fractional_margin(eps, s.preparations)?;
    Ok(QubitFractionEstimate {
        alpha_hat: (s.q_single - margin).clamp(0.0, 1.0),
        epsilon_alpha: eps,
        postselected: false,
    })
}

/// `α̂ = 1 - (1-q) N/M - t/M`, with every multi-photon event assumed
/// conclusive. `t` is the absolute-count margin `N sqrt(ln(1/ε) / (2N))`.
pub fn alpha_with_postselection(s: &SourceStats, eps: f64) -> Result<QubitFractionEstimate> {
    if s.conclusive == 0 {
        return Err(Error::ZeroSamples);
    }
    let n = s.preparations as f64;
    let m = s.conclusive as f64;
    let t_abs = n * fractional_margin(eps, s.preparations)?;
    let alpha = 1.0 - (1.0 - s.q_single) * n / m - t_abs / m;
    Ok(QubitFractionEstimate {
        alpha_hat: alpha.clamp(0.0, 1.0),
        epsilon_alpha: eps,
        postselected: true,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.5 && alpha <= 1.0) {
        return Err(Error::QubitFractionTooLow(alpha));
    }
    Ok(())
}

/// Lower bound on the witness of the qubit rounds:
/// `W_qa >= (W - 4α(1-α)) / (α(2α-1))`, clamped at 0.
pub fn qubit_witness_floor(w: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if w > 1.0 + tolerances::QUBIT_BOUND {
        return Err(Error::BeyondQubitBound(w));
    }
    let numerator = w - 4.0 * alpha * (1.0 - alpha);
    Ok((numerator / (alpha * (2.0 * alpha - 1.0))).max(0.0))
}

/// `Ŵ_eff = (W_min - 4α̂(1-α̂)) / (2α̂-1)`, clamped to `[0, 1]`.
pub fn effective_witness(w_min: f64, alpha_hat: f64) -> Result<f64> {
    check_alpha(alpha_hat)?;
    let numerator = w_min - 4.0 * alpha_hat * (1.0 - alpha_hat);
    Ok((numerator / (2.0 * alpha_hat - 1.0)).clamp(0.0, 1.0))
}
