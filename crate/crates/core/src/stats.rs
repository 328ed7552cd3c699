//! A subset of the NIST SP 800-22 battery, run over extracted bits.
//!
//! A test passes when `0.01 <= p <= 0.99`. Tests whose input is shorter than
//! their documented minimum are reported as skipped, not failed.
//!
//! | test                | minimum length |
//! |---------------------|----------------|
//! | monobit frequency   | 100            |
//! | block frequency     | 128 (one block of `M = 128`) |
//! | runs                | 100            |
//! | cumulative sums     | 100            |
//! | serial (`m = 2`)    | 100            |

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::bits::BitString;
use crate::error::{Error, Result};

pub const PASS_LOW: f64 = 0.01;
pub const PASS_HIGH: f64 = 0.99;
pub const BLOCK_FREQUENCY_M: usize = 128;
pub const SERIAL_M: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Monobit,
    BlockFrequency,
    Runs,
    CumulativeSums,
    Serial,
}

impl TestKind {
    pub const ALL: [TestKind; 5] = [
        TestKind::Monobit,
        TestKind::BlockFrequency,
        TestKind::Runs,
        TestKind::CumulativeSums,
        TestKind::Serial,
    ];

    pub fn min_length(self) -> usize {
        match self {
            TestKind::BlockFrequency => BLOCK_FREQUENCY_M,
            _ => 100,
        }
    }

    pub fn parse(s: &str) -> Option<TestKind> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn name(self) -> &'static str {
        match self {
            TestKind::Monobit => "monobit",
            TestKind::BlockFrequency => "block_frequency",
            TestKind::Runs => "runs",
            TestKind::CumulativeSums => "cumulative_sums",
            TestKind::Serial => "serial",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl Status {
    fn of(p: f64) -> Status {
        if (PASS_LOW..=PASS_HIGH).contains(&p) {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub status: Status,
}

impl TestResult {
    fn measured(name: &str, statistic: f64, p: f64) -> Self {
        TestResult {
            name: name.to_string(),
            statistic: Some(statistic),
            p_value: Some(p),
            status: Status::of(p),
        }
    }

    fn skipped(name: &str) -> Self {
        TestResult {
            name: name.to_string(),
            statistic: None,
            p_value: None,
            status: Status::Skipped,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub length: usize,
    pub results: Vec<TestResult>,
}

impl TestReport {
    pub fn get(&self, name: &str) -> Option<&TestResult> {
        self.results.iter().find(|r| r.name == name)
    }

    /// True when nothing failed (skipped tests do not count against it).
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.status != Status::Fail)
    }
}

impl fmt::Display for TestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "bits: {}", self.length)?;
        writeln!(f, "{:<26} {:>14} {:>10}  status", "test", "statistic", "p-value")?;
        for r in &self.results {
            let num = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |v| format!("{v:.prec$}"));
            let status = match r.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::Skipped => "skipped",
            };
            writeln!(
                f,
                "{:<26} {:>14} {:>10}  {}",
                r.name,
                num(r.statistic, 4),
                num(r.p_value, 6),
                status
            )?;
        }
        Ok(())
    }
}

fn igamc(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(a, x)
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Returns `(|S_n| / sqrt(n), p)`.
pub fn monobit(bits: &BitString) -> (f64, f64) {
    let n = bits.len() as f64;
    let s = 2.0 * bits.count_ones() as f64 - n;
    let s_obs = s.abs() / n.sqrt();
    (s_obs, erfc(s_obs / std::f64::consts::SQRT_2))
}

/// Returns `(χ², p)` over `⌊n/M⌋` non-overlapping blocks.
pub fn block_frequency(bits: &BitString, m: usize) -> (f64, f64) {
    let blocks = bits.len() / m;
    let chi2 = 4.0
        * m as f64
        * (0..blocks)
            .map(|i| {
                let pi = bits.slice(i * m, m).count_ones() as f64 / m as f64;
                (pi - 0.5).powi(2)
            })
            .sum::<f64>();
    (chi2, igamc(blocks as f64 / 2.0, chi2 / 2.0))
}

/// Returns `(V_n, p)`; `p = 0` when the frequency prerequisite fails.
pub fn runs(bits: &BitString) -> (f64, f64) {
    let n = bits.len() as f64;
    let pi = bits.count_ones() as f64 / n;
    let v = 1 + (1..bits.len()).filter(|&i| bits.get(i) != bits.get(i - 1)).count();
    let v = v as f64;
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return (v, 0.0);
    }
    let q = pi * (1.0 - pi);
    let p = erfc((v - 2.0 * n * q).abs() / (2.0 * (2.0 * n).sqrt() * q));
    (v, p)
}

/// Returns `(z, p)`; `backward` walks the sequence from its end.
pub fn cumulative_sums(bits: &BitString, backward: bool) -> (f64, f64) {
    let n = bits.len() as i64;
    let mut s = 0i64;
    let mut z = 0i64;
    let mut step = |b: bool| {
        s += if b { 1 } else { -1 };
        z = z.max(s.abs());
    };
    if backward {
        (0..bits.len()).rev().for_each(|i| step(bits.get(i)));
    } else {
        (0..bits.len()).for_each(|i| step(bits.get(i)));
    }
    if z == 0 {
        return (0.0, 1.0);
    }
    let (nf, zf) = (n as f64, z as f64);
    let sq = nf.sqrt();
    // Truncating integer bounds as in the reference implementation.
    let mut sum1 = 0.0;
    for k in (-n / z + 1) / 4..=(n / z - 1) / 4 {
        let k = k as f64;
        sum1 += normal_cdf((4.0 * k + 1.0) * zf / sq) - normal_cdf((4.0 * k - 1.0) * zf / sq);
    }
    let mut sum2 = 0.0;
    for k in (-n / z - 3) / 4..=(n / z - 1) / 4 {
        let k = k as f64;
        sum2 += normal_cdf((4.0 * k + 3.0) * zf / sq) - normal_cdf((4.0 * k + 1.0) * zf / sq);
    }
    (zf, (1.0 - sum1 + sum2).clamp(0.0, 1.0))
}

fn psi_squared(bits: &BitString, m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let n = bits.len();
    let mut counts = vec![0u64; 1 << m];
    for i in 0..n {
        let mut v = 0usize;
        for j in 0..m {
            v = v << 1 | bits.get((i + j) % n) as usize;
        }
        counts[v] += 1;
    }
    let sum: f64 = counts.iter().map(|&c| (c as f64).powi(2)).sum();
    (1u64 << m) as f64 / n as f64 * sum - n as f64
}

/// Returns `(∇ψ², p1, ∇²ψ², p2)` for pattern length `m >= 2`.
pub fn serial(bits: &BitString, m: usize) -> (f64, f64, f64, f64) {
    let p0 = psi_squared(bits, m);
    let p1 = psi_squared(bits, m - 1);
    let p2 = psi_squared(bits, m.saturating_sub(2));
    let d1 = p0 - p1;
    let d2 = p0 - 2.0 * p1 + p2;
    let two = 2f64;
    (
        d1,
        igamc(two.powi(m as i32 - 2), d1 / 2.0),
        d2,
        igamc(two.powi(m as i32 - 3), d2 / 2.0),
    )
}

pub fn run_battery(bits: &BitString, tests: &[TestKind]) -> TestReport {
    let mut results = Vec::new();
    for &kind in tests {
        let short = bits.len() < kind.min_length();
        match kind {
            TestKind::Monobit | TestKind::BlockFrequency | TestKind::Runs => {
                let name = kind.name();
                if short {
                    results.push(TestResult::skipped(name));
                    continue;
                }
                let (stat, p) = match kind {
                    TestKind::Monobit => monobit(bits),
                    TestKind::BlockFrequency => block_frequency(bits, BLOCK_FREQUENCY_M),
                    _ => runs(bits),
                };
                results.push(TestResult::measured(name, stat, p));
            }
            TestKind::CumulativeSums => {
                for (name, backward) in [("cumulative_sums_forward", false), ("cumulative_sums_backward", true)] {
                    results.push(if short {
                        TestResult::skipped(name)
                    } else {
                        let (z, p) = cumulative_sums(bits, backward);
                        TestResult::measured(name, z, p)
                    });
                }
            }
            TestKind::Serial => {
                if short {
                    results.push(TestResult::skipped("serial_1"));
                    results.push(TestResult::skipped("serial_2"));
                } else {
                    let (d1, p1, d2, p2) = serial(bits, SERIAL_M);
                    results.push(TestResult::measured("serial_1", d1, p1));
                    results.push(TestResult::measured("serial_2", d2, p2));
                }
            }
        }
    }
    TestReport {
        length: bits.len(),
        results,
    }
}

/// Kolmogorov–Smirnov distance of `samples` from U(0,1) and its asymptotic
/// p-value (with Stephens' finite-n correction).
pub fn ks_uniform(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (0.0, 1.0);
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / nf - v).max(v - i as f64 / nf))
        .fold(0.0, f64::max);
    let sq = nf.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    (d, kolmogorov_q(lambda))
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let j = j as f64;
        let term = (-2.0 * j * j * lambda * lambda).exp();
        sum += if j as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Runs the battery on consecutive blocks of `block_len` bits and reports,
/// per test, the KS statistic and KS p-value of the block p-values. A
/// trailing partial block is ignored.
pub fn aggregate_blocks(bits: &BitString, block_len: usize, tests: &[TestKind]) -> Result<TestReport> {
    if block_len == 0 {
        return Err(Error::Config("block length must be positive".into()));
    }
    let blocks = bits.len() / block_len;
    let per_block: Vec<TestReport> = (0..blocks)
        .map(|i| run_battery(&bits.slice(i * block_len, block_len), tests))
        .collect();
    let names: Vec<String> = run_battery(&BitString::zeros(block_len), tests)
        .results
        .into_iter()
        .map(|r| r.name)
        .collect();
    let results = names
        .into_iter()
        .map(|name| {
            let ps: Vec<f64> = per_block
                .iter()
                .filter_map(|r| r.get(&name).and_then(|t| t.p_value))
                .collect();
            if ps.is_empty() {
                return TestResult::skipped(&name);
            }
            let (d, p) = ks_uniform(&ps);
            TestResult::measured(&name, d, p)
        })
        .collect();
    Ok(TestReport {
        length: blocks * block_len,
        results,
    })
}

/// Binary PBM (`P4`) image, row-major, `1` = black, rows padded to bytes.
pub fn bit_image(bits: &BitString, width: usize, height: usize) -> Result<Vec<u8>> {
    let need = width * height;
    if width == 0 || height == 0 || bits.len() < need {
        return Err(Error::Dimension(format!(
            "{width}x{height} image needs {need} bits, have {}",
            bits.len()
        )));
    }
    let mut out = format!("P4\n{width} {height}\n").into_bytes();
    let row_bytes = width.div_ceil(8);
    for r in 0..height {
        let mut row = vec![0u8; row_bytes];
        for c in 0..width {
            if bits.get(r * width + c) {
                row[c / 8] |= 0x80 >> (c % 8);
            }
        }
        out.extend_from_slice(&row);
    }
    Ok(out)
}
