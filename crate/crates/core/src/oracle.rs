//! Numerical checks of the analytic bounds.
//!
//! `max_pguess_at_witness` searches qubit strategies for the largest
//! average guessing probability `(1/8) Σ max_b p(b|x,y)` at a given witness.
//! Strategies are parameterized by 16 angles and radii: `(θ, φ, r)` per
//! preparation and `(θ, φ)` per measurement. The search is a multistart with
//! per-coordinate golden-section refinement; the equality constraint is a
//! quadratic penalty whose weight doubles each stage.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlochVector, OutcomeDistribution, Strategy};
use crate::simulator::{simulate_run, DeviceModel, RunConfig};
use crate::witness::{frequencies_from_counts, guessing_bound, witness_from_distribution, InconclusivePolicy};

pub const FEASIBILITY: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub w_target: f64,
    /// Witness of the returned strategy.
    pub w: f64,
    pub pg_max: f64,
    /// Analytic bound `f(w_target)`.
    pub bound: f64,
    pub strategy: Strategy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OptimizerOptions {
    pub starts: usize,
    /// Refinement stages per start; each is one sweep over all coordinates.
    pub stages: usize,
    pub seed: u64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            starts: 200,
            stages: 60,
            seed: 0,
        }
    }
}

/// Witness computed straight from Bloch vectors; measurements may be
/// sub-normalized (averaged) here.
fn raw_witness(s: &[BlochVector; 4], t: &[BlochVector; 2]) -> f64 {
    0.25 * (s[0] - s[1]).cross(s[2] - s[3]).dot(t[0].cross(t[1])).abs()
}

fn raw_pguess(s: &[BlochVector; 4], t: &[BlochVector; 2]) -> f64 {
    let mut sum = 0.0;
    for sx in s {
        for ty in t {
            sum += 0.5 * (1.0 + sx.dot(*ty).abs());
        }
    }
    sum / 8.0
}

/// Average guessing probability of a single strategy.
pub fn pguess(s: &Strategy) -> f64 {
    raw_pguess(&s.preparations, &s.measurements)
}

const DIM: usize = 16;

fn unpack(p: &[f64; DIM]) -> ([BlochVector; 4], [BlochVector; 2]) {
    let s = std::array::from_fn(|i| BlochVector::from_angles(p[3 * i], p[3 * i + 1]) * p[3 * i + 2]);
    let t = std::array::from_fn(|j| BlochVector::from_angles(p[12 + 2 * j], p[13 + 2 * j]));
    (s, t)
}

fn is_radius(i: usize) -> bool {
    i < 12 && i % 3 == 2
}

fn random_direction<R: Rng>(rng: &mut R) -> (f64, f64) {
    let theta = (1.0 - 2.0 * rng.random::<f64>()).acos();
    (theta, std::f64::consts::TAU * rng.random::<f64>())
}

/// Uniformly random pure-state strategy.
pub fn random_strategy<R: Rng>(rng: &mut R) -> Strategy {
    let mut dir = || {
        let (t, p) = random_direction(rng);
        BlochVector::from_angles(t, p)
    };
    Strategy {
        preparations: std::array::from_fn(|_| dir()),
        measurements: std::array::from_fn(|_| dir()),
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section maximization of `f` on `[a, b]`.
fn golden_max(mut a: f64, mut b: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..40 {
        if (b - a).abs() < 1e-10 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

struct StartResult {
    pg: f64,
    w: f64,
    params: [f64; DIM],
}

fn optimize_start(w_target: f64, stages: usize, seed: u64) -> StartResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = [0.0; DIM];
    for i in 0..4 {
        let (t, ph) = random_direction(&mut rng);
        p[3 * i] = t;
        p[3 * i + 1] = ph;
        p[3 * i + 2] = 1.0;
    }
    for j in 0..2 {
        let (t, ph) = random_direction(&mut rng);
        p[12 + 2 * j] = t;
        p[13 + 2 * j] = ph;
    }

    let mut mu = 10.0;
    let mut h = 0.5;
    let objective = |p: &[f64; DIM], mu: f64| {
        let (s, t) = unpack(p);
        raw_pguess(&s, &t) - mu * (raw_witness(&s, &t) - w_target).powi(2)
    };
    for _ in 0..stages {
        for i in 0..DIM {
            let (lo, hi) = if is_radius(i) {
                ((p[i] - h).max(0.0), (p[i] + h).min(1.0))
            } else {
                (p[i] - h, p[i] + h)
            };
            let current = objective(&p, mu);
            let mut trial = p;
            let (x, fx) = golden_max(lo, hi, |v| {
                trial[i] = v;
                objective(&trial, mu)
            });
            if fx > current {
                p[i] = x;
            }
        }
        mu = (mu * 2.0).min(1e12);
        h = (h * 0.85).max(1e-7);
    }
    let (s, t) = unpack(&p);
    StartResult {
        pg: raw_pguess(&s, &t),
        w: raw_witness(&s, &t),
        params: p,
    }
}

pub fn max_pguess_at_witness(w_target: f64, budget: usize) -> Result<FrontierPoint> {
    max_pguess_with(
        w_target,
        &OptimizerOptions {
            stages: budget,
            ..OptimizerOptions::default()
        },
    )
}

pub fn max_pguess_with(w_target: f64, opts: &OptimizerOptions) -> Result<FrontierPoint> {
    if !(0.0..=1.0).contains(&w_target) {
        return Err(Error::out_of_range("w_target", "[0, 1]", w_target));
    }
    let best = (0..opts.starts)
        .into_par_iter()
        .map(|k| {
            let seed = opts.seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            (k, optimize_start(w_target, opts.stages, seed))
        })
        .filter(|(_, r)| (r.w - w_target).abs() <= FEASIBILITY)
        .reduce_with(|a, b| {
            // Larger p_guess wins; ties go to the lower start index so the
            // result does not depend on scheduling.
            if b.1.pg > a.1.pg || (b.1.pg == a.1.pg && b.0 < a.0) {
                b
            } else {
                a
            }
        });
    let (_, r) = best.ok_or_else(|| {
        Error::Infeasible(format!("no start reached |W - {w_target}| <= {FEASIBILITY}"))
    })?;
    let (s, t) = unpack(&r.params);
    Ok(FrontierPoint {
        w_target,
        w: r.w,
        pg_max: r.pg,
        bound: guessing_bound(w_target)?,
        strategy: Strategy {
            preparations: s,
            measurements: t,
        },
    })
}

pub fn frontier(targets: &[f64], opts: &OptimizerOptions) -> Result<Vec<FrontierPoint>> {
    targets.iter().map(|&w| max_pguess_with(w, opts)).collect()
}

/// CSV with header `w_target,pg_max,f_w`.
pub fn write_frontier_csv<W: Write>(mut w: W, points: &[FrontierPoint]) -> Result<()> {
    writeln!(w, "w_target,pg_max,f_w")?;
    for p in points {
        writeln!(w, "{:.6},{:.9},{:.9}", p.w_target, p.pg_max, p.bound)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityProbe {
    /// Witness of the weight-averaged Bloch vectors.
    pub w_mixture: f64,
    /// `Σ_λ Σ_μ q_λ q_μ W(S_λ, T_μ)`: preparation and measurement variables
    /// mixed independently with the same weights.
    pub w_average: f64,
    pub holds: bool,
}

/// Compares the witness of a mixture with the average witness of its parts.
///
/// The inequality `w_mixture <= w_average` is *not* universal: a mixture of
/// two zero-witness strategies can have a positive witness. `holds` reports
/// the outcome instead of asserting it.
pub fn convexity_probe(components: &[Strategy], weights: &[f64]) -> Result<ConvexityProbe> {
    if components.is_empty() || components.len() != weights.len() {
        return Err(Error::Dimension(format!(
            "{} components with {} weights",
            components.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|&q| !(0.0..=1.0).contains(&q)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config("weights must lie on the probability simplex".into()));
    }
    let mut s = [BlochVector::ZERO; 4];
    let mut t = [BlochVector::ZERO; 2];
    for (c, &q) in components.iter().zip(weights) {
        for x in 0..4 {
            s[x] = s[x] + c.preparations[x] * q;
        }
        for y in 0..2 {
            t[y] = t[y] + c.measurements[y] * q;
        }
    }
    let p_plus = std::array::from_fn(|x| std::array::from_fn(|y| (0.5 * (1.0 + s[x].dot(t[y]))).clamp(0.0, 1.0)));
    let w_mixture = witness_from_distribution(&OutcomeDistribution::from_plus(p_plus)?).w;
    let mut w_average = 0.0;
    for (a, &qa) in components.iter().zip(weights) {
        for (b, &qb) in components.iter().zip(weights) {
            w_average += qa * qb * raw_witness(&a.preparations, &b.measurements);
        }
    }
    Ok(ConvexityProbe {
        w_mixture,
        w_average,
        holds: w_mixture <= w_average + 1e-9,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contamination {
    Afterpulse,
    NonQubit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub p: f64,
    /// One minus the realized contaminated fraction (from truth tags).
    pub eta: f64,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Witness of the uncontaminated run with the same seed.
    pub w_clean: f64,
    pub points: Vec<ScalingPoint>,
}

/// Least-squares slope of `ln W` against `ln η` over the grid of
/// contamination probabilities, one simulated run per value.
pub fn afterpulse_scaling_probe(
    model: &DeviceModel,
    grid: &[f64],
    kind: Contamination,
    config: &RunConfig,
) -> Result<ScalingFit> {
    if grid.len() < 2 {
        return Err(Error::Config("need at least two grid points".into()));
    }
    let measure = |p: f64| -> Result<ScalingPoint> {
        let mut m = model.clone();
        match kind {
            Contamination::Afterpulse => m.afterpulse_prob = p,
            Contamination::NonQubit => m.multiphoton_prob = p,
        }
        let mut counts = crate::witness::CountsTable::default();
        let mut tagged = 0u64;
        let mut total = 0u64;
        for e in simulate_run(&m, config)? {
            counts.record(e.event.x as usize, e.event.y as usize, e.event.b);
            if e.event.b.is_some() {
                total += 1;
                let hit = match kind {
                    Contamination::Afterpulse => e.tags.afterpulse,
                    Contamination::NonQubit => e.tags.multiphoton,
                };
                tagged += hit as u64;
            }
        }
        let w = witness_from_distribution(&frequencies_from_counts(&counts, InconclusivePolicy::Discard)?).w;
        Ok(ScalingPoint {
            p,
            eta: 1.0 - tagged as f64 / total.max(1) as f64,
            w,
        })
    };
    let w_clean = measure(0.0)?.w;
    let points = grid.par_iter().map(|&p| measure(p)).collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|p| p.eta.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.w.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("degenerate grid: all η equal".into()));
    }
    let slope = sxy / sxx;
    Ok(ScalingFit {
        slope,
        intercept: my - slope * mx,
        w_clean,
        points,
    })
}
