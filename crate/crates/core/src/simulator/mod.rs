//! Seeded Monte Carlo of the prepare-and-measure experiment.
//!
//! Randomness comes from `ChaCha12Rng` seeded with [`RunConfig::rng_seed`]
//! via `SeedableRng::seed_from_u64`. Inputs come from a Galois LFSR. Every
//! round draws the same random numbers whatever the device parameters, so
//! runs that differ only in, say, the afterpulse probability are coupled.
//!
//! Truth tags are ground truth for tests only. The analysis side consumes
//! [`Event`], which does not carry them.

pub mod lfsr;

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{bb84_reference, probability_unchecked, BlochVector, Outcome, Strategy};
use crate::witness::CountsTable;
pub use lfsr::{lfsr_inputs, Lfsr};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonQubitRule {
    /// Always `+1`: perfectly predictable.
    #[default]
    AlwaysPlus,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriftTarget {
    S0,
    S1,
    S2,
    S3,
    T0,
    T1,
    #[serde(rename = "preparations")]
    Preparations,
    #[serde(rename = "measurements")]
    Measurements,
    #[serde(rename = "all")]
    All,
}

/// A rotation applied from `round` onwards; steps accumulate in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftStep {
    pub round: u64,
    pub target: DriftTarget,
    pub axis: BlochVector,
    pub angle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceModel {
    pub base: Strategy,
    /// Per-axis std-dev (radians) of the rotation jitter on preparations.
    pub prep_noise: f64,
    pub meas_noise: f64,
    pub drift: Vec<DriftStep>,
    pub efficiency: f64,
    pub afterpulse_prob: f64,
    pub multiphoton_prob: f64,
    pub nonqubit_rule: NonQubitRule,
}

impl Default for DeviceModel {
    fn default() -> Self {
        DeviceModel {
            base: bb84_reference(),
            prep_noise: 0.0,
            meas_noise: 0.0,
            drift: Vec::new(),
            efficiency: 1.0,
            afterpulse_prob: 0.0,
            multiphoton_prob: 0.0,
            nonqubit_rule: NonQubitRule::AlwaysPlus,
        }
    }
}

fn check_probability(name: &'static str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::out_of_range(name, "[0, 1]", p));
    }
    Ok(())
}

impl DeviceModel {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        check_probability("efficiency", self.efficiency)?;
        check_probability("afterpulse_prob", self.afterpulse_prob)?;
        check_probability("multiphoton_prob", self.multiphoton_prob)?;
        for (name, s) in [("prep_noise", self.prep_noise), ("meas_noise", self.meas_noise)] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::out_of_range(name, "[0, inf)", s));
            }
        }
        for d in &self.drift {
            if d.axis.norm() == 0.0 || !d.angle.is_finite() {
                return Err(Error::Config(format!("degenerate drift step at round {}", d.round)));
            }
        }
        Ok(())
    }

    /// Base strategy with every drift step up to and including `round`.
    pub fn strategy_at(&self, round: u64) -> Strategy {
        let mut s = self.base.clone();
        for d in self.drift.iter().filter(|d| d.round <= round) {
            apply_drift(&mut s, d);
        }
        s
    }
}

fn apply_drift(s: &mut Strategy, d: &DriftStep) {
    let axis = d.axis.normalized();
    let rot = |v: &mut BlochVector| *v = v.rotated(axis, d.angle);
    match d.target {
        DriftTarget::S0 => rot(&mut s.preparations[0]),
        DriftTarget::S1 => rot(&mut s.preparations[1]),
        DriftTarget::S2 => rot(&mut s.preparations[2]),
        DriftTarget::S3 => rot(&mut s.preparations[3]),
        DriftTarget::T0 => rot(&mut s.measurements[0]),
        DriftTarget::T1 => rot(&mut s.measurements[1]),
        DriftTarget::Preparations => s.preparations.iter_mut().for_each(rot),
        DriftTarget::Measurements => s.measurements.iter_mut().for_each(rot),
        DriftTarget::All => {
            s.preparations.iter_mut().for_each(rot);
            s.measurements.iter_mut().for_each(rot);
        }
    }
}

/// What the analysis sees of one round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub round: u64,
    pub x: u8,
    pub y: u8,
    pub b: Option<Outcome>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TruthTags {
    pub afterpulse: bool,
    pub multiphoton: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaggedEvent {
    pub event: Event,
    pub tags: TruthTags,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub rounds: u64,
    pub rng_seed: u64,
    pub lfsr_seed: u32,
    pub lfsr_taps: u32,
    pub window: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            rounds: 24120,
            rng_seed: 0,
            lfsr_seed: lfsr::DEFAULT_STATE,
            lfsr_taps: lfsr::TAPS_32,
            window: 24120,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.rounds < self.window {
            return Err(Error::Config(format!(
                "need rounds >= window >= 1, got rounds={} window={}",
                self.rounds, self.window
            )));
        }
        Lfsr::new(self.lfsr_seed, self.lfsr_taps)?;
        Ok(())
    }
}

struct Jitter {
    prep: Option<Normal<f64>>,
    meas: Option<Normal<f64>>,
}

impl Jitter {
    fn new(model: &DeviceModel) -> Self {
        let normal = |s: f64| (s > 0.0).then(|| Normal::new(0.0, s).expect("validated std-dev"));
        Jitter {
            prep: normal(model.prep_noise),
            meas: normal(model.meas_noise),
        }
    }

    /// Rotation vector with independent per-axis Gaussian components,
    /// each truncated to `[-π, π]` by rejection.
    fn sample<R: Rng>(dist: &Option<Normal<f64>>, rng: &mut R) -> BlochVector {
        let Some(d) = dist else {
            return BlochVector::ZERO;
        };
        let mut c = [0.0; 3];
        for v in &mut c {
            *v = loop {
                let a = d.sample(rng);
                if a.abs() <= std::f64::consts::PI {
                    break a;
                }
            };
        }
        c.into()
    }
}

#[allow(clippy::too_many_arguments)]
fn round_with<R: Rng>(
    model: &DeviceModel,
    strategy: &Strategy,
    jitter: &Jitter,
    round: u64,
    x: u8,
    y: u8,
    prev_b: Option<Outcome>,
    rng: &mut R,
) -> TaggedEvent {
    let u_afterpulse: f64 = rng.random();
    let u_multiphoton: f64 = rng.random();
    let u_outcome: f64 = rng.random();
    let u_loss: f64 = rng.random();
    let omega_s = Jitter::sample(&jitter.prep, rng);
    let omega_t = Jitter::sample(&jitter.meas, rng);

    let mut tags = TruthTags::default();
    let b = match prev_b {
        Some(prev) if u_afterpulse < model.afterpulse_prob => {
            tags.afterpulse = true;
            Some(prev)
        }
        _ => {
            let b = if u_multiphoton < model.multiphoton_prob {
                tags.multiphoton = true;
                match model.nonqubit_rule {
                    NonQubitRule::AlwaysPlus => Outcome::Plus,
                    NonQubitRule::Uniform if u_outcome < 0.5 => Outcome::Plus,
                    NonQubitRule::Uniform => Outcome::Minus,
                }
            } else {
                let s = strategy.preparations[x as usize].rotated_by(omega_s);
                let t = strategy.measurements[y as usize].rotated_by(omega_t);
                if u_outcome < probability_unchecked(s, t, Outcome::Plus) {
                    Outcome::Plus
                } else {
                    Outcome::Minus
                }
            };
            (u_loss < model.efficiency).then_some(b)
        }
    };
    TaggedEvent {
        event: Event { round, x, y, b },
        tags,
    }
}

/// One round with inputs `(x, y)`; `prev_b` is the previous round's outcome.
pub fn simulate_round<R: Rng>(
    model: &DeviceModel,
    round: u64,
    x: u8,
    y: u8,
    prev_b: Option<Outcome>,
    rng: &mut R,
) -> TaggedEvent {
    let strategy = model.strategy_at(round);
    round_with(model, &strategy, &Jitter::new(model), round, x, y, prev_b, rng)
}

/// Event stream of a run; deterministic in `(model, config)`.
pub struct Run {
    model: DeviceModel,
    jitter: Jitter,
    strategy: Strategy,
    next_drift: usize,
    rng: ChaCha12Rng,
    lfsr: Lfsr,
    round: u64,
    rounds: u64,
    prev_b: Option<Outcome>,
}

pub fn simulate_run(model: &DeviceModel, config: &RunConfig) -> Result<Run> {
    model.validate()?;
    config.validate()?;
    let mut model = model.clone();
    // Stable sort keeps the declared order of steps sharing a round.
    model.drift.sort_by_key(|d| d.round);
    Ok(Run {
        jitter: Jitter::new(&model),
        strategy: model.base.clone(),
        next_drift: 0,
        rng: ChaCha12Rng::seed_from_u64(config.rng_seed),
        lfsr: Lfsr::new(config.lfsr_seed, config.lfsr_taps)?,
        round: 0,
        rounds: config.rounds,
        prev_b: None,
        model,
    })
}

impl Iterator for Run {
    type Item = TaggedEvent;

    fn next(&mut self) -> Option<TaggedEvent> {
        if self.round >= self.rounds {
            return None;
        }
        while let Some(d) = self.model.drift.get(self.next_drift) {
            if d.round > self.round {
                break;
            }
            apply_drift(&mut self.strategy, d);
            self.next_drift += 1;
        }
        let (x, y) = self.lfsr.next_inputs();
        let ev = round_with(
            &self.model,
            &self.strategy,
            &self.jitter,
            self.round,
            x,
            y,
            self.prev_b,
            &mut self.rng,
        );
        self.prev_b = ev.event.b;
        self.round += 1;
        Some(ev)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.rounds - self.round) as usize;
        (n, Some(n))
    }
}

pub fn tally<'a, I: IntoIterator<Item = &'a Event>>(events: I) -> CountsTable {
    let mut c = CountsTable::default();
    for e in events {
        c.record(e.x as usize, e.y as usize, e.b);
    }
    c
}

/// Writes `round,x,y,b` lines with `b` in `{+1, -1, 0}` (0 = inconclusive).
pub fn write_event_log<'a, W: Write, I: IntoIterator<Item = &'a Event>>(mut w: W, events: I) -> Result<()> {
    for e in events {
        let b = match e.b {
            Some(Outcome::Plus) => "+1",
            Some(Outcome::Minus) => "-1",
            None => "0",
        };
        writeln!(w, "{},{},{},{}", e.round, e.x, e.y, b)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses an event log; blank lines and lines starting with `#` are skipped.
pub fn read_event_log<R: BufRead>(r: R) -> Result<Vec<Event>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            line: i + 1,
            msg: msg.to_string(),
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(err("expected 4 comma-separated fields"));
        }
        let round = f[0].parse().map_err(|_| err("bad round index"))?;
        let x: u8 = f[1].parse().map_err(|_| err("bad x"))?;
        let y: u8 = f[2].parse().map_err(|_| err("bad y"))?;
        if x > 3 || y > 1 {
            return Err(err("inputs out of range"));
        }
        let b = match f[3] {
            "+1" | "1" => Some(Outcome::Plus),
            "-1" => Some(Outcome::Minus),
            "0" => None,
            _ => return Err(err("outcome must be +1, -1 or 0")),
        };
        out.push(Event { round, x, y, b });
    }
    Ok(out)
}

/// Side-channel file: `round,afterpulse,multiphoton` with 0/1 flags.
pub fn write_truth_tags<'a, W: Write, I: IntoIterator<Item = &'a TaggedEvent>>(mut w: W, events: I) -> Result<()> {
    for e in events {
        writeln!(
            w,
            "{},{},{}",
            e.event.round, e.tags.afterpulse as u8, e.tags.multiphoton as u8
        )?;
    }
    w.flush()?;
    Ok(())
}
