//! The three protocol steps over windows of rounds: collect counts, certify
//! the window's min-entropy, and hash its raw outcomes down to the
//! certified length.
//!
//! Each window is analyzed on its own; counts never carry over.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng, TryRngCore};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::extractor::{extract, required_seed_length, ToeplitzSeed};
use crate::model::Outcome;
use crate::photon::{
    alpha_no_postselection, alpha_with_postselection, effective_witness, QubitFractionEstimate, SourceStats,
};
use crate::security::{extractable_length, witness_floor, ExtractionSpec, SecurityParams, WitnessCertificate};
use crate::simulator::{read_event_log, simulate_run, tally, DeviceModel, Event, RunConfig, TaggedEvent};
use crate::stats::{aggregate_blocks, run_battery, TestKind, TestReport};
use crate::witness::{min_entropy_per_bit, CountsTable, InconclusivePolicy};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Simulate,
    Analyze,
}

/// Which preparations count as the sample for the qubit fraction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// All rounds of the window, `α̂ = q - t`.
    #[default]
    Preparations,
    /// Conclusive rounds only, with every multi-photon round assumed
    /// conclusive.
    Postselected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceConfig {
    /// Overrides the value derived from `p1`, `p2`.
    pub q_single: Option<f64>,
    pub p1: f64,
    /// Defaults to `p1² / 2`.
    pub p2: Option<f64>,
    pub alpha_mode: AlphaMode,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            q_single: None,
            p1: 6.5e-4,
            p2: None,
            alpha_mode: AlphaMode::Preparations,
        }
    }
}

impl SourceConfig {
    pub fn stats(&self, preparations: u64, conclusive: u64) -> Result<SourceStats> {
        match self.q_single {
            Some(q) => SourceStats::with_q(q, preparations, conclusive),
            None => SourceStats::from_pair_probabilities(
                self.p1,
                self.p2.unwrap_or(self.p1 * self.p1 / 2.0),
                preparations,
                conclusive,
            ),
        }
    }

    pub fn estimate(&self, stats: &SourceStats, epsilon: f64) -> Result<QubitFractionEstimate> {
        match self.alpha_mode {
            AlphaMode::Preparations => alpha_no_postselection(stats, epsilon),
            AlphaMode::Postselected => alpha_with_postselection(stats, epsilon),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeedSource {
    /// ChaCha12 stream from a 64-bit seed; reproducible.
    Rng { seed: u64 },
    /// Raw seed bytes, MSB-first.
    File { path: PathBuf },
    Os,
}

/// `reuse`: every window takes the seed prefix it needs from one pool.
/// `fresh`: windows consume disjoint stretches of the pool.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    #[default]
    Reuse,
    Fresh,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorConfig {
    pub seed: SeedSource,
    pub policy: SeedPolicy,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            seed: SeedSource::Rng { seed: 0 },
            policy: SeedPolicy::Reuse,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageConfig {
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsConfig {
    pub tests: Vec<TestKind>,
    /// Also run the battery per block of this many bits and report the KS
    /// aggregate of the block p-values.
    pub block_len: Option<usize>,
    pub image: Option<ImageConfig>,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            tests: TestKind::ALL.to_vec(),
            block_len: None,
            image: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub events: Option<PathBuf>,
    pub counts: Option<PathBuf>,
    /// Written by `simulate` only; analysis never reads it.
    pub truth_tags: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

/// One self-describing run configuration. Every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub mode: Mode,
    /// Rounds per analysis window.
    pub window: u64,
    /// Converts rounds to seconds for the reported rates.
    pub rounds_per_second: f64,
    pub security: SecurityParams,
    pub policy: InconclusivePolicy,
    pub source: SourceConfig,
    pub extractor: ExtractorConfig,
    pub stats: StatsConfig,
    pub device: DeviceModel,
    pub run: RunConfig,
    pub paths: Paths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: Mode::Simulate,
            window: 24120,
            rounds_per_second: 402.0,
            security: SecurityParams::default(),
            policy: InconclusivePolicy::Discard,
            source: SourceConfig::default(),
            extractor: ExtractorConfig::default(),
            stats: StatsConfig::default(),
            device: DeviceModel::default(),
            run: RunConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1 round".into()));
        }
        if !(self.rounds_per_second > 0.0 && self.rounds_per_second.is_finite()) {
            return Err(Error::out_of_range("rounds_per_second", "(0, inf)", self.rounds_per_second));
        }
        self.security.validate()?;
        self.source.stats(1, 0)?;
        if self.mode == Mode::Simulate {
            self.device.validate()?;
            self.sim_config().validate()?;
        } else {
            match (&self.paths.events, &self.paths.counts) {
                (None, None) => {
                    return Err(Error::Config("analyze mode needs paths.events or paths.counts".into()))
                }
                (events, counts) => {
                    for p in events.iter().chain(counts) {
                        if !p.exists() {
                            return Err(Error::Config(format!("{} does not exist", p.display())));
                        }
                    }
                }
            }
        }
        if let SeedSource::File { path } = &self.extractor.seed {
            if !path.exists() {
                return Err(Error::Config(format!("seed file {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    fn sim_config(&self) -> RunConfig {
        RunConfig {
            window: self.window,
            ..self.run.clone()
        }
    }
}

pub fn simulate_events(cfg: &PipelineConfig) -> Result<Vec<TaggedEvent>> {
    Ok(simulate_run(&cfg.device, &cfg.sim_config())?.collect())
}

struct SeedProvider {
    source: SeedSource,
    policy: SeedPolicy,
    pool: BitString,
    offset: usize,
    rng: Option<ChaCha12Rng>,
}

impl SeedProvider {
    fn new(cfg: &ExtractorConfig) -> Result<Self> {
        let (pool, rng) = match &cfg.seed {
            SeedSource::Rng { seed } => (BitString::default(), Some(ChaCha12Rng::seed_from_u64(*seed))),
            SeedSource::File { path } => {
                let bytes = std::fs::read(path)?;
                (BitString::from_bytes(&bytes, bytes.len() * 8).expect("sized"), None)
            }
            SeedSource::Os => (BitString::default(), None),
        };
        Ok(SeedProvider {
            source: cfg.seed.clone(),
            policy: cfg.policy,
            pool,
            offset: 0,
            rng,
        })
    }

    fn ensure(&mut self, len: usize) -> Result<()> {
        while self.pool.len() < len {
            let word = match (&self.source, self.rng.as_mut()) {
                (SeedSource::Rng { .. }, Some(rng)) => rng.next_u64(),
                (SeedSource::Os, _) => rand::rngs::OsRng
                    .try_next_u64()
                    .map_err(|e| Error::Config(format!("OS entropy unavailable: {e}")))?,
                _ => {
                    return Err(Error::SeedExhausted {
                        needed: len,
                        available: self.pool.len(),
                    })
                }
            };
            for k in 0..64 {
                self.pool.push(word >> k & 1 == 1);
            }
        }
        Ok(())
    }

    fn seed_for(&mut self, m: usize, ell: usize) -> Result<ToeplitzSeed> {
        let need = required_seed_length(m, ell);
        let start = match self.policy {
            SeedPolicy::Reuse => 0,
            SeedPolicy::Fresh => self.offset,
        };
        self.ensure(start + need)?;
        if self.policy == SeedPolicy::Fresh {
            self.offset += need;
        }
        ToeplitzSeed::new(self.pool.slice(start, need), m, ell)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub index: usize,
    pub first_round: u64,
    pub rounds: u64,
    pub conclusive: u64,
    pub seconds: f64,
    pub counts: CountsTable,
    pub certificate: Option<WitnessCertificate>,
    pub alpha: Option<QubitFractionEstimate>,
    pub w_eff: Option<f64>,
    /// Certified min-entropy per raw bit at `w_eff`.
    pub h_min: Option<f64>,
    pub extraction: Option<ExtractionSpec>,
    pub rate_bits_per_s: f64,
    pub skipped: Option<String>,
}

impl WindowResult {
    pub fn w_point(&self) -> Option<f64> {
        self.certificate.as_ref().map(|c| c.w_point)
    }

    pub fn w_min(&self) -> Option<f64> {
        self.certificate.as_ref().map(|c| c.w_min)
    }

    pub fn ell(&self) -> usize {
        self.extraction.map_or(0, |e| e.ell)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub security: SecurityParams,
    pub policy: InconclusivePolicy,
    pub windows: Vec<WindowResult>,
    pub warnings: Vec<String>,
    /// Extracted bits of all windows, in window order.
    #[serde(skip)]
    pub bits: BitString,
}

/// Raw bits of a window: `+1 → 1`, `-1 → 0`; inconclusive rounds are
/// dropped (discard) or read as `0` (map to minus).
fn raw_bits(events: &[Event], policy: InconclusivePolicy) -> BitString {
    BitString::from_bits(events.iter().filter_map(|e| match (e.b, policy) {
        (Some(b), _) => Some(b == Outcome::Plus),
        (None, InconclusivePolicy::MapToMinus) => Some(false),
        (None, InconclusivePolicy::Discard) => None,
    }))
}

/// Certifies one window's counts. `m` is the raw block length; returns the
/// window with `extraction` filled in, or `skipped` set when a cell is empty.
fn certify(
    cfg: &PipelineConfig,
    index: usize,
    first_round: u64,
    counts: CountsTable,
    m: usize,
    warnings: &mut Vec<String>,
) -> Result<WindowResult> {
    let rounds = counts.total_rounds();
    let conclusive = counts.conclusive_rounds();
    let seconds = rounds as f64 / cfg.rounds_per_second;
    let mut w = WindowResult {
        index,
        first_round,
        rounds,
        conclusive,
        seconds,
        counts,
        certificate: None,
        alpha: None,
        w_eff: None,
        h_min: None,
        extraction: None,
        rate_bits_per_s: 0.0,
        skipped: None,
    };
    let mut cert = match witness_floor(&counts, cfg.policy, &cfg.security) {
        Ok(c) => c,
        Err(Error::EmptyCell { x, y }) => {
            let msg = format!("window {index}: no events in cell (x={x}, y={y}); skipped");
            warnings.push(msg.clone());
            w.skipped = Some(msg);
            return Ok(w);
        }
        Err(e) => return Err(e),
    };
    let stats = cfg.source.stats(rounds, conclusive)?;
    let alpha = cfg.source.estimate(&stats, cfg.security.epsilon_alpha)?;
    let w_eff = effective_witness(cert.w_min, alpha.alpha_hat)?;
    let spec = extractable_length(m, w_eff, &cfg.security)?;
    cert.add_failure(cfg.security.epsilon_alpha);
    cert.add_failure(cfg.security.delta);
    w.certificate = Some(cert);
    w.alpha = Some(alpha);
    w.w_eff = Some(w_eff);
    w.h_min = Some(min_entropy_per_bit(w_eff)?);
    w.extraction = Some(spec);
    w.rate_bits_per_s = spec.ell as f64 / seconds;
    Ok(w)
}

/// Certifies a single counts table as one window; nothing is extracted.
pub fn analyze_counts(counts: &CountsTable, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let mut warnings = Vec::new();
    let (_, total) = counts.effective_counts(cfg.policy);
    let m = total.iter().flatten().sum::<u64>() as usize;
    let window = certify(cfg, 0, 0, *counts, m, &mut warnings)?;
    Ok(PipelineOutput {
        security: cfg.security,
        policy: cfg.policy,
        windows: vec![window],
        warnings,
        bits: BitString::default(),
    })
}

/// Splits `events` into consecutive windows of `cfg.window` records (the
/// last may be shorter), certifies each and extracts its bits.
pub fn analyze_events(events: &[Event], cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let window = usize::try_from(cfg.window).map_err(|_| Error::Config("window too large".into()))?;
    let mut out = PipelineOutput {
        security: cfg.security,
        policy: cfg.policy,
        ..PipelineOutput::default()
    };
    let mut seeds: Option<SeedProvider> = None;
    for (index, chunk) in events.chunks(window).enumerate() {
        let raw = raw_bits(chunk, cfg.policy);
        let mut w = certify(cfg, index, chunk[0].round, tally(chunk), raw.len(), &mut out.warnings)?;
        if w.ell() > 0 {
            if seeds.is_none() {
                seeds = Some(SeedProvider::new(&cfg.extractor)?);
            }
            let seed = seeds.as_mut().expect("initialized").seed_for(raw.len(), w.ell())?;
            let block = extract(&raw, &seed)?;
            out.bits.extend_from(&block);
        }
        w.index = index;
        out.windows.push(w);
    }
    Ok(out)
}

/// Runs the configured mode end to end.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    match cfg.mode {
        Mode::Simulate => {
            let events: Vec<Event> = simulate_events(cfg)?.into_iter().map(|e| e.event).collect();
            analyze_events(&events, cfg)
        }
        Mode::Analyze => {
            if let Some(path) = &cfg.paths.events {
                let file = std::fs::File::open(path)?;
                let events = read_event_log(std::io::BufReader::new(file))?;
                analyze_events(&events, cfg)
            } else {
                let path = cfg.paths.counts.as_ref().expect("validated");
                let counts: CountsTable = serde_json::from_str(&std::fs::read_to_string(path)?)
                    .map_err(|e| Error::Parse {
                        line: e.line(),
                        msg: e.to_string(),
                    })?;
                analyze_counts(&counts, cfg)
            }
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v:.6}"))
}

/// CSV `window,w_point,w_min,w_eff,ell,rate_bits_per_s`; fields of skipped
/// windows are left empty.
pub fn write_time_series<W: Write>(mut w: W, out: &PipelineOutput) -> Result<()> {
    writeln!(w, "window,w_point,w_min,w_eff,ell,rate_bits_per_s")?;
    for win in &out.windows {
        writeln!(
            w,
            "{},{},{},{},{},{:.6}",
            win.index,
            opt(win.w_point()),
            opt(win.w_min()),
            opt(win.w_eff),
            win.ell(),
            win.rate_bits_per_s
        )?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBudget {
    pub epsilon_pe: f64,
    /// `8 ε_pe`: failure probability of the witness floor.
    pub witness_failure: f64,
    /// `1 - 8 ε_pe`.
    pub witness_confidence: f64,
    pub epsilon_alpha: f64,
    pub delta: f64,
    /// `8 ε_pe + ε_α + Δ`: distance of the output from uniform.
    pub total_closeness: f64,
}

impl From<&SecurityParams> for EpsilonBudget {
    fn from(p: &SecurityParams) -> Self {
        EpsilonBudget {
            epsilon_pe: p.epsilon_pe,
            witness_failure: p.witness_failure(),
            witness_confidence: 1.0 - p.witness_failure(),
            epsilon_alpha: p.epsilon_alpha,
            delta: p.delta,
            total_closeness: p.total_closeness(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub window: usize,
    pub w_point: Option<f64>,
    pub w_min: Option<f64>,
    pub w_eff: Option<f64>,
    pub ell: usize,
    pub rate_bits_per_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub windows: usize,
    pub certified_windows: usize,
    pub skipped_windows: usize,
    pub total_rounds: u64,
    pub total_seconds: f64,
    pub extracted_bits: usize,
    pub mean_rate_bits_per_s: f64,
    pub policy: InconclusivePolicy,
    pub epsilon: EpsilonBudget,
    pub series: Vec<SeriesRow>,
    pub battery: TestReport,
    pub aggregate: Option<TestReport>,
    pub warnings: Vec<String>,
}

pub fn report(out: &PipelineOutput, stats: &StatsConfig) -> Result<Report> {
    let total_seconds: f64 = out.windows.iter().map(|w| w.seconds).sum();
    let aggregate = match stats.block_len {
        Some(len) => Some(aggregate_blocks(&out.bits, len, &stats.tests)?),
        None => None,
    };
    Ok(Report {
        windows: out.windows.len(),
        certified_windows: out.windows.iter().filter(|w| w.certificate.is_some()).count(),
        skipped_windows: out.windows.iter().filter(|w| w.skipped.is_some()).count(),
        total_rounds: out.windows.iter().map(|w| w.rounds).sum(),
        total_seconds,
        extracted_bits: out.bits.len(),
        mean_rate_bits_per_s: if total_seconds > 0.0 {
            out.bits.len() as f64 / total_seconds
        } else {
            0.0
        },
        policy: out.policy,
        epsilon: EpsilonBudget::from(&out.security),
        series: out
            .windows
            .iter()
            .map(|w| SeriesRow {
                window: w.index,
                w_point: w.w_point(),
                w_min: w.w_min(),
                w_eff: w.w_eff,
                ell: w.ell(),
                rate_bits_per_s: w.rate_bits_per_s,
            })
            .collect(),
        battery: run_battery(&out.bits, &stats.tests),
        aggregate,
        warnings: out.warnings.clone(),
    })
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let e = &self.epsilon;
        let mut line = |l: String| {
            s.push_str(&l);
            s.push('\n');
        };
        line(format!(
            "windows: {} ({} certified, {} skipped)",
            self.windows, self.certified_windows, self.skipped_windows
        ));
        line(format!("rounds: {}  duration: {:.1} s", self.total_rounds, self.total_seconds));
        line(format!(
            "extracted bits: {}  mean rate: {:.3} bits/s",
            self.extracted_bits, self.mean_rate_bits_per_s
        ));
        line(format!("inconclusive policy: {:?}", self.policy));
        line(format!(
            "epsilon budget: eps_pe={:e} (witness floor fails w.p. {:e}, confidence {:.4}), eps_alpha={:e}, delta={:e}, output distance <= {:e}",
            e.epsilon_pe, e.witness_failure, e.witness_confidence, e.epsilon_alpha, e.delta, e.total_closeness
        ));
        line(String::new());
        line(format!(
            "{:>6} {:>10} {:>10} {:>10} {:>8} {:>12}",
            "window", "W", "W_min", "W_eff", "ell", "bits/s"
        ));
        for r in &self.series {
            let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
            line(format!(
                "{:>6} {:>10} {:>10} {:>10} {:>8} {:>12.3}",
                r.window,
                f(r.w_point),
                f(r.w_min),
                f(r.w_eff),
                r.ell,
                r.rate_bits_per_s
            ));
        }
        line(String::new());
        line("statistical battery".into());
        s.push_str(&self.battery.to_string());
        if let Some(a) = &self.aggregate {
            s.push_str("\nblock aggregate (KS over block p-values)\n");
            s.push_str(&a.to_string());
        }
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s
    }
}
