use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stqrng::bits::BitString;
use stqrng::extractor::{extract, write_output, ToeplitzSeed};
use stqrng::oracle::{frontier, write_frontier_csv, OptimizerOptions};
use stqrng::pipeline::{
    report, run_pipeline, simulate_events, write_time_series, ImageConfig, Mode, PipelineConfig, PipelineOutput,
    SeedSource, StatsConfig,
};
use stqrng::simulator::{write_event_log, write_truth_tags};
use stqrng::stats::{aggregate_blocks, bit_image, run_battery, TestKind};
use stqrng::{Error, InconclusivePolicy};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;

#[derive(Parser)]
#[command(name = "stqrng", version, about = "Self-testing quantum random number generation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a run and write its event log.
    Simulate(SimulateArgs),
    /// Certify and extract from an event log, a counts table or a fresh simulation.
    Analyze(AnalyzeArgs),
    /// Hash a raw bit file with a Toeplitz seed.
    Extract(ExtractArgs),
    /// Run the statistical battery over a bit file.
    Test(TestArgs),
    /// Dump the numerical guessing-probability frontier.
    Frontier(FrontierArgs),
    /// Rebuild the report from a previous `analyze` output directory.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Discard,
    MapToMinus,
}

impl From<Policy> for InconclusivePolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Discard => InconclusivePolicy::Discard,
            Policy::MapToMinus => InconclusivePolicy::MapToMinus,
        }
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration; defaults apply to absent fields.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Number of rounds to simulate.
    #[arg(long)]
    rounds: Option<u64>,
    /// Simulation RNG seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> stqrng::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(r) = self.rounds {
            cfg.run.rounds = r;
        }
        if let Some(s) = self.seed {
            cfg.run.rng_seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Event log output (`round,x,y,b`).
    #[arg(long)]
    events: PathBuf,
    /// Ground-truth tags per round; never read by analysis.
    #[arg(long)]
    truth_tags: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Recorded event log.
    #[arg(long, conflicts_with = "counts")]
    events: Option<PathBuf>,
    /// Counts table (JSON) analyzed as a single window.
    #[arg(long)]
    counts: Option<PathBuf>,
    #[arg(long, value_enum)]
    policy: Option<Policy>,
    /// Seed of the RNG that supplies Toeplitz seeds.
    #[arg(long)]
    extractor_seed: Option<u64>,
    /// Rounds per window.
    #[arg(long)]
    window: Option<u64>,
    #[arg(short, long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    /// Raw bits, packed MSB-first.
    #[arg(long)]
    raw: PathBuf,
    /// Number of raw bits to hash; defaults to the whole file.
    #[arg(short, long)]
    m: Option<usize>,
    /// Output length.
    #[arg(short, long)]
    ell: usize,
    /// Seed file of at least m + ell - 1 bits.
    #[arg(long)]
    seed: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct TestArgs {
    /// Bits packed MSB-first.
    bits: PathBuf,
    /// Number of bits to test; defaults to the whole file.
    #[arg(long)]
    len: Option<usize>,
    /// Comma-separated subset of: monobit, block_frequency, runs, cumulative_sums, serial.
    #[arg(long, value_delimiter = ',')]
    tests: Vec<String>,
    /// Also test blocks of this many bits and aggregate their p-values.
    #[arg(long)]
    block_len: Option<usize>,
    /// Write a PBM image of the first width*height bits.
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    width: usize,
    #[arg(long, default_value_t = 500)]
    height: usize,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FrontierArgs {
    /// Number of evenly spaced witness targets in [0, 1].
    #[arg(long, default_value_t = 21)]
    points: usize,
    #[arg(long, default_value_t = 200)]
    starts: usize,
    #[arg(long, default_value_t = 60)]
    stages: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output; stdout when absent.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory written by `analyze`.
    dir: PathBuf,
    /// Configuration whose `stats` section drives the battery.
    #[arg(short, long)]
    config: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Json(_) | Error::OutOfRange { .. } | Error::ZeroLfsrState => EXIT_CONFIG,
        Error::QubitFractionTooLow(_) | Error::Infeasible(_) => EXIT_INFEASIBLE,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
        Command::Extract(a) => extract_cmd(a),
        Command::Test(a) => test_cmd(a),
        Command::Frontier(a) => frontier_cmd(a),
        Command::Report(a) => report_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn simulate(a: SimulateArgs) -> stqrng::Result<()> {
    let mut cfg = a.config.load()?;
    cfg.mode = Mode::Simulate;
    cfg.validate()?;
    let events = simulate_events(&cfg)?;
    write_event_log(BufWriter::new(File::create(&a.events)?), events.iter().map(|e| &e.event))?;
    if let Some(path) = &a.truth_tags {
        write_truth_tags(BufWriter::new(File::create(path)?), &events)?;
    }
    eprintln!("simulated {} rounds -> {}", events.len(), a.events.display());
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> stqrng::Result<()> {
    let mut cfg = a.config.load()?;
    if a.events.is_some() || a.counts.is_some() {
        cfg.mode = Mode::Analyze;
        cfg.paths.events = a.events;
        cfg.paths.counts = a.counts;
    }
    if let Some(p) = a.policy {
        cfg.policy = p.into();
    }
    if let Some(s) = a.extractor_seed {
        cfg.extractor.seed = SeedSource::Rng { seed: s };
    }
    if let Some(w) = a.window {
        cfg.window = w;
    }
    let out = run_pipeline(&cfg)?;
    std::fs::create_dir_all(&a.out_dir)?;
    write_outputs(&a.out_dir, &out, &cfg.stats)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn write_outputs(dir: &Path, out: &PipelineOutput, stats: &StatsConfig) -> stqrng::Result<()> {
    std::fs::write(dir.join("outputs.json"), serde_json::to_string_pretty(out)?)?;
    write_time_series(BufWriter::new(File::create(dir.join("timeseries.csv"))?), out)?;
    write_output(&dir.join("bits.bin"), &out.bits)?;
    write_report(dir, out, stats)
}

fn write_report(dir: &Path, out: &PipelineOutput, stats: &StatsConfig) -> stqrng::Result<()> {
    let r = report(out, stats)?;
    std::fs::write(dir.join("report.json"), r.to_json())?;
    let text = r.to_text();
    std::fs::write(dir.join("report.txt"), &text)?;
    if let Some(ImageConfig { width, height }) = stats.image {
        match bit_image(&out.bits, width, height) {
            Ok(img) => std::fs::write(dir.join("bits.pbm"), img)?,
            Err(e) => eprintln!("warning: bit image skipped: {e}"),
        }
    }
    print!("{text}");
    Ok(())
}

fn read_bits(path: &Path, len: Option<usize>) -> stqrng::Result<BitString> {
    let bytes = std::fs::read(path)?;
    let available = bytes.len() * 8;
    let len = len.unwrap_or(available);
    BitString::from_bytes(&bytes, len).ok_or_else(|| {
        Error::Dimension(format!("{} holds {available} bits, {len} requested", path.display()))
    })
}

fn extract_cmd(a: ExtractArgs) -> stqrng::Result<()> {
    let raw = read_bits(&a.raw, a.m)?;
    let seed = ToeplitzSeed::read(&a.seed, raw.len(), a.ell)?;
    let out = extract(&raw, &seed)?;
    write_output(&a.out, &out)?;
    eprintln!("{} -> {} bits", raw.len(), out.len());
    Ok(())
}

fn parse_tests(names: &[String]) -> stqrng::Result<Vec<TestKind>> {
    if names.is_empty() {
        return Ok(TestKind::ALL.to_vec());
    }
    names
        .iter()
        .map(|n| TestKind::parse(n.trim()).ok_or_else(|| Error::Config(format!("unknown test '{n}'"))))
        .collect()
}

fn test_cmd(a: TestArgs) -> stqrng::Result<()> {
    let tests = parse_tests(&a.tests)?;
    let bits = read_bits(&a.bits, a.len)?;
    let battery = run_battery(&bits, &tests);
    let aggregate = match a.block_len {
        Some(n) => Some(aggregate_blocks(&bits, n, &tests)?),
        None => None,
    };
    if let Some(path) = &a.image {
        std::fs::write(path, bit_image(&bits, a.width, a.height)?)?;
    }
    let mut stdout = std::io::stdout().lock();
    if a.json {
        let v = serde_json::json!({ "battery": battery, "aggregate": aggregate });
        writeln!(stdout, "{}", serde_json::to_string_pretty(&v)?)?;
    } else {
        write!(stdout, "{battery}")?;
        if let Some(agg) = aggregate {
            writeln!(stdout, "\nblock aggregate:")?;
            write!(stdout, "{agg}")?;
        }
    }
    Ok(())
}

fn frontier_cmd(a: FrontierArgs) -> stqrng::Result<()> {
    if a.points < 2 {
        return Err(Error::Config("--points must be at least 2".into()));
    }
    let targets: Vec<f64> = (0..a.points).map(|i| i as f64 / (a.points - 1) as f64).collect();
    let opts = OptimizerOptions {
        starts: a.starts,
        stages: a.stages,
        seed: a.seed,
    };
    let points = frontier(&targets, &opts)?;
    match &a.out {
        Some(p) => write_frontier_csv(BufWriter::new(File::create(p)?), &points),
        None => write_frontier_csv(std::io::stdout().lock(), &points),
    }
}

fn report_cmd(a: ReportArgs) -> stqrng::Result<()> {
    let stats = match &a.config {
        Some(p) => PipelineConfig::load(p)?.stats,
        None => StatsConfig::default(),
    };
    let file = File::open(a.dir.join("outputs.json"))?;
    let mut out: PipelineOutput = serde_json::from_reader(BufReader::new(file))?;
    let len = out.windows.iter().map(|w| w.ell()).sum();
    out.bits = read_bits(&a.dir.join("bits.bin"), Some(len))?;
    write_report(&a.dir, &out, &stats)
}
