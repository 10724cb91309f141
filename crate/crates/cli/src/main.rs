use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use roadwatch_core::evaluation::{self, Interpolation, MatchMode};
use roadwatch_core::event::{count_by_type, read_events, write_events};
use roadwatch_core::fusion::{fuse_observations, merge_paths, read_observations};
use roadwatch_core::ingest::{compute_stats, frame_to_line, parse_openlabel, parse_trajectory_stream};
use roadwatch_core::pipeline::{time_frames, Detector, LatencyReport};
use roadwatch_core::simulator::{Scenario, ScenarioType, Simulation};
use roadwatch_core::{EventType, LaneMap, PipelineConfig, TrafficEvent};

mod manifest;
mod settings;

use manifest::RunManifest;

/// Reference figures for the bench comparison line: 22,500 frames in 234.25 s.
const REFERENCE_TOTAL_S: f64 = 234.25;
const REFERENCE_FRAMES: usize = 22_500;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Input(e) => write!(f, "input error: {e:#}"),
            CliError::Internal(e) => write!(f, "internal error: {e:#}"),
        }
    }
}

fn input<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Input(e.into())
}

fn internal<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Internal(e.into())
}

#[derive(Parser, Debug)]
#[command(name = "roadwatch", version, about = "Rule-based accident detection over roadside trajectory streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// Pipeline config file (TOML or JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set rules.ttc_threshold=2.0`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the detector over a trajectory stream (or a directory of segments).
    Detect(DetectArgs),
    /// Generate a scenario stream with its lane map and ground truth.
    Simulate(SimulateArgs),
    /// Score predicted events against ground-truth events.
    Evaluate(EvaluateArgs),
    /// Measure per-frame pipeline latency on a generated stream.
    Bench(BenchArgs),
    /// Dataset statistics for an OpenLABEL file or a trajectory stream.
    Stats(StatsArgs),
    /// Inspect configuration.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Subcommand, Debug)]
enum ConfigAction {
    /// Print the fully resolved configuration.
    Show {
        #[arg(long, value_enum, default_value_t = Format::Toml)]
        format: Format,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Toml,
    Json,
}

#[derive(Args, Debug)]
struct DetectArgs {
    /// Trajectory JSONL file, or a directory of segment files.
    #[arg(long, short = 't')]
    trajectory: PathBuf,
    /// Lane map JSON
    #[arg(long, short = 'l')]
    lane_map: PathBuf,
    /// Detector observations JSONL to fuse with the rule path. For a
    /// directory input, `<segment>.observations.jsonl` files are picked up instead.
    #[arg(long)]
    observations: Option<PathBuf>,
    /// Events JSONL (a directory when the input is a directory).
    #[arg(long, short = 'o')]
    output: PathBuf,
    /// Disable the check that consecutive timestamps are at most ten nominal periods apart.
    #[arg(long)]
    no_gap_check: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ScenarioArg {
    FreeFlow,
    RearEnd,
    ShoulderStop,
    StandingQueue,
}

impl From<ScenarioArg> for ScenarioType {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::FreeFlow => ScenarioType::FreeFlow,
            ScenarioArg::RearEnd => ScenarioType::RearEnd,
            ScenarioArg::ShoulderStop => ScenarioType::ShoulderStop,
            ScenarioArg::StandingQueue => ScenarioType::StandingQueue,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct ScenarioArgs {
    #[arg(long, value_enum, default_value = "rear-end")]
    scenario: ScenarioArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the fixed default kinematics instead of drawing them from the seed.
    #[arg(long)]
    fixed: bool,
    /// Seconds; defaults depend on the scenario type.
    #[arg(long, conflicts_with = "frames")]
    duration: Option<f64>,
    /// Number of frames (alternative to --duration).
    #[arg(long)]
    frames: Option<u64>,
    #[arg(long, default_value_t = 25.0)]
    frame_rate: f64,
    /// Total vehicles including background traffic; defaults depend on the scenario type
    #[arg(long)]
    vehicles: Option<u32>,
    /// Gaussian position jitter, meters.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Leave velocities out of the stream so the detector estimates them.
    #[arg(long)]
    no_velocity: bool,
}

impl ScenarioArgs {
    fn build(&self, config: &PipelineConfig) -> Result<Scenario, CliError> {
        let kind = self.scenario.into();
        let mut sc = if self.fixed { Scenario::new(kind, self.seed) } else { Scenario::randomized(kind, self.seed) };
        sc.frame_rate = self.frame_rate;
        if let Some(d) = self.duration {
            sc.duration = d;
        }
        if let Some(n) = self.frames {
            sc.duration = n as f64 / self.frame_rate;
        }
        if let Some(v) = self.vehicles {
            sc.vehicle_count = v;
        }
        sc.noise_sigma = self.noise;
        sc.emit_velocity = !self.no_velocity;
        sc.rules = config.rules;
        sc.classifier = config.classifier;
        sc.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(sc)
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Trajectory JSONL to write. The lane map, ground truth and truth
    /// events are written beside it.
    #[arg(long, short = 'o')]
    output: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModeArg {
    Event,
    Frame,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Predicted events JSONL
    #[arg(long, short = 'p')]
    predicted: PathBuf,
    /// Ground-truth events JSONL
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_enum, default_value = "event")]
    mode: ModeArg,
    /// Minimum temporal IoU for an event-level match.
    #[arg(long, default_value_t = evaluation::DEFAULT_IOU_THRESHOLD)]
    iou: f64,
    /// 11-point interpolated AP instead of all-point.
    #[arg(long)]
    eleven_point: bool,
    /// Only score events of this type (e.g. ACCIDENT).
    #[arg(long)]
    event_type: Option<String>,
    /// Write the JSON report here as well.
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "free-flow")]
    scenario: ScenarioArg,
    #[arg(long, default_value_t = 22_500)]
    frames: u64,
    #[arg(long, default_value_t = 50)]
    vehicles: u32,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    repetitions: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here as well.
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// OpenLABEL JSON, or a trajectory JSONL stream.
    path: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    format: StatsFormat,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum StatsFormat {
    Json,
    Table,
    Both,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("roadwatch: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Detect(a) => detect(a),
        Command::Simulate(a) => simulate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Bench(a) => bench(a),
        Command::Stats(a) => stats(a),
        Command::Config { action: ConfigAction::Show { format, config } } => {
            let c = settings::resolve(config.config.as_deref(), &config.overrides)?;
            match format {
                Format::Toml => print!("{}", c.to_toml()),
                Format::Json => println!("{}", serde_json::to_string_pretty(&c).expect("config serializes")),
            }
            Ok(())
        }
    }
}

fn load_lane_map(path: &Path) -> Result<LaneMap, CliError> {
    let text = settings::read_to_string(path).map_err(|_| input(anyhow!("cannot read lane map {}", path.display())))?;
    LaneMap::from_json(&text).with_context(|| format!("lane map {}", path.display())).map_err(input)
}

fn print_counts(events: &[TrafficEvent]) {
    println!("{} events", events.len());
    for (t, n) in count_by_type(events) {
        if n > 0 {
            println!("  {:<22} {n}", t.as_str());
        }
    }
}

fn write_event_file(path: &Path, events: &[TrafficEvent]) -> Result<(), CliError> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display())).map_err(internal)?;
    let mut out = BufWriter::new(file);
    write_events(&mut out, events)
        .and_then(|_| out.flush())
        .with_context(|| format!("writing {}", path.display()))
        .map_err(internal)
}

/// Detect over one segment. Frames are streamed; only events are kept.
fn detect_segment(
    trajectory: &Path,
    observations: Option<&Path>,
    lane_map: &LaneMap,
    config: PipelineConfig,
    gap_check: bool,
    manifest: &mut RunManifest,
) -> Result<Vec<TrafficEvent>, CliError> {
    let file = File::open(trajectory)
        .with_context(|| format!("cannot open trajectory {}", trajectory.display()))
        .map_err(input)?;
    let reader = parse_trajectory_stream(BufReader::new(file)).with_nominal_period(if gap_check {
        Some(roadwatch_core::ingest::NOMINAL_PERIOD)
    } else {
        None
    });
    let mut detector = Detector::new(lane_map, config).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut events = Vec::new();
    let start = Instant::now();
    for frame in reader {
        let frame = frame.with_context(|| format!("{}", trajectory.display())).map_err(input)?;
        events.extend(detector.process(frame).with_context(|| format!("{}", trajectory.display())).map_err(input)?);
    }
    events.extend(detector.finish());
    *manifest.timings.entry("ingest+detect".into()).or_default() += start.elapsed().as_secs_f64();

    if let Some(obs_path) = observations {
        let learned = manifest.time("fusion", || -> Result<_, CliError> {
            let file = File::open(obs_path)
                .with_context(|| format!("cannot open observations {}", obs_path.display()))
                .map_err(input)?;
            let obs = read_observations(BufReader::new(file))
                .with_context(|| format!("{}", obs_path.display()))
                .map_err(input)?;
            fuse_observations(&obs, &config.fusion).with_context(|| format!("{}", obs_path.display())).map_err(input)
        })?;
        events = merge_paths(&events, &learned, &config.fusion);
    }
    Ok(events)
}

fn is_segment(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.ends_with(".jsonl")
        && ![".observations.jsonl", ".events.jsonl", ".truth.jsonl"].iter().any(|s| name.ends_with(s))
}

fn detect(a: DetectArgs) -> Result<(), CliError> {
    let config = settings::resolve(a.config.config.as_deref(), &a.config.overrides)?;
    let lane_map = load_lane_map(&a.lane_map)?;
    if !a.trajectory.exists() {
        return Err(input(anyhow!("trajectory {} does not exist", a.trajectory.display())));
    }

    if a.trajectory.is_dir() {
        if a.observations.is_some() {
            return Err(CliError::Usage(
                "--observations applies to a single trajectory file; put <segment>.observations.jsonl beside each segment instead".into(),
            ));
        }
        let mut segments: Vec<PathBuf> = std::fs::read_dir(&a.trajectory)
            .with_context(|| format!("listing {}", a.trajectory.display()))
            .map_err(input)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| is_segment(p))
            .collect();
        segments.sort();
        std::fs::create_dir_all(&a.output)
            .with_context(|| format!("creating {}", a.output.display()))
            .map_err(internal)?;
        let mut manifest = RunManifest::new("detect", a.config.config.as_deref(), &a.output, config);
        manifest.inputs = segments.clone();
        manifest.inputs.push(a.lane_map.clone());
        let wall = Instant::now();
        let results: Vec<Result<(Vec<TrafficEvent>, RunManifest), CliError>> = segments
            .par_iter()
            .map(|seg| {
                let mut local = RunManifest::new("detect", None, &a.output, config);
                let stem = seg.file_name().and_then(|n| n.to_str()).unwrap_or("segment").trim_end_matches(".jsonl");
                let obs = seg.with_file_name(format!("{stem}.observations.jsonl"));
                let obs = obs.exists().then_some(obs);
                let events = detect_segment(seg, obs.as_deref(), &lane_map, config, !a.no_gap_check, &mut local)?;
                write_event_file(&a.output.join(format!("{stem}.events.jsonl")), &events)?;
                Ok((events, local))
            })
            .collect();
        let mut all = Vec::new();
        for r in results {
            let (events, local) = r?;
            all.extend(events);
            for (k, v) in local.timings {
                *manifest.timings.entry(k).or_default() += v;
            }
        }
        manifest.timings.insert("wall".into(), wall.elapsed().as_secs_f64());
        manifest.write().map_err(internal)?;
        println!("{} segments", segments.len());
        print_counts(&all);
        return Ok(());
    }

    let mut manifest = RunManifest::new("detect", a.config.config.as_deref(), &a.output, config);
    manifest.inputs =
        [Some(a.trajectory.clone()), Some(a.lane_map.clone()), a.observations.clone()].into_iter().flatten().collect();
    let events =
        detect_segment(&a.trajectory, a.observations.as_deref(), &lane_map, config, !a.no_gap_check, &mut manifest)?;
    manifest.time("write", || write_event_file(&a.output, &events))?;
    manifest.write().map_err(internal)?;
    print_counts(&events);
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("stream");
    let stem = name.strip_suffix(".jsonl").unwrap_or(name);
    path.with_file_name(format!("{stem}{suffix}"))
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let config = settings::resolve(a.config.config.as_deref(), &a.config.overrides)?;
    let scenario = a.scenario.build(&config)?;
    let mut manifest = RunManifest::new("simulate", a.config.config.as_deref(), &a.output, config);
    let sim = Simulation::new(&scenario).map_err(|e| CliError::Usage(e.to_string()))?;
    let lanes_path = sibling(&a.output, ".lanes.json");
    let truth_path = sibling(&a.output, ".truth.json");
    let truth_events_path = sibling(&a.output, ".truth.jsonl");

    manifest.time("generate", || -> Result<(), CliError> {
        let file =
            File::create(&a.output).with_context(|| format!("creating {}", a.output.display())).map_err(internal)?;
        let mut out = BufWriter::new(file);
        for frame in sim.frames() {
            writeln!(out, "{}", frame_to_line(&frame)).map_err(internal)?;
        }
        out.flush().map_err(internal)
    })?;
    let gt = sim.ground_truth();
    std::fs::write(&lanes_path, sim.lane_map().to_json() + "\n").map_err(internal)?;
    std::fs::write(&truth_path, serde_json::to_string_pretty(&gt).expect("ground truth serializes") + "\n")
        .map_err(internal)?;
    write_event_file(&truth_events_path, &gt.to_events())?;
    manifest.write().map_err(internal)?;

    println!("{} frames -> {}", scenario.frame_count(), a.output.display());
    println!("lane map      {}", lanes_path.display());
    println!("ground truth  {}", truth_path.display());
    for e in &gt.expected {
        println!("  expected {:<22} tracks {:?} trigger frame {}", e.event_type.as_str(), e.track_ids, e.trigger_frame);
    }
    for n in &gt.notices {
        println!("  notice: {n}");
    }
    Ok(())
}

fn load_events(path: &Path) -> Result<Vec<TrafficEvent>, CliError> {
    let file = File::open(path).with_context(|| format!("cannot open events {}", path.display())).map_err(input)?;
    read_events(BufReader::new(file)).with_context(|| format!("{}", path.display())).map_err(input)
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&a.iou) {
        return Err(CliError::Usage(format!("--iou {} is outside [0, 1]", a.iou)));
    }
    let mut predicted = load_events(&a.predicted)?;
    let mut truth = load_events(&a.truth)?;
    if let Some(t) = &a.event_type {
        let wanted: EventType = serde_json::from_value(serde_json::Value::String(t.to_ascii_uppercase()))
            .map_err(|_| CliError::Usage(format!("unknown event type {t:?}")))?;
        predicted.retain(|e| e.event_type == wanted);
        truth.retain(|e| e.event_type == wanted);
    }
    let mode = match a.mode {
        ModeArg::Event => MatchMode::EventLevel,
        ModeArg::Frame => MatchMode::FrameLevel,
    };
    let interpolation = if a.eleven_point { Interpolation::ElevenPoint } else { Interpolation::AllPoint };
    let report = evaluation::evaluate(&predicted, &truth, mode, a.iou, interpolation);
    print!("{}", report.to_table());
    if let Some(out) = &a.output {
        std::fs::write(out, report.to_json() + "\n")
            .with_context(|| format!("writing {}", out.display()))
            .map_err(internal)?;
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<(), CliError> {
    let config = settings::resolve(a.config.config.as_deref(), &a.config.overrides)?;
    let scenario = ScenarioArgs {
        scenario: a.scenario,
        seed: a.seed,
        fixed: false,
        duration: None,
        frames: Some(a.frames),
        frame_rate: 25.0,
        vehicles: Some(a.vehicles),
        noise: 0.0,
        no_velocity: false,
    }
    .build(&config)?;
    let sim = Simulation::new(&scenario).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut samples = Vec::with_capacity(a.frames as usize * a.repetitions as usize);
    let mut events = 0;
    let wall = Instant::now();
    for _ in 0..a.repetitions {
        events = time_frames(sim.frames(), sim.lane_map(), config, &mut samples).map_err(internal)?;
    }
    let wall = wall.elapsed().as_secs_f64();
    let report = LatencyReport::from_samples(samples, a.repetitions as usize, events);
    let vehicles_seen = sim.frames().next().map_or(0, |f| f.objects.len());

    println!(
        "{} frames x {} repetition(s), {} vehicles/frame, scenario {:?}",
        report.frames, report.repetitions, vehicles_seen, scenario.scenario_type
    );
    println!("mean  {:>9.4} ms/frame", report.mean_ms);
    println!("p50   {:>9.4} ms", report.p50_ms);
    println!("p99   {:>9.4} ms", report.p99_ms);
    println!("max   {:>9.4} ms", report.max_ms);
    println!("pipeline total {:.3} s per repetition (wall {:.3} s incl. generation)", report.total_s, wall);
    println!("events {}", report.events);
    let scaled = report.total_s * REFERENCE_FRAMES as f64 / report.frames.max(1) as f64;
    println!(
        "reference: {REFERENCE_TOTAL_S} s for {REFERENCE_FRAMES} frames ({:.2} ms/frame); this run scaled to {REFERENCE_FRAMES} frames: {scaled:.3} s",
        REFERENCE_TOTAL_S * 1e3 / REFERENCE_FRAMES as f64
    );
    if let Some(out) = &a.output {
        std::fs::write(out, serde_json::to_string_pretty(&report).expect("report serializes") + "\n")
            .with_context(|| format!("writing {}", out.display()))
            .map_err(internal)?;
    }
    Ok(())
}

fn stats(a: StatsArgs) -> Result<(), CliError> {
    let bytes = std::fs::read(&a.path).with_context(|| format!("cannot read {}", a.path.display())).map_err(input)?;
    let is_stream = a.path.extension().is_some_and(|e| e == "jsonl");
    let stats = if is_stream {
        let frames = parse_trajectory_stream(&bytes[..])
            .with_nominal_period(None)
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{}", a.path.display()))
            .map_err(input)?;
        compute_stats(&frames, None)
    } else {
        let doc = parse_openlabel(&bytes).with_context(|| format!("{}", a.path.display())).map_err(input)?;
        compute_stats(&doc.frames, Some(&doc.counts))
    };
    if a.format != StatsFormat::Json {
        print!("{}", stats.to_table());
    }
    if a.format != StatsFormat::Table {
        println!("{}", serde_json::to_string_pretty(&stats).expect("stats serialize"));
    }
    Ok(())
}
