//! `curio`: generate synthetic events, classify traces, plot tracks and
//! manage the knowledge base.
//!
//! Exit codes: 0 success, 1 I/O or configuration error, 2 when some events
//! could not be classified.

mod config;
mod plot;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use curio_core::body_budget::{ShapeConstancyMode, WeightConfig};
use curio_core::curiosity::process_stream;
use curio_core::ingest::{default_occluder, parse_trace, IngestError};
use curio_core::knowledge::{load_kb_file, save_kb_file, KnowledgeBase};
use curio_core::trace_model::{BBox, EventTrace, Point};
use curio_core::tracker::{detect_discontinuities, track_event};
use curio_core::{generate_event, ObjectClass, ScenarioKind, ScenarioSpec};

use config::{Overrides, RunConfig};
use plot::Axis;

const TRACE_EXT: &str = "trace";
const VERDICTS_FILE: &str = "verdicts.jsonl";

#[derive(Debug, Parser)]
#[command(
    name = "curio",
    version,
    about = "Curiosity-driven reasoning over detection traces"
)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Knowledge base file.
    #[arg(long, global = true, value_name = "FILE")]
    kb: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic event traces.
    Generate(GenerateArgs),
    /// Classify traces and update the knowledge base.
    Classify(ClassifyArgs),
    /// Write per-track CSV and an SVG chart for each trace.
    Plot(PlotArgs),
    /// Inspect or edit the knowledge base.
    Kb {
        #[command(subcommand)]
        action: KbAction,
    },
}

#[derive(Debug, clap::Args)]
struct GenerateArgs {
    #[arg(long, value_parser = parse_kind)]
    kind: ScenarioKind,
    #[arg(long = "class", default_value = "sphere", value_parser = parse_class)]
    class: ObjectClass,
    #[arg(long, default_value_t = 90)]
    frames: usize,
    /// Pixels per frame, `vx,vy`.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    velocity: Option<Point>,
    /// Centre at frame 0, `x,y`.
    #[arg(long, value_parser = parse_point)]
    start: Option<Point>,
    #[arg(long)]
    noise: Option<f64>,
    /// Wall box `x,y,w,h`.
    #[arg(long, value_parser = parse_bbox)]
    occluder: Option<BBox>,
    #[arg(long)]
    violation_frame: Option<usize>,
    #[arg(long)]
    confidence: Option<f64>,
    /// Number of events, with consecutive seeds starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    count: u64,
}

#[derive(Debug, clap::Args)]
struct ClassifyArgs {
    /// Trace files or directories of `.trace` files.
    inputs: Vec<PathBuf>,
    /// Score weights `alpha,beta,gamma`.
    #[arg(long, value_parser = parse_weights)]
    weights: Option<WeightConfig>,
    #[arg(long)]
    coverage_min: Option<f64>,
    /// `descriptor` or `mean-confidence`.
    #[arg(long, value_parser = parse_mode)]
    shape_constancy: Option<ShapeConstancyMode>,
}

#[derive(Debug, clap::Args)]
struct PlotArgs {
    /// Trace files or directories of `.trace` files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Centre coordinate on the vertical axis, `x` or `y`.
    #[arg(long, default_value = "x")]
    axis: Axis,
}

#[derive(Debug, Subcommand)]
enum KbAction {
    /// Print class statistics and exceptions.
    Show,
    /// Replace the knowledge base with an empty one.
    Reset,
    /// Set how many occurrences promote an exception to a rule.
    PromoteThreshold { threshold: u64 },
}

fn parse_kind(s: &str) -> Result<ScenarioKind, String> {
    s.parse()
}

fn parse_class(s: &str) -> Result<ObjectClass, String> {
    s.parse()
}

fn parse_floats(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let v = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if v.len() != n {
        return Err(format!(
            "expected {n} comma-separated numbers, got {}",
            v.len()
        ));
    }
    Ok(v)
}

fn parse_point(s: &str) -> Result<Point, String> {
    let v = parse_floats(s, 2)?;
    Ok(Point::new(v[0], v[1]))
}

fn parse_bbox(s: &str) -> Result<BBox, String> {
    let v = parse_floats(s, 4)?;
    Ok(BBox::new(v[0], v[1], v[2], v[3]))
}

fn parse_weights(s: &str) -> Result<WeightConfig, String> {
    let v = parse_floats(s, 3)?;
    WeightConfig::new(v[0], v[1], v[2]).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> Result<ShapeConstancyMode, String> {
    match s {
        "descriptor" => Ok(ShapeConstancyMode::Descriptor),
        "mean-confidence" | "mean_confidence" => Ok(ShapeConstancyMode::MeanConfidence),
        _ => Err(format!("unknown shape constancy mode `{s}`")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let mut flags = Overrides {
        seed: cli.seed,
        kb: cli.kb,
        out: cli.out,
        ..Overrides::default()
    };
    if let Command::Classify(args) = &cli.command {
        flags.weights = args.weights;
        flags.occlusion_coverage_min = args.coverage_min;
        flags.shape_constancy = args.shape_constancy;
    }
    let cfg = RunConfig::resolve(cli.config.as_deref(), &flags)?;

    match cli.command {
        Command::Generate(args) => cmd_generate(&args, &cfg),
        Command::Classify(args) => cmd_classify(&args.inputs, &cfg),
        Command::Plot(args) => cmd_plot(&args, &cfg),
        Command::Kb { action } => cmd_kb(&action, &cfg),
    }
}

fn cmd_generate(args: &GenerateArgs, cfg: &RunConfig) -> Result<u8> {
    let mut written = Vec::new();
    for i in 0..args.count {
        let seed = cfg.seed.wrapping_add(i);
        let mut spec = ScenarioSpec::new(args.kind, args.class, args.frames, seed);
        if let Some(v) = args.velocity {
            spec.velocity = v;
        }
        if let Some(s) = args.start {
            spec.start = s;
        }
        if args.kind == ScenarioKind::PossibleOccluded {
            spec.occluder = Some(default_occluder(
                spec.start,
                spec.velocity,
                spec.frame_count,
            ));
        }
        if let Some(o) = args.occluder {
            spec.occluder = Some(o);
        }
        if let Some(n) = args.noise {
            spec.noise_sigma = n;
        }
        if let Some(c) = args.confidence {
            spec.confidence = c;
        }
        spec.violation_frame = args.violation_frame;

        let trace =
            generate_event(&spec).with_context(|| format!("scenario {}", spec.event_id()))?;
        written.push(trace);
    }

    fs::create_dir_all(&cfg.paths.out)
        .with_context(|| format!("creating {}", cfg.paths.out.display()))?;
    for trace in &written {
        let path = cfg
            .paths
            .out
            .join(format!("{}.{TRACE_EXT}", plot::file_stem(&trace.event_id)));
        let mut w = BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        curio_core::ingest::write_trace(trace, &mut w)?;
        w.flush()?;
        println!("{}", trace.event_id);
    }
    Ok(0)
}

/// Expands directories to their `.trace` files in name order.
fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()
                .with_context(|| format!("reading {}", p.display()))?;
            found.retain(|f| f.extension().is_some_and(|e| e == TRACE_EXT));
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Parses one trace file. I/O failures are fatal; malformed content is a
/// per-event failure.
fn read_trace(path: &Path) -> Result<Result<EventTrace, IngestError>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    match parse_trace(BufReader::new(file)) {
        Err(IngestError::Io(e)) => Err(e).with_context(|| format!("reading {}", path.display())),
        other => Ok(other),
    }
}

fn load_or_fresh(path: &Path, threshold: u64) -> Result<KnowledgeBase> {
    if path.exists() {
        load_kb_file(path).with_context(|| format!("loading knowledge base {}", path.display()))
    } else {
        Ok(KnowledgeBase::new(threshold))
    }
}

fn cmd_classify(inputs: &[PathBuf], cfg: &RunConfig) -> Result<u8> {
    let inputs = match (inputs.is_empty(), &cfg.paths.input) {
        (true, Some(p)) => vec![p.clone()],
        _ => inputs.to_vec(),
    };
    let files = expand_inputs(&inputs)?;
    let mut kb = load_or_fresh(&cfg.paths.kb, cfg.promotion_threshold)?;
    if files.is_empty() {
        return Ok(0);
    }

    let mut parsed = Vec::with_capacity(files.len());
    for f in &files {
        parsed.push(read_trace(f)?);
    }

    let mut failures = 0usize;
    let mut traces = Vec::new();
    for (path, r) in files.iter().zip(parsed) {
        match r {
            Ok(t) => traces.push((path, t)),
            Err(e) => {
                failures += 1;
                eprintln!("error: {}: {:#}", path.display(), anyhow::Error::from(e));
            }
        }
    }

    let batch: Vec<EventTrace> = traces.iter().map(|(_, t)| t.clone()).collect();
    let results = process_stream(&batch, &mut kb, &cfg.pipeline());

    fs::create_dir_all(&cfg.paths.out)
        .with_context(|| format!("creating {}", cfg.paths.out.display()))?;
    let report_path = cfg.paths.out.join(VERDICTS_FILE);
    let mut report = BufWriter::new(
        File::create(&report_path)
            .with_context(|| format!("creating {}", report_path.display()))?,
    );
    for ((path, _), r) in traces.iter().zip(results) {
        match r {
            Ok(v) => {
                serde_json::to_writer(&mut report, &v)?;
                report.write_all(b"\n")?;
                let matched = match v.ground_truth_match {
                    Some(true) => "match",
                    Some(false) => "mismatch",
                    None => "unlabelled",
                };
                println!("{}\t{}\t{matched}", v.event_id, v.flag);
            }
            Err(e) => {
                failures += 1;
                eprintln!("error: {}: {:#}", path.display(), anyhow::Error::from(e));
            }
        }
    }
    report.flush()?;

    save_kb_file(&kb, &cfg.paths.kb)
        .with_context(|| format!("saving knowledge base {}", cfg.paths.kb.display()))?;
    Ok(if failures > 0 { 2 } else { 0 })
}

fn cmd_plot(args: &PlotArgs, cfg: &RunConfig) -> Result<u8> {
    let pipeline = cfg.pipeline();
    let files = expand_inputs(&args.inputs)?;
    if files.is_empty() {
        bail!("no trace files found");
    }
    fs::create_dir_all(&cfg.paths.out)
        .with_context(|| format!("creating {}", cfg.paths.out.display()))?;
    for f in &files {
        let trace = read_trace(f)?.with_context(|| format!("parsing {}", f.display()))?;
        let tracks = track_event(&trace, &pipeline.tracker, &pipeline.scene)
            .with_context(|| format!("tracking {}", f.display()))?;
        let objects: Vec<_> = tracks.iter().filter(|t| !t.occluder).collect();
        let discs = detect_discontinuities(&tracks, &pipeline.tracker);

        let stem = plot::file_stem(&trace.event_id);
        for t in &objects {
            let path = cfg
                .paths
                .out
                .join(format!("{stem}-track{}.csv", t.track_id));
            fs::write(&path, t.to_csv()).with_context(|| format!("writing {}", path.display()))?;
        }
        let svg = plot::render_svg(
            &trace.event_id,
            trace.frame_count,
            &objects,
            &discs,
            args.axis,
        );
        let path = cfg.paths.out.join(format!("{stem}.svg"));
        fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(0)
}

fn cmd_kb(action: &KbAction, cfg: &RunConfig) -> Result<u8> {
    let path = &cfg.paths.kb;
    match action {
        KbAction::Show => {
            if !path.exists() {
                bail!("knowledge base {} does not exist", path.display());
            }
            let kb = load_kb_file(path)
                .with_context(|| format!("loading knowledge base {}", path.display()))?;
            print!("{}", describe_kb(&kb));
        }
        KbAction::Reset => {
            // A readable KB keeps its threshold; a missing or corrupt one
            // gets the configured value.
            let threshold = load_kb_file(path)
                .map(|kb| kb.promotion_threshold())
                .unwrap_or(cfg.promotion_threshold);
            save_kb_file(&KnowledgeBase::new(threshold), path)
                .with_context(|| format!("saving knowledge base {}", path.display()))?;
            println!("reset {}", path.display());
        }
        KbAction::PromoteThreshold { threshold } => {
            if *threshold == 0 {
                bail!("promotion threshold must be at least 1");
            }
            let mut kb = load_or_fresh(path, cfg.promotion_threshold)?;
            kb.set_promotion_threshold(*threshold);
            save_kb_file(&kb, path)
                .with_context(|| format!("saving knowledge base {}", path.display()))?;
            println!("promotion threshold {threshold}");
        }
    }
    Ok(0)
}

fn describe_kb(kb: &KnowledgeBase) -> String {
    let stats = kb.class_stats();
    let mut out = format!(
        "{} classes, {} exceptions (promotion threshold {})\n",
        stats.len(),
        kb.exceptions().len(),
        kb.promotion_threshold()
    );
    for s in &stats {
        out.push_str(&format!(
            "class {:<6} mean {:.6} count {}\n",
            s.class.to_string(),
            s.mean,
            s.count
        ));
    }
    for e in kb.exceptions() {
        let kinds: Vec<String> = e
            .signature
            .violations
            .iter()
            .map(ToString::to_string)
            .collect();
        out.push_str(&format!(
            "exception [{}] occluder={} agent={} truth={} occurrences {}{}\n",
            kinds.join(","),
            e.signature.occluder_present,
            e.signature.verdict_agent,
            e.signature.verdict_ground_truth,
            e.occurrences,
            if e.promoted { " promoted" } else { "" }
        ));
    }
    out
}
