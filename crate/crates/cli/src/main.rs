use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use salmontrack::eval::{
    count_events, display_tenth, endpoint_link_rate, sweep_average, EventReport, DEFAULT_ENDPOINT_IOU,
    DEFAULT_MATCH_IOU,
};
use salmontrack::io;
use salmontrack::model::{ModuleSet, TrackerConfig};
use salmontrack::pipeline::{score_series, series_truth, tail_series, track, SweepCell, TailConfig, TruthExtrema, Variant};
use salmontrack::simulator::{self, Scenario, ScenarioMeta};
use salmontrack::tailbeat::{QualityFilter, RepresentationRegistry, DEFAULT_POLYORDER, DEFAULT_WINDOW};
use salmontrack::tracker::TrackerRegistry;

mod manifest;
mod plot;

use manifest::Manifest;

/// Caps the worker threads used by `sweep`.
const THREADS_ENV: &str = "SALMONTRACK_THREADS";

#[derive(Parser, Debug)]
#[command(name = "salmontrack", version, about = "Fish and body-part tracking, evaluation and tail-beat analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic scene to detection and ground-truth files.
    Simulate(SimulateArgs),
    /// Run a tracker over a detection file.
    Track(TrackArgs),
    /// Count identity events and endpoint links for a track file.
    Eval(EvalArgs),
    /// Tail-state series, extrema and wavelengths from a track file.
    Tailbeat(TailbeatArgs),
    /// Evaluate tracker variants over the threshold and hidden-length grid.
    Sweep(SweepArgs),
    /// Re-run the command recorded in a manifest.
    Replay { manifest: PathBuf },
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum ScenarioKind {
    Crowded,
    Turning,
    Tailbeat,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "crowded")]
    scenario: ScenarioKind,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
    /// Override the box jitter standard deviation (pixels).
    #[arg(long)]
    jitter: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct TrackerArgs {
    #[arg(long, default_value = "bct")]
    tracker: String,
    #[arg(long, default_value_t = 0.35)]
    iou_threshold: f64,
    #[arg(long, default_value_t = 30)]
    hidden_length: u32,
    /// Comma list of turn, bpdis, nobp, bpiou (or all, none).
    #[arg(long, default_value = "")]
    modules: String,
    /// Image size as WIDTHxHEIGHT; enables the border test of the turning rule.
    #[arg(long, value_parser = parse_size)]
    image_size: Option<(f64, f64)>,
}

impl TrackerArgs {
    fn config(&self) -> Result<TrackerConfig> {
        let cfg = TrackerConfig {
            iou_threshold: self.iou_threshold,
            hidden_length: self.hidden_length,
            modules: ModuleSet::parse(&self.modules)?,
            image_size: self.image_size,
            ..TrackerConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct TrackArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    tracker: TrackerArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Track file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Scenario sidecar with endpoint annotations.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MATCH_IOU)]
    match_iou: f64,
    #[arg(long, default_value_t = DEFAULT_ENDPOINT_IOU)]
    endpoint_iou: f64,
    /// JSON report.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct TailbeatArgs {
    /// Track file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "tip")]
    representation: String,
    /// Series CSV.
    #[arg(long)]
    output: PathBuf,
    /// Fixed extrema prominence; without it each series is tuned to the
    /// ground-truth extrema count from --scenario and --gt.
    #[arg(long)]
    prominence: Option<f64>,
    #[arg(long, requires = "gt")]
    scenario: Option<PathBuf>,
    #[arg(long, requires = "scenario")]
    gt: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = DEFAULT_POLYORDER)]
    polyorder: usize,
    #[arg(long, default_value_t = 200.0)]
    min_diagonal: f64,
    #[arg(long, default_value_t = 50)]
    min_length: usize,
    /// JSON summary with wavelengths and, given ground truth, extrema scores.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Detection file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Averaged table.
    #[arg(long)]
    output: PathBuf,
    /// Variants such as bt, bct, bct:turn, bct:turn+bpdis, bct:all.
    #[arg(long, value_delimiter = ',')]
    variants: Vec<Variant>,
    #[arg(long, value_delimiter = ',', default_values_t = TrackerConfig::IOU_GRID)]
    thresholds: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = TrackerConfig::HIDDEN_LENGTH_GRID)]
    hidden_lengths: Vec<u32>,
    #[arg(long, default_value_t = DEFAULT_MATCH_IOU)]
    match_iou: f64,
    #[arg(long, value_parser = parse_size)]
    image_size: Option<(f64, f64)>,
    /// Per-cell results before averaging.
    #[arg(long)]
    cells: Option<PathBuf>,
    /// SVG line plot of events against the IoU threshold.
    #[arg(long)]
    plot: Option<PathBuf>,
}

fn parse_size(s: &str) -> std::result::Result<(f64, f64), String> {
    let (w, h) = s.split_once('x').ok_or("expected WIDTHxHEIGHT")?;
    let w: f64 = w.parse().map_err(|_| format!("bad width '{w}'"))?;
    let h: f64 = h.parse().map_err(|_| format!("bad height '{h}'"))?;
    if !(w > 0.0 && h > 0.0) {
        return Err("image size must be positive".into());
    }
    Ok((w, h))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

/// Parses a CSV file, naming it in any error.
fn load<T>(path: &Path, read: fn(BufReader<File>) -> salmontrack::Result<Vec<T>>) -> Result<Vec<T>> {
    read(open(path)?).with_context(|| path.display().to_string())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn read_meta(path: &Path) -> Result<ScenarioMeta> {
    serde_json::from_reader(open(path)?).with_context(|| format!("bad scenario file {}", path.display()))
}

fn simulate(a: &SimulateArgs, m: &mut Manifest) -> Result<()> {
    let mut scenario: Scenario = match a.scenario {
        ScenarioKind::Crowded => simulator::scenario_crowded(a.seed)?,
        ScenarioKind::Turning => simulator::scenario_turning(a.seed)?,
        ScenarioKind::Tailbeat => simulator::scenario_tailbeat(a.seed)?,
    };
    if let Some(j) = a.jitter {
        if !(j >= 0.0) {
            bail!("jitter must be non-negative");
        }
        scenario.config.noise.jitter_std = j;
    }
    let out = scenario.render();
    fs::create_dir_all(&a.output).with_context(|| format!("cannot create {}", a.output.display()))?;
    let det_path = a.output.join("detections.csv");
    let gt_path = a.output.join("gt.csv");
    let meta_path = a.output.join("scenario.json");
    io::write_detections(create(&det_path)?, &out.detections)?;
    io::write_gt(create(&gt_path)?, &out.gt)?;
    write_json(&meta_path, &scenario.meta())?;
    info!("{} detections, {} ground-truth boxes", out.detections.len(), out.gt.len());
    m.config = serde_json::to_value(&scenario.config)?;
    m.seed = Some(a.seed);
    m.outputs(&[&det_path, &gt_path, &meta_path]);
    Ok(())
}

fn track_cmd(a: &TrackArgs, m: &mut Manifest) -> Result<()> {
    let cfg = a.tracker.config()?;
    let dets = load(&a.input, io::read_detections)?;
    let run = track(&TrackerRegistry::default(), &a.tracker.tracker, &cfg, &dets)?;
    io::write_tracks(create(&a.output)?, &run.records)?;
    info!("{} records, {} module events", run.records.len(), run.events.len());
    m.config = serde_json::json!({ "tracker": a.tracker.tracker, "config": cfg });
    m.inputs(&[&a.input]);
    m.outputs(&[&a.output]);
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    match_iou: f64,
    events: EventReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    endpoints: Option<std::collections::BTreeMap<String, salmontrack::eval::LinkCount>>,
}

fn eval_cmd(a: &EvalArgs, m: &mut Manifest) -> Result<()> {
    let gt = load(&a.gt, io::read_gt)?;
    let hyp = load(&a.input, io::read_tracks)?;
    let events = count_events(&gt, &hyp, a.match_iou)?;
    let mut inputs = vec![a.input.as_path(), a.gt.as_path()];
    let endpoints = match &a.scenario {
        Some(p) => {
            inputs.push(p);
            Some(endpoint_link_rate(&read_meta(p)?.endpoints, &hyp, a.endpoint_iou))
        }
        None => None,
    };
    write_json(
        &a.output,
        &EvalReport {
            match_iou: a.match_iou,
            events,
            endpoints,
        },
    )?;
    m.config = serde_json::json!({ "match_iou": a.match_iou, "endpoint_iou": a.endpoint_iou });
    m.inputs(&inputs);
    m.outputs(&[&a.output]);
    Ok(())
}

#[derive(Serialize)]
struct TailSummary {
    representation: String,
    series: Vec<SeriesSummary>,
    median_wavelength: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    scores: Vec<salmontrack::eval::ExtremaScore>,
}

#[derive(Serialize)]
struct SeriesSummary {
    unit_id: u64,
    first_frame: u32,
    last_frame: u32,
    extrema: usize,
    wavelengths: Vec<f64>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn tailbeat_cmd(a: &TailbeatArgs, m: &mut Manifest) -> Result<()> {
    let extractor = RepresentationRegistry::default().create(&a.representation)?;
    let records = load(&a.input, io::read_tracks)?;
    let cfg = TailConfig {
        window: a.window,
        polyorder: a.polyorder,
        filter: QualityFilter {
            min_diagonal: a.min_diagonal,
            min_length: a.min_length,
            ..QualityFilter::default()
        },
        prominence: a.prominence,
    };
    let mut inputs = vec![a.input.as_path()];
    let (truth, gt) = match (&a.scenario, &a.gt) {
        (Some(s), Some(g)) => {
            inputs.extend([s.as_path(), g.as_path()]);
            let meta = read_meta(s)?;
            let truth: TruthExtrema = meta
                .fish
                .iter()
                .map(|f| (f.params.fish_id, f.tail_extrema.iter().map(|e| e.0).collect()))
                .collect();
            (truth, load(g, io::read_gt)?)
        }
        _ if a.prominence.is_none() => bail!("give --prominence, or --scenario and --gt to tune it"),
        _ => (TruthExtrema::new(), Vec::new()),
    };
    let truth_of = series_truth(&gt, &records, &truth);
    let series = tail_series(&records, extractor.as_ref(), &cfg, |s| truth_of(s).map(|t| t.len()))?;
    io::write_series(create(&a.output)?, &io::series_rows(&series))?;
    info!("{} series", series.len());

    let mut outputs = vec![a.output.as_path()];
    if let Some(path) = &a.summary {
        let summary = TailSummary {
            representation: a.representation.clone(),
            median_wavelength: median(series.iter().flat_map(|s| s.wavelengths()).collect()),
            series: series
                .iter()
                .map(|s| SeriesSummary {
                    unit_id: s.unit_id,
                    first_frame: s.frames[0],
                    last_frame: *s.frames.last().unwrap_or(&s.frames[0]),
                    extrema: s.maxima.len() + s.minima.len(),
                    wavelengths: s.wavelengths(),
                })
                .collect(),
            scores: if truth.is_empty() {
                Vec::new()
            } else {
                score_series(&series, &truth_of, &[1, 2, 3, 4])
            },
        };
        write_json(path, &summary)?;
        outputs.push(path);
    }
    m.config = serde_json::json!({
        "representation": a.representation,
        "window": a.window,
        "polyorder": a.polyorder,
        "min_diagonal": a.min_diagonal,
        "min_length": a.min_length,
        "prominence": a.prominence,
    });
    m.inputs(&inputs);
    m.outputs(&outputs);
    Ok(())
}

fn check_grid(a: &SweepArgs) -> Result<()> {
    if a.thresholds.is_empty() || a.hidden_lengths.is_empty() {
        bail!("empty sweep grid");
    }
    for (i, t) in a.thresholds.iter().enumerate() {
        if !(*t > 0.0 && *t <= 1.0) {
            bail!("threshold {t} outside (0, 1]");
        }
        if a.thresholds[..i].contains(t) {
            bail!("threshold {t} listed twice");
        }
    }
    for (i, h) in a.hidden_lengths.iter().enumerate() {
        if *h == 0 || a.hidden_lengths[..i].contains(h) {
            bail!("bad or repeated hidden length {h}");
        }
    }
    Ok(())
}

fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => bail!("{THREADS_ENV} must be a positive integer, got '{v}'"),
        },
        Err(_) => Ok(None),
    }
}

fn sweep_cmd(a: &SweepArgs, m: &mut Manifest) -> Result<()> {
    check_grid(a)?;
    let variants = if a.variants.is_empty() {
        Variant::ablation_set()
    } else {
        a.variants.clone()
    };
    let registry = TrackerRegistry::default();
    for v in &variants {
        registry.create(&v.tracker, &TrackerConfig::default())?;
    }
    let base = TrackerConfig {
        image_size: a.image_size,
        ..TrackerConfig::default()
    };
    let dets = load(&a.input, io::read_detections)?;
    let gt = load(&a.gt, io::read_gt)?;
    let cells = SweepCell::grid(&variants, &a.thresholds, &a.hidden_lengths);

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        pool = pool.num_threads(n);
    }
    let results: Vec<EventReport> = pool.build()?.install(|| {
        cells
            .par_iter()
            .map(|c| c.run(&registry, &base, &dets, &gt, a.match_iou))
            .collect::<salmontrack::Result<Vec<_>>>()
    })?;

    let mut table = Vec::new();
    for v in &variants {
        for &hl in &a.hidden_lengths {
            let rows: Vec<(f64, Vec<f64>)> = cells
                .iter()
                .zip(&results)
                .filter(|(c, _)| &c.variant == v && c.hidden_length == hl)
                .map(|(c, r)| (c.iou_threshold, r.row().to_vec()))
                .collect();
            table.push((v.to_string(), hl, sweep_average(&rows, &a.thresholds)?));
        }
    }

    let mut w = csv::Writer::from_writer(create(&a.output)?);
    let mut header = vec!["variant", "hidden_length"];
    header.extend(EventReport::COLUMNS);
    w.write_record(&header)?;
    for (v, hl, avg) in &table {
        let mut rec = vec![v.clone(), hl.to_string()];
        rec.extend(avg.iter().map(|x| display_tenth(*x)));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut outputs = vec![a.output.as_path()];
    if let Some(path) = &a.cells {
        let mut w = csv::Writer::from_writer(create(path)?);
        let mut header = vec!["variant", "hidden_length", "iou_threshold"];
        header.extend(EventReport::COLUMNS);
        w.write_record(&header)?;
        for (c, r) in cells.iter().zip(&results) {
            let mut rec = vec![c.variant.to_string(), c.hidden_length.to_string(), c.iou_threshold.to_string()];
            rec.extend(r.row().iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        outputs.push(path);
    }
    if let Some(path) = &a.plot {
        let series: Vec<plot::Line> = variants
            .iter()
            .flat_map(|v| a.hidden_lengths.iter().map(move |&hl| (v, hl)))
            .map(|(v, hl)| plot::Line {
                label: format!("{v} hl{hl}"),
                points: cells
                    .iter()
                    .zip(&results)
                    .filter(|(c, _)| &c.variant == v && c.hidden_length == hl)
                    .map(|(c, r)| (c.iou_threshold, r.row()))
                    .collect(),
            })
            .collect();
        fs::write(path, plot::render(&series, &EventReport::COLUMNS))
            .with_context(|| format!("cannot write {}", path.display()))?;
        outputs.push(path);
    }

    m.config = serde_json::json!({
        "variants": variants.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
        "thresholds": a.thresholds,
        "hidden_lengths": a.hidden_lengths,
        "match_iou": a.match_iou,
        "tracker_base": base,
    });
    m.inputs(&[&a.input, &a.gt]);
    m.outputs(&outputs);
    Ok(())
}

fn manifest_path(cmd: &Command) -> Option<PathBuf> {
    let beside = |p: &Path| {
        let mut s = p.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    };
    match cmd {
        Command::Simulate(a) => Some(a.output.join("manifest.json")),
        Command::Track(a) => Some(beside(&a.output)),
        Command::Eval(a) => Some(beside(&a.output)),
        Command::Tailbeat(a) => Some(beside(&a.output)),
        Command::Sweep(a) => Some(beside(&a.output)),
        Command::Replay { .. } => None,
    }
}

fn execute(cli: Cli, argv: Vec<String>) -> Result<()> {
    let name = match &cli.command {
        Command::Simulate(_) => "simulate",
        Command::Track(_) => "track",
        Command::Eval(_) => "eval",
        Command::Tailbeat(_) => "tailbeat",
        Command::Sweep(_) => "sweep",
        Command::Replay { manifest } => {
            let recorded = Manifest::load(manifest)?;
            let mut full = vec!["salmontrack".to_string()];
            full.extend(recorded.argv.iter().cloned());
            let cli = Cli::try_parse_from(&full)?;
            if matches!(cli.command, Command::Replay { .. }) {
                bail!("a manifest cannot record a replay");
            }
            return execute(cli, recorded.argv);
        }
    };
    let mut m = Manifest::new(name, argv);
    match &cli.command {
        Command::Simulate(a) => simulate(a, &mut m)?,
        Command::Track(a) => track_cmd(a, &mut m)?,
        Command::Eval(a) => eval_cmd(a, &mut m)?,
        Command::Tailbeat(a) => tailbeat_cmd(a, &mut m)?,
        Command::Sweep(a) => sweep_cmd(a, &mut m)?,
        Command::Replay { .. } => unreachable!(),
    }
    if let Some(path) = manifest_path(&cli.command) {
        m.save(&path)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match execute(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
