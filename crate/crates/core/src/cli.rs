//! Command-line surface.
//!
//! Exit codes: 0 on success, 1 on I/O or system failure, 2 on validation or
//! domain errors. Errors print as `error: <Name>: <details>`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::adversarial::{
    self, gan_losses, gradcheck, tiny_scenario, AdversarialError, ClipStarts, DiscriminatorConfig,
    DiscriminatorWeights, GanBatch, LossConfig, Mel, SampleConditions, Scenario, Scores, StackConfig,
    DEFAULT_CONDITION_DIM, DEFAULT_MEL_BINS, DEFAULT_WINDOWS,
};
use crate::control::{self, build_control, Control, ControlError, ControlSpec};
use crate::encoder::{EncoderError, EncoderWeights, DEFAULT_BRANCH_WIDTH, DEFAULT_EMOTIONS};
use crate::ingest::{self, AvdRecord, Dataset, IngestError};
use crate::quantile::{quantile_sorted, sorted_copy};
use crate::rng::SplitMix64;
use crate::sphere::{self, FenceScope, Octant, SphereError, SphereModel, NUM_OCTANTS};
use crate::synth;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub name: &'static str,
    pub message: String,
}

impl CliError {
    fn domain(name: &'static str, message: impl Into<String>) -> Self {
        Self { code: 2, name, message: message.into() }
    }

    fn io(path: &Path, e: &std::io::Error) -> Self {
        match e.kind() {
            std::io::ErrorKind::NotFound => Self { code: 1, name: "MissingFile", message: path.display().to_string() },
            std::io::ErrorKind::InvalidData => Self::domain("MalformedInput", format!("{}: {e}", path.display())),
            _ => Self { code: 1, name: "Io", message: format!("{}: {e}", path.display()) },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.name, self.message)
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        let code = match e {
            IngestError::MissingFile(_) | IngestError::Io(_) => 1,
            _ => 2,
        };
        Self { code, name: e.name(), message: e.to_string() }
    }
}

macro_rules! domain_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::domain(e.name(), e.to_string())
            }
        }
    )*};
}
domain_from!(SphereError, EncoderError, ControlError, AdversarialError);

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "emosphere", version, about = "Spherical emotion conditioning toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the neutral center and intensity fences from pseudo-labels.
    Fit(FitArgs),
    /// Map pseudo-labels to (r, theta, phi, r_norm, octant) rows.
    Transform(TransformArgs),
    /// Octant histograms and intensity quartiles of transformed rows.
    Stats(StatsArgs),
    /// Compute an emotion embedding from a control spec or a transformed row.
    Embed(EmbedArgs),
    /// Evaluate the dual conditional least-squares adversarial losses.
    Ganloss(GanlossArgs),
    /// Compare analytic loss gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Write a seeded synthetic pseudo-label dataset.
    Synth(SynthArgs),
    /// Write seeded encoder weights.
    InitEncoder(InitEncoderArgs),
    /// Write seeded discriminator weights.
    InitDisc(InitDiscArgs),
    /// Write a seeded mel/condition/weights fixture set for `ganloss`.
    SynthGan(SynthGanArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum ModeArg {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum ScopeArg {
    #[default]
    #[value(name = "per_emotion")]
    PerEmotion,
    Global,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    #[default]
    On,
    Off,
}

impl Toggle {
    fn enabled(self) -> bool {
        self == Toggle::On
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Pseudo-label file (CSV or JSONL).
    pub records: PathBuf,
    /// Input encoding [default: from the file extension, csv otherwise]
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// strict rejects coordinates outside [-0.25, 1.25]; lenient clamps them.
    #[arg(long, value_enum, default_value_t = ModeArg::Strict)]
    pub mode: ModeArg,
}

impl InputArgs {
    fn load(&self) -> CliResult<ingest::Ingested> {
        let format = match self.format {
            Some(FormatArg::Csv) => ingest::Format::Csv,
            Some(FormatArg::Jsonl) => ingest::Format::Jsonl,
            None => ingest::Format::from_path(&self.records),
        };
        let mode = match self.mode {
            ModeArg::Strict => ingest::Mode::Strict,
            ModeArg::Lenient => ingest::Mode::Lenient,
        };
        Ok(ingest::parse_records(&self.records, format, mode)?)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = ScopeArg::PerEmotion)]
    pub fence_scope: ScopeArg,
    /// Where to write the model JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Model written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// Where to write the JSONL rows.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// JSONL written by `transform`.
    pub transformed: PathBuf,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
    /// Also write the JSON report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["control", "transformed"])))]
#[command(group(clap::ArgGroup::new("weights_source").required(true).args(["weights", "seed"])))]
pub struct EmbedArgs {
    /// Control spec JSON.
    #[arg(long)]
    pub control: Option<PathBuf>,
    /// Transformed JSONL; use together with --utt.
    #[arg(long, requires = "utt")]
    pub transformed: Option<PathBuf>,
    /// utt_id of the transformed row to embed.
    #[arg(long)]
    pub utt: Option<String>,
    /// Encoder weights JSON.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Use seeded encoder weights instead of a weights file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Branch width P for seeded weights (output width is 2P).
    #[arg(long, default_value_t = DEFAULT_BRANCH_WIDTH)]
    pub width: usize,
    /// Emotion classes for seeded weights.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_EMOTIONS.map(String::from))]
    pub emotions: Vec<String>,
    /// Where to write the embedding JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GanInputs {
    /// Directory of real .melf files.
    #[arg(long)]
    pub real: Option<PathBuf>,
    /// Directory of generated .melf files with the same file names.
    #[arg(long)]
    pub fake: Option<PathBuf>,
    /// Condition JSON: {"<file stem>": {"speaker": [...], "emotion": [...]}, ...}
    #[arg(long)]
    pub conds: Option<PathBuf>,
    /// Discriminator weights JSON.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Seed for clip offsets.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Clip window lengths in frames.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_WINDOWS)]
    pub windows: Vec<usize>,
    /// Include the unconditional stack as a third summand.
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    pub uncond_stack: Toggle,
}

#[derive(Debug, Args)]
pub struct GanlossArgs {
    #[command(flatten)]
    pub inputs: GanInputs,
    /// Replace every stack with the ideal discriminator (1 on real, 0 on generated).
    #[arg(long)]
    pub ideal_stub: bool,
    /// Write the losses JSON here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Fixture files; without them a seeded ~1,000 parameter scenario is used.
    #[command(flatten)]
    pub inputs: GanInputs,
    /// Central difference step.
    #[arg(long, default_value_t = adversarial::DEFAULT_STEP)]
    pub step: f64,
    /// Pass threshold on the maximum relative error.
    #[arg(long, default_value_t = adversarial::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Records per emotion.
    #[arg(long, default_value_t = 200)]
    pub per_emotion: usize,
    /// Output encoding [default: from the file extension, csv otherwise]
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InitEncoderArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Branch width P (output width is 2P).
    #[arg(long, default_value_t = DEFAULT_BRANCH_WIDTH)]
    pub width: usize,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_EMOTIONS.map(String::from))]
    pub emotions: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiscShapeArgs {
    #[arg(long, default_value_t = DEFAULT_MEL_BINS)]
    pub mel_bins: usize,
    /// Width of the speaker and emotion condition vectors.
    #[arg(long, default_value_t = DEFAULT_CONDITION_DIM)]
    pub cond_dim: usize,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_WINDOWS)]
    pub windows: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    pub uncond_stack: Toggle,
    /// Output channels of each conv layer.
    #[arg(long, value_delimiter = ',', default_values_t = [8usize, 16])]
    pub channels: Vec<usize>,
}

impl DiscShapeArgs {
    fn config(&self) -> DiscriminatorConfig {
        DiscriminatorConfig {
            mel_bins: self.mel_bins,
            cond_dim: self.cond_dim,
            windows: self.windows.clone(),
            uncond: self.uncond_stack.enabled(),
            stack: StackConfig { channels: self.channels.clone(), ..StackConfig::default() },
        }
    }
}

#[derive(Debug, Args)]
pub struct InitDiscArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub shape: DiscShapeArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthGanArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of utterances.
    #[arg(long, default_value_t = 4)]
    pub samples: usize,
    /// Frames per mel.
    #[arg(long, default_value_t = 128)]
    pub frames: usize,
    #[command(flatten)]
    pub shape: DiscShapeArgs,
    /// Output directory; receives real/, fake/, conds.json and disc.json.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let text = e.render().to_string();
            eprintln!("error: UsageError: {}", text.strip_prefix("error: ").unwrap_or(&text).trim_end());
            return 2;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Fit(a) => cmd_fit(&a),
        Command::Transform(a) => cmd_transform(&a),
        Command::Stats(a) => cmd_stats(&a),
        Command::Embed(a) => cmd_embed(&a),
        Command::Ganloss(a) => cmd_ganloss(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::InitEncoder(a) => cmd_init_encoder(&a),
        Command::InitDisc(a) => cmd_init_disc(&a),
        Command::SynthGan(a) => cmd_synth_gan(&a),
    }
}

/// Writes to standard output, ignoring a closed pipe.
fn say(text: impl fmt::Display) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, &e))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, &e))
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, &e))
}

pub fn cmd_fit(a: &FitArgs) -> CliResult<()> {
    let ingested = a.input.load()?;
    let scope = match a.fence_scope {
        ScopeArg::PerEmotion => FenceScope::PerEmotion,
        ScopeArg::Global => FenceScope::Global,
    };
    let model = sphere::fit(&ingested.dataset, scope)?;
    let mut json = model.to_json();
    json.push('\n');
    write_file(&a.out, json.as_bytes())?;

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &ingested.dataset.records {
        *counts.entry(r.emotion.as_str()).or_default() += 1;
    }
    let [m0, m1, m2] = model.center.0;
    say(format_args!("records: {}", ingested.dataset.len()));
    if ingested.report.clamped_values > 0 {
        say(format_args!(
            "warning: clamped {} values in {} records",
            ingested.report.clamped_values, ingested.report.clamped_records
        ));
    }
    say(format_args!("neutral center: [{m0:.6}, {m1:.6}, {m2:.6}]"));
    say(format_args!("fence scope: {}", model.fence_scope));
    for (emotion, n) in &counts {
        say(format_args!("  {emotion:<12} {n:>7} records"));
    }
    for (group, f) in &model.fences {
        say(format_args!("  fences {group:<12} lo = {:.6}  hi = {:.6}", f.lo, f.hi));
    }
    Ok(())
}

/// One row of `transform` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedRow {
    pub utt_id: String,
    pub speaker_id: String,
    pub emotion: String,
    pub r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub octant: Option<Octant>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

/// Transforms one record; points at the neutral center become flagged rows.
pub fn transform_row(rec: &AvdRecord, model: &SphereModel) -> Result<TransformedRow, SphereError> {
    let base = |r: f64| TransformedRow {
        utt_id: rec.utt_id.clone(),
        speaker_id: rec.speaker_id.clone(),
        emotion: rec.emotion.clone(),
        r,
        theta: None,
        phi: None,
        r_norm: None,
        octant: None,
        degenerate: false,
    };
    match sphere::transform(rec, model) {
        Ok(s) => Ok(TransformedRow { theta: Some(s.theta), phi: Some(s.phi), r_norm: s.r_norm, octant: s.octant, ..base(s.r) }),
        Err(SphereError::DegenerateRadius { r, .. }) => Ok(TransformedRow { degenerate: true, ..base(r) }),
        Err(e) => Err(e),
    }
}

pub fn cmd_transform(a: &TransformArgs) -> CliResult<()> {
    let model = SphereModel::from_json(&read_text(&a.model)?)?;
    let ingested = a.input.load()?;
    let mut out = String::new();
    let mut degenerate = 0;
    for rec in &ingested.dataset.records {
        let row = transform_row(rec, &model)
            .map_err(|e| CliError::domain(e.name(), format!("record {:?}: {e}", rec.utt_id)))?;
        degenerate += usize::from(row.degenerate);
        out.push_str(&serde_json::to_string(&row).expect("row serializes"));
        out.push('\n');
    }
    write_file(&a.out, out.as_bytes())?;
    say(format_args!("transformed: {} rows ({} degenerate)", ingested.dataset.len(), degenerate));
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub rows: usize,
    pub degenerate: usize,
    pub octants: [usize; NUM_OCTANTS],
    /// Q1, median and Q3 of the normalized intensity.
    pub intensity_quartiles: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub total: GroupStats,
    pub emotions: BTreeMap<String, GroupStats>,
}

pub fn parse_transformed(text: &str) -> CliResult<Vec<TransformedRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |why: String| CliError::domain("MalformedRow", format!("line {}: {why}", i + 1));
        let row: TransformedRow = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if !row.degenerate && (row.theta.is_none() || row.phi.is_none() || row.r_norm.is_none() || row.octant.is_none()) {
            return Err(malformed("non-degenerate row lacks theta, phi, r_norm or octant".into()));
        }
        if let Some(v) = row.r_norm {
            if !(0.0..=1.0).contains(&v) {
                return Err(malformed(format!("r_norm {v} outside [0, 1]")));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::domain("EmptyDataset", "no transformed rows"));
    }
    Ok(rows)
}

pub fn stats_report(rows: &[TransformedRow]) -> StatsReport {
    fn group<'a>(rows: impl Iterator<Item = &'a TransformedRow>) -> GroupStats {
        let mut g = GroupStats { rows: 0, degenerate: 0, octants: [0; NUM_OCTANTS], intensity_quartiles: None };
        let mut intensities = Vec::new();
        for r in rows {
            g.rows += 1;
            if r.degenerate {
                g.degenerate += 1;
                continue;
            }
            if let (Some(o), Some(v)) = (r.octant, r.r_norm) {
                g.octants[o.id() as usize] += 1;
                intensities.push(v);
            }
        }
        if !intensities.is_empty() {
            let s = sorted_copy(&intensities);
            g.intensity_quartiles = Some([0.25, 0.5, 0.75].map(|p| quantile_sorted(&s, p)));
        }
        g
    }
    let labels: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.emotion.as_str()).collect();
    StatsReport {
        total: group(rows.iter()),
        emotions: labels
            .into_iter()
            .map(|e| (e.to_string(), group(rows.iter().filter(|r| r.emotion == e))))
            .collect(),
    }
}

pub fn cmd_stats(a: &StatsArgs) -> CliResult<()> {
    let rows = parse_transformed(&read_text(&a.transformed)?)?;
    let report = stats_report(&rows);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(out) = &a.out {
        write_file(out, format!("{json}\n").as_bytes())?;
    }
    if a.json {
        say(json);
        return Ok(());
    }
    let line = |name: &str, g: &GroupStats| {
        let q = g
            .intensity_quartiles
            .map_or_else(|| "-".to_string(), |[a, b, c]| format!("{a:.3}/{b:.3}/{c:.3}"));
        let hist = g.octants.iter().map(|c| format!("{c:>5}")).collect::<String>();
        format!("{name:<12} {:>6} {:>5} {hist}   {q}", g.rows, g.degenerate)
    };
    let header = (0..NUM_OCTANTS).map(|o| format!("{:>5}", format!("o{o}"))).collect::<String>();
    say(format_args!("{:<12} {:>6} {:>5} {header}   r_norm q1/med/q3", "emotion", "rows", "degen"));
    for (e, g) in &report.emotions {
        say(line(e, g));
    }
    say(line("(all)", &report.total));
    Ok(())
}

pub fn cmd_embed(a: &EmbedArgs) -> CliResult<()> {
    let weights = match (&a.weights, a.seed) {
        (Some(path), _) => EncoderWeights::from_json(&read_text(path)?)?,
        (None, Some(seed)) => {
            if a.width == 0 {
                return Err(CliError::domain("InvalidWeights", "--width must be positive"));
            }
            let labels: Vec<&str> = a.emotions.iter().map(String::as_str).collect();
            EncoderWeights::seeded(seed, a.width, &labels)
        }
        (None, None) => unreachable!("clap requires --weights or --seed"),
    };
    let control = if let Some(path) = &a.control {
        build_control(&ControlSpec::from_json(&read_text(path)?)?, &weights)?
    } else {
        let path = a.transformed.as_ref().expect("clap requires a source");
        let utt = a.utt.as_deref().expect("clap requires --utt");
        let rows = parse_transformed(&read_text(path)?)?;
        let row = rows
            .iter()
            .find(|r| r.utt_id == utt)
            .ok_or_else(|| CliError::domain("UnknownUtterance", format!("no row with utt_id {utt:?}")))?;
        match (row.octant, row.r_norm) {
            (Some(octant), Some(intensity)) => {
                let spec = ControlSpec {
                    emotion: row.emotion.clone(),
                    style: control::StyleSpec::Octant { octant: octant.id() as i64 },
                    intensity: control::IntensitySpec::Value(intensity),
                };
                build_control(&spec, &weights)?
            }
            _ => {
                return Err(CliError::domain(
                    "DegenerateRadius",
                    format!("row {utt:?} sits at the neutral center and has no style"),
                ))
            }
        }
    };
    write_embedding(&a.out, &control)?;
    say(format_args!(
        "embedding: {} values for {:?} (style [{:.6}, {:.6}, {:.6}], intensity {})",
        control.embedding.0.len(),
        control.emotion,
        control.style[0],
        control.style[1],
        control.style[2],
        control.intensity
    ));
    Ok(())
}

fn write_embedding(path: &Path, c: &Control) -> CliResult<()> {
    let json = serde_json::to_string_pretty(c).expect("control serializes");
    write_file(path, format!("{json}\n").as_bytes())
}

/// Condition file contents, keyed by mel file stem.
pub type ConditionFile = BTreeMap<String, SampleConditions>;

fn read_mel_dir(dir: &Path) -> CliResult<BTreeMap<String, (PathBuf, Mel)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, &e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, &e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("melf") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, &e))?;
        let mel = Mel::decode_melf(&bytes)
            .map_err(|e| CliError::domain(e.name(), format!("{}: {e}", path.display())))?;
        out.insert(stem, (path, mel));
    }
    if out.is_empty() {
        return Err(CliError::domain("EmptyDataset", format!("no .melf files in {}", dir.display())));
    }
    Ok(out)
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    p.as_deref().ok_or_else(|| CliError::domain("MissingArgument", format!("{flag} is required")))
}

fn load_batch(inputs: &GanInputs) -> CliResult<GanBatch> {
    let real = read_mel_dir(required(&inputs.real, "--real")?)?;
    let fake = read_mel_dir(required(&inputs.fake, "--fake")?)?;
    let conds: ConditionFile = serde_json::from_str(&read_text(required(&inputs.conds, "--conds")?)?)
        .map_err(|e| CliError::domain("MalformedConditions", e.to_string()))?;
    if !real.keys().eq(fake.keys()) {
        return Err(CliError::domain("BatchMismatch", "real and generated directories hold different file names"));
    }
    for &w in &inputs.windows {
        for (stem, (path, mel)) in real.iter().chain(&fake) {
            if w > mel.frames() {
                return Err(CliError::domain(
                    "WindowTooLong",
                    format!("{} ({stem}): window {w} exceeds {} frames", path.display(), mel.frames()),
                ));
            }
        }
    }
    let mut batch_conds = Vec::with_capacity(real.len());
    for stem in real.keys() {
        let c = conds
            .get(stem)
            .ok_or_else(|| CliError::domain("BatchMismatch", format!("no conditions for {stem:?}")))?;
        batch_conds.push(c.clone());
    }
    let real: Vec<Mel> = real.into_values().map(|(_, m)| m).collect();
    let fake: Vec<Mel> = fake.into_values().map(|(_, m)| m).collect();
    let mut rng = SplitMix64::new(inputs.seed);
    let starts = ClipStarts::draw(&mut rng, &real, &fake, &inputs.windows)?;
    Ok(GanBatch { real, fake, conds: batch_conds, starts })
}

fn loss_config(inputs: &GanInputs) -> CliResult<LossConfig> {
    if inputs.windows.is_empty() || inputs.windows.contains(&0) {
        return Err(CliError::domain("InvalidConfig", "windows must be positive"));
    }
    Ok(LossConfig { windows: inputs.windows.clone(), uncond: inputs.uncond_stack.enabled() })
}

#[derive(Debug, Serialize)]
struct LossOutput<'a> {
    seed: u64,
    windows: &'a [usize],
    uncond_stack: bool,
    ideal_stub: bool,
    clip_starts: &'a ClipStarts,
    #[serde(flatten)]
    losses: &'a adversarial::GanLosses,
}

pub fn cmd_ganloss(a: &GanlossArgs) -> CliResult<()> {
    let cfg = loss_config(&a.inputs)?;
    let batch = load_batch(&a.inputs)?;
    let losses = if a.ideal_stub {
        Scores::constant(&cfg, batch.len(), 1.0, 0.0).losses()
    } else {
        let w = DiscriminatorWeights::from_json(&read_text(required(&a.inputs.weights, "--weights")?)?)?;
        gan_losses(&batch, &w, &cfg)?
    };
    let out = LossOutput {
        seed: a.inputs.seed,
        windows: &cfg.windows,
        uncond_stack: cfg.uncond,
        ideal_stub: a.ideal_stub,
        clip_starts: &batch.starts,
        losses: &losses,
    };
    let json = serde_json::to_string_pretty(&out).expect("losses serialize");
    match &a.out {
        Some(path) => {
            write_file(path, format!("{json}\n").as_bytes())?;
            say(format_args!("loss_d = {}\nloss_g = {}", losses.loss_d, losses.loss_g));
        }
        None => say(json),
    }
    Ok(())
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> CliResult<()> {
    let i = &a.inputs;
    let from_files = i.real.is_some() || i.fake.is_some() || i.conds.is_some() || i.weights.is_some();
    let scenario = if from_files {
        Scenario {
            batch: load_batch(i)?,
            weights: DiscriminatorWeights::from_json(&read_text(required(&i.weights, "--weights")?)?)?,
            config: loss_config(i)?,
        }
    } else {
        tiny_scenario(i.seed)?
    };
    if !(a.step > 0.0 && a.step.is_finite()) {
        return Err(CliError::domain("InvalidConfig", "--step must be positive"));
    }
    let report = gradcheck(&scenario, a.step, a.threshold)?;
    if a.json {
        say(serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        say(format_args!(
            "discriminator parameters: {:>6}  max rel err {:.3e}",
            report.disc_params, report.disc_max_rel_err
        ));
        say(format_args!(
            "generated mel entries:    {:>6}  max rel err {:.3e}",
            report.input_entries, report.input_max_rel_err
        ));
        say(format_args!(
            "max relative error {:.3e} (threshold {:.0e}): {}",
            report.max_rel_err,
            report.threshold,
            if report.passed { "PASS" } else { "FAIL" }
        ));
    }
    if report.passed {
        Ok(())
    } else {
        Err(CliError::domain("GradCheckFailed", format!("max relative error {:e}", report.max_rel_err)))
    }
}

fn output_format(format: Option<FormatArg>, path: &Path) -> ingest::Format {
    match format {
        Some(FormatArg::Csv) => ingest::Format::Csv,
        Some(FormatArg::Jsonl) => ingest::Format::Jsonl,
        None => ingest::Format::from_path(path),
    }
}

pub fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    let ds: Dataset = synth::synthetic_dataset(a.seed, a.per_emotion);
    let mut buf = Vec::new();
    ingest::write_records(&ds, output_format(a.format, &a.out), &mut buf).map_err(|e| CliError::io(&a.out, &e))?;
    write_file(&a.out, &buf)?;
    say(format_args!("wrote {} records", ds.len()));
    Ok(())
}

pub fn cmd_init_encoder(a: &InitEncoderArgs) -> CliResult<()> {
    if a.width == 0 || a.emotions.is_empty() {
        return Err(CliError::domain("InvalidWeights", "--width and --emotions must be nonempty"));
    }
    let labels: Vec<&str> = a.emotions.iter().map(String::as_str).collect();
    let w = EncoderWeights::seeded(a.seed, a.width, &labels);
    w.validate()?;
    write_file(&a.out, format!("{}\n", w.to_json()).as_bytes())?;
    say(format_args!("encoder: P = {}, H = {}, {} emotions", w.dims.p, w.dims.h, w.emotion_index.len()));
    Ok(())
}

pub fn cmd_init_disc(a: &InitDiscArgs) -> CliResult<()> {
    let w = DiscriminatorWeights::seeded(a.seed, &a.shape.config())?;
    write_file(&a.out, format!("{}\n", w.to_json()).as_bytes())?;
    say(format_args!("discriminator: {} stacks, {} parameters", w.stacks.len(), w.param_count()));
    Ok(())
}

pub fn cmd_synth_gan(a: &SynthGanArgs) -> CliResult<()> {
    let cfg = a.shape.config();
    let w = DiscriminatorWeights::seeded(a.seed, &cfg)?;
    let mut rng = SplitMix64::new(a.seed.wrapping_add(1));
    let (real_dir, fake_dir) = (a.out.join("real"), a.out.join("fake"));
    create_dir(&real_dir)?;
    create_dir(&fake_dir)?;
    let mut conds = ConditionFile::new();
    for i in 0..a.samples {
        let stem = format!("utt{i:04}");
        for dir in [&real_dir, &fake_dir] {
            let data = rng.fill_uniform(cfg.mel_bins * a.frames, -4.0, 2.0);
            let mel = Mel::new(cfg.mel_bins, a.frames, data)?;
            write_file(&dir.join(format!("{stem}.melf")), &mel.encode_melf())?;
        }
        conds.insert(
            stem,
            SampleConditions {
                speaker: rng.fill_uniform(cfg.cond_dim, -1.0, 1.0),
                emotion: rng.fill_uniform(cfg.cond_dim, -1.0, 1.0),
            },
        );
    }
    write_file(&a.out.join("conds.json"), serde_json::to_string(&conds).expect("conds serialize").as_bytes())?;
    write_file(&a.out.join("disc.json"), w.to_json().as_bytes())?;
    say(format_args!("wrote {} sample pairs to {}", a.samples, a.out.display()));
    Ok(())
}
