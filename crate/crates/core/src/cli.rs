//! The `dwtreg` command line: `synth`, `register`, `compare` and `diff`.
//!
//! Exit codes are 0 on success, 1 on a runtime failure and 2 on a usage
//! error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fixtures::{write_fixture, FixtureSpec, Pattern};
use crate::image::{
    load_mask, load_pgm, overlay_diff, save_mask, save_pgm, save_ppm, Image2D, Remap,
};
use crate::pipeline::{
    register, Method, RegistrationConfig, RegistrationResult, SubbandObjective, RIGID_MASK,
};
use crate::transform::{AffineParams, CenteredParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "dwtreg",
    version,
    about = "Multimodal image registration on wavelet sub-bands"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic fixed/moving pair with known truth.
    Synth(SynthArgs),
    /// Register a moving image onto a fixed image.
    Register(RegisterArgs),
    /// Run all three methods over a set of pairs and write report.csv.
    Compare(CompareArgs),
    /// Render a grey/fuchsia difference overlay.
    Diff(DiffArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "phantom")]
    pub pattern: Pattern,
    #[arg(long)]
    pub size: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub tx: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub ty: f64,
    /// Rotation in degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub theta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sx: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sy: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub k: f64,
    /// identity, invert, negate-log or gamma:<value>.
    #[arg(long, default_value = "identity")]
    pub remap: Remap,
    /// Noise standard deviation as a fraction of the intensity range.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
}

/// Options shared by `register` and `compare`.
#[derive(Debug, Clone, Args)]
pub struct TuningArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    /// Optimize translation and rotation only.
    #[arg(long)]
    pub rigid: bool,
    /// Use only the LL band as the sub-band objective.
    #[arg(long)]
    pub ll_only: bool,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Histogram bins (capped per stage unless --fixed-bins).
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    /// Use the same bin count at every stage.
    #[arg(long)]
    pub fixed_bins: bool,
}

impl TuningArgs {
    pub fn config(&self, method: Method) -> RegistrationConfig {
        let mut config = RegistrationConfig::new(method).with_seed(self.seed);
        config.pyramid_levels = self.levels;
        config.metric.histogram_bins = self.bins;
        config.adaptive_bins = !self.fixed_bins;
        if self.rigid {
            config.parameter_mask = RIGID_MASK;
        }
        if self.ll_only {
            config.subband_objective = SubbandObjective::LlOnly;
        }
        if let Some(n) = self.max_iterations {
            config.optimizer.max_iterations = n;
        }
        config
    }
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[arg(long)]
    pub method: Method,
    pub fixed: PathBuf,
    pub moving: PathBuf,
    #[command(flatten)]
    pub tuning: TuningArgs,
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Manifest CSV (`id,fixed_path,moving_path`) or a fixture directory.
    pub input: PathBuf,
    #[command(flatten)]
    pub tuning: TuningArgs,
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    pub fixed: PathBuf,
    pub registered: PathBuf,
    pub mask: PathBuf,
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
}

/// A failure mapped onto the exit code contract.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Register(a) => cmd_register(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Diff(a) => cmd_diff(&a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> crate::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> crate::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult {
    let spec = FixtureSpec {
        base_pattern: args.pattern,
        size: args.size,
        truth: AffineParams {
            tx: args.tx,
            ty: args.ty,
            theta: args.theta.to_radians(),
            sx: args.sx,
            sy: args.sy,
            k: args.k,
        },
        remap: args.remap,
        noise_sigma: args.noise,
        seed: args.seed,
    };
    spec.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    write_fixture(&args.out, &spec)?;
    Ok(())
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub method: Method,
    pub max_mi_bits: f64,
    pub final_mi_bits: f64,
    pub cc: f64,
    pub overlap_pixels: usize,
}

impl From<&RegistrationResult> for MetricsRecord {
    fn from(r: &RegistrationResult) -> Self {
        MetricsRecord {
            method: r.method,
            max_mi_bits: r.max_mi_bits,
            final_mi_bits: r.final_mi_bits,
            cc: r.cc,
            overlap_pixels: r.mask.count(),
        }
    }
}

/// 8-bit output when the data fits, 16-bit otherwise.
fn output_maxval(image: &Image2D) -> u32 {
    if image.min_max().1 <= 255.0 {
        255
    } else {
        65535
    }
}

pub fn cmd_register(args: &RegisterArgs) -> CliResult {
    let fixed = load_pgm(&args.fixed)?;
    let moving = load_pgm(&args.moving)?;
    let config = args.tuning.config(args.method);
    config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let result = register(&fixed, &moving, &config)?;

    let out = &args.out;
    create_dir(out)?;
    save_pgm(
        &result.registered,
        out.join("registered.pgm"),
        output_maxval(&moving),
    )?;
    save_mask(&result.mask, out.join("mask.pgm"))?;
    write_json(
        &out.join("params.json"),
        &CenteredParams::new(result.params, result.center),
    )?;
    write_json(&out.join("metrics.json"), &MetricsRecord::from(&result))?;
    for t in &result.traces {
        t.trace
            .save_csv(out.join(format!("trace_level{}.csv", t.level)))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub fixed_path: PathBuf,
    pub moving_path: PathBuf,
}

/// Reads a manifest CSV. Relative paths resolve against the manifest's
/// directory.
pub fn read_manifest(path: &Path) -> CliResult<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut entries = Vec::new();
    for row in reader.deserialize::<ManifestEntry>() {
        let mut e = row.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        e.fixed_path = base.join(&e.fixed_path);
        e.moving_path = base.join(&e.moving_path);
        entries.push(e);
    }
    Ok(entries)
}

fn fixture_entry(dir: &Path, id: String) -> Option<ManifestEntry> {
    let (fixed, moving) = (dir.join("fixed.pgm"), dir.join("moving.pgm"));
    (fixed.is_file() && moving.is_file()).then_some(ManifestEntry {
        id,
        fixed_path: fixed,
        moving_path: moving,
    })
}

/// A fixture directory is either one fixture or a parent of fixtures.
fn scan_fixture_dir(dir: &Path) -> CliResult<Vec<ManifestEntry>> {
    let name = |p: &Path| {
        p.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    if let Some(e) = fixture_entry(dir, name(dir)) {
        return Ok(vec![e]);
    }
    let mut entries = Vec::new();
    for item in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = item.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            entries.extend(fixture_entry(&path, name(&path)));
        }
    }
    Ok(entries)
}

/// One `report.csv` line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportLine {
    pub id: String,
    pub method: String,
    pub max_mi_bits: Option<f64>,
    pub final_mi_bits: Option<f64>,
    pub cc: Option<f64>,
    /// 0/1 per pair; the win count on summary lines.
    pub mi_winner: usize,
    pub cc_winner: usize,
}

/// Id used for the per-method win-count lines at the end of the report.
pub const SUMMARY_ID: &str = "summary";

/// Per-method values for one pair plus winner flags. Ties share the win.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareReportRow {
    pub id: String,
    pub metrics: Vec<MetricsRecord>,
    pub mi_winner: Vec<bool>,
    pub cc_winner: Vec<bool>,
}

impl CompareReportRow {
    pub fn new(id: String, metrics: Vec<MetricsRecord>) -> Self {
        let winners = |key: fn(&MetricsRecord) -> f64| {
            let best = metrics.iter().map(key).fold(f64::NEG_INFINITY, f64::max);
            metrics.iter().map(|m| key(m) == best).collect()
        };
        let mi_winner = winners(|m| m.final_mi_bits);
        let cc_winner = winners(|m| m.cc);
        Self {
            id,
            metrics,
            mi_winner,
            cc_winner,
        }
    }

    fn lines(&self) -> impl Iterator<Item = ReportLine> + '_ {
        self.metrics.iter().enumerate().map(|(i, m)| ReportLine {
            id: self.id.clone(),
            method: m.method.to_string(),
            max_mi_bits: Some(m.max_mi_bits),
            final_mi_bits: Some(m.final_mi_bits),
            cc: Some(m.cc),
            mi_winner: self.mi_winner[i] as usize,
            cc_winner: self.cc_winner[i] as usize,
        })
    }
}

fn compare_pair(entry: &ManifestEntry, tuning: &TuningArgs) -> CliResult<CompareReportRow> {
    let fixed = load_pgm(&entry.fixed_path)?;
    let moving = load_pgm(&entry.moving_path)?;
    let metrics = Method::ALL
        .iter()
        .map(|&m| {
            register(&fixed, &moving, &tuning.config(m))
                .map(|r| MetricsRecord::from(&r))
                .map_err(|e| CliError::Runtime(format!("pair {}: {m}: {e}", entry.id)))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(CompareReportRow::new(entry.id.clone(), metrics))
}

pub fn write_report(rows: &[CompareReportRow], path: &Path) -> crate::Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Serialize(format!("{}: {e}", path.display())))?;
    let mut lines: Vec<ReportLine> = rows.iter().flat_map(|r| r.lines()).collect();
    for (i, method) in Method::ALL.iter().enumerate() {
        lines.push(ReportLine {
            id: SUMMARY_ID.to_string(),
            method: method.to_string(),
            max_mi_bits: None,
            final_mi_bits: None,
            cc: None,
            mi_winner: rows.iter().filter(|r| r.mi_winner[i]).count(),
            cc_winner: rows.iter().filter(|r| r.cc_winner[i]).count(),
        });
    }
    for line in &lines {
        writer
            .serialize(line)
            .map_err(|e| Error::Serialize(format!("{}: {e}", path.display())))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn cmd_compare(args: &CompareArgs) -> CliResult {
    let mut entries = if args.input.is_dir() {
        scan_fixture_dir(&args.input)?
    } else {
        read_manifest(&args.input)?
    };
    if entries.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no pairs to compare",
            args.input.display()
        )));
    }
    entries.sort();
    let ids: BTreeSet<&str> = entries.iter().map(|e| e.id.as_str()).collect();
    if ids.len() != entries.len() {
        return Err(CliError::Usage(format!(
            "{}: duplicate pair ids",
            args.input.display()
        )));
    }
    args.tuning
        .config(Method::Pyramid)
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;

    // Pairs are independent; collect preserves the sorted order.
    let rows = entries
        .par_iter()
        .map(|e| compare_pair(e, &args.tuning))
        .collect::<CliResult<Vec<_>>>()?;
    create_dir(&args.out)?;
    write_report(&rows, &args.out.join("report.csv"))?;
    for (i, method) in Method::ALL.iter().enumerate() {
        let mi = rows.iter().filter(|r| r.mi_winner[i]).count();
        let cc = rows.iter().filter(|r| r.cc_winner[i]).count();
        println!("{method}: mi wins {mi}, cc wins {cc} of {}", rows.len());
    }
    Ok(())
}

pub fn cmd_diff(args: &DiffArgs) -> CliResult {
    let fixed = load_pgm(&args.fixed)?;
    let registered = load_pgm(&args.registered)?;
    let mask = load_mask(&args.mask)?;
    let overlay = overlay_diff(&fixed, &registered, &mask)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_ppm(&overlay, &args.out)?;
    Ok(())
}
