//! Command-line front end. Every command returns a typed [`Error`]; [`run`]
//! turns it into one `error[Category]: message` line on stderr and the
//! category's exit code.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::clinical::{
    ct_class, dynamics, fit_ct_thresholds, stratified_two_fold_split, CtClass, CtThresholds,
    Dynamics, LesionShareReport, ThresholdFit, DEFAULT_STABILITY_BAND,
};
use crate::config::read_kv;
use crate::error::{Error, Result};
use crate::evaluation::studyfile::{load_cases, render_report, run_study, StudyDefinition, StudySettings};
use crate::fusion::{fuse_predictions, FusionConfig, FusionStrategy};
use crate::io::{
    parse_dicom_series_with, read_raw_volume, write_overlay_image, write_raw_volume, RawVolume,
    SeriesOptions, Window,
};
use crate::models::{
    builtin_lung_mask, read_manifest, reference_region_grow, resolve_manifest,
    split_lungs_at_midline, ManifestEntry, ModelFamily, RegionGrowConfig,
};
use crate::preprocess::{normalize_lung_window, to_hounsfield};
use crate::synth::{make_phantom, simulate_model, write_dicom_series, PhantomSpec};
use crate::volume::{BinaryMask, CtVolume, Dims, ProbabilityVolume, UnitState};

#[derive(Debug, Parser)]
#[command(name = "lesionscope", version, about = "CT lesion fusion, scoring and rater-panel evaluation")]
pub struct Cli {
    /// `key=value` file supplying defaults for any flag; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fuse model outputs for one scan and report lesion shares.
    Segment(SegmentArgs),
    /// Run the leave-one-rater-out study described by a JSON file.
    Evaluate(EvaluateArgs),
    /// Classify the change between two segment reports.
    Dynamics(DynamicsArgs),
    /// Fit CT-class thresholds to (share, label) observations.
    FitThresholds(FitArgs),
    /// Write a synthetic phantom with lung masks and a model manifest.
    Phantom(PhantomArgs),
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// DICOM directory or CT sidecar header.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Tab-separated model manifest.
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long)]
    pub fusion_config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overlay HU window as `low,high`.
    #[arg(long, allow_hyphen_values = true)]
    pub window: Option<String>,
    /// SeriesDescription substring for DICOM input; empty accepts all.
    #[arg(long)]
    pub series_filter: Option<String>,
    /// Also write the lung-window normalized volume.
    #[arg(long)]
    pub save_normalized: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Study definition (JSON).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub quorum: Option<usize>,
    #[arg(long)]
    pub stability_band: Option<f64>,
    #[arg(long)]
    pub resamples: Option<usize>,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DynamicsArgs {
    /// Earlier and later `report.json` from `segment`.
    #[arg(num_args = 2, value_names = ["BEFORE", "AFTER"])]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub stability_band: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Whitespace-separated `share label` lines; `#` starts a comment.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed of the stratified two-fold split.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Volume size as `n` or `nx,ny,nz`.
    #[arg(long)]
    pub size: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// HU noise standard deviation.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Write the CT as a DICOM series instead of a sidecar.
    #[arg(long)]
    pub dicom: bool,
    /// Simulated models per ResNet/DPN/FPN family to add to the manifest.
    #[arg(long)]
    pub ensemble: Option<usize>,
}

/// Flag values backed by an optional `--config` file.
pub struct Settings {
    source: PathBuf,
    kv: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        Ok(match path {
            Some(p) => Self {
                source: p.to_path_buf(),
                kv: read_kv(p)?,
            },
            None => Self {
                source: PathBuf::new(),
                kv: BTreeMap::new(),
            },
        })
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.kv.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::header(&self.source, format!("invalid value `{v}` for `{key}`"))),
        }
    }

    fn required<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T> {
        self.get(flag, key)?
            .ok_or_else(|| Error::InvalidConfig(format!("--{} is required", key.replace('_', "-"))))
    }

    fn flag(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.get(None, key)?.unwrap_or(false))
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), single_line(&e.to_string()));
            e.exit_code()
        }
    }
}

fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn execute(cli: &Cli) -> Result<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Segment(a) => cmd_segment(a, &settings).map(|_| ()),
        Command::Evaluate(a) => cmd_evaluate(a, &settings),
        Command::Dynamics(a) => cmd_dynamics(a, &settings),
        Command::FitThresholds(a) => cmd_fit_thresholds(a, &settings),
        Command::Phantom(a) => cmd_phantom(a, &settings),
    }
}

fn parse_window(s: &str) -> Result<Window> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || Error::InvalidConfig(format!("window `{s}` is not `low,high`"));
    let [lo, hi] = parts[..] else { return Err(bad()) };
    Window::new(lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::InvalidConfig(e.to_string()))
}

/// Machine-readable result of `segment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub models: Vec<String>,
    pub fusion_strategy: FusionStrategy,
    pub fusion: FusionConfig,
    pub shares: LesionShareReport,
    pub ct_class: CtClass,
    pub thresholds: CtThresholds,
    pub seed: u64,
}

impl SegmentReport {
    pub fn render(&self) -> String {
        let s = &self.shares;
        let mut out = String::new();
        let _ = writeln!(out, "dims            {} x {} x {}", self.dims[0], self.dims[1], self.dims[2]);
        let _ = writeln!(out, "models          {}", self.models.join(", "));
        let strategy = match self.fusion_strategy {
            FusionStrategy::Score => "score",
            FusionStrategy::Mean => "mean",
        };
        let _ = writeln!(out, "fusion          {strategy}");
        let _ = writeln!(out, "left share      {:.4} ({} / {} voxels)", s.left_share, s.left_lesion_voxels, s.left_lung_voxels);
        let _ = writeln!(out, "right share     {:.4} ({} / {} voxels)", s.right_share, s.right_lesion_voxels, s.right_lung_voxels);
        let _ = writeln!(out, "total share     {:.4}", s.total_share);
        let _ = writeln!(out, "lesion volume   {:.2} ml of {:.2} ml", s.lesion_ml, s.lung_ml);
        let _ = writeln!(out, "CT class        {}", self.ct_class);
        out
    }
}

fn load_ct(input: &Path, series_filter: Option<String>) -> Result<CtVolume> {
    if input.is_dir() {
        let opts = match series_filter {
            Some(f) if f.is_empty() => SeriesOptions { series_filter: None },
            Some(f) => SeriesOptions {
                series_filter: Some(f),
            },
            None => SeriesOptions::default(),
        };
        return parse_dicom_series_with(input, &opts);
    }
    match read_raw_volume(input)? {
        RawVolume::Ct(v) => Ok(v),
        other => Err(Error::header(input, format!("expected a ct volume, found {}", other.kind()))),
    }
}

fn is_side(entry: &ManifestEntry, side: &str) -> bool {
    entry.model_id.to_ascii_lowercase().contains(side)
}

/// Left and right lung masks from the manifest's `lung` entries: explicit
/// `left`/`right` entries when present, otherwise the union of all lung
/// entries split at the midline. Without lung entries the built-in
/// extractor is used.
fn resolve_lungs(entries: &[&ManifestEntry], hu: &CtVolume) -> Result<(BinaryMask, BinaryMask)> {
    let builtin = |_: &ManifestEntry| Ok(ProbabilityVolume::from_mask(&builtin_lung_mask(hu)?));
    if entries.is_empty() {
        return Ok(split_lungs_at_midline(&builtin_lung_mask(hu)?));
    }
    let owned: Vec<ManifestEntry> = entries.iter().map(|e| (*e).clone()).collect();
    let preds = resolve_manifest(&owned, builtin)?;
    let masks: Vec<BinaryMask> = preds.iter().map(|p| p.prob.threshold(0.5)).collect();
    let pick = |side: &str| -> Option<&BinaryMask> {
        owned.iter().zip(&masks).find(|(e, _)| is_side(e, side)).map(|(_, m)| m)
    };
    if let (Some(l), Some(r)) = (pick("left"), pick("right")) {
        return Ok((l.clone(), r.clone()));
    }
    let mut all = masks[0].clone();
    for m in &masks[1..] {
        all = all.union(m)?;
    }
    Ok(split_lungs_at_midline(&all))
}

/// Runs the segmentation pipeline and writes its outputs. Returns the report.
pub fn cmd_segment(a: &SegmentArgs, settings: &Settings) -> Result<SegmentReport> {
    let input: PathBuf = settings.required(a.input.clone(), "input")?;
    let models: PathBuf = settings.required(a.models.clone(), "models")?;
    let out: PathBuf = settings.required(a.out.clone(), "out")?;
    let seed = settings.get(a.seed, "seed")?.unwrap_or(0);
    let window = match settings.get(a.window.clone(), "window")? {
        Some(w) => parse_window(&w)?,
        None => Window::default(),
    };
    let fusion = match settings.get(a.fusion_config.clone(), "fusion_config")? {
        Some(p) => FusionConfig::load(&p)?,
        None => FusionConfig::default(),
    };
    let series_filter = settings.get(a.series_filter.clone(), "series_filter")?;
    let save_normalized = settings.flag(a.save_normalized, "save_normalized")?;

    let entries = read_manifest(&models)?;
    let raw = load_ct(&input, series_filter)?;
    let hu = match raw.unit_state() {
        UnitState::RawStored => to_hounsfield(&raw)?,
        _ => raw,
    };
    let normalized = normalize_lung_window(&hu)?;

    let lung_entries: Vec<&ManifestEntry> =
        entries.iter().filter(|e| e.family == ModelFamily::Lung).collect();
    let lesion_entries: Vec<ManifestEntry> = entries
        .iter()
        .filter(|e| e.family != ModelFamily::Lung)
        .cloned()
        .collect();
    if lesion_entries.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let (left, right) = resolve_lungs(&lung_entries, &hu)?;
    let lungs = left.union(&right)?;
    let grow = RegionGrowConfig::default();
    let preds = resolve_manifest(&lesion_entries, |e| match e.family {
        ModelFamily::Reference => reference_region_grow(&hu, &lungs, &grow),
        _ => Err(Error::header(
            &models,
            format!("model `{}` of family {} has no built-in implementation", e.model_id, e.family),
        )),
    })?;
    hu.dims().ensure_same(preds[0].prob.dims())?;
    let (lesion, strategy) = fuse_predictions(&preds, &fusion)?;

    let shares = crate::clinical::lesion_share(&lesion, &left, &right, hu.spacing())?;
    let thresholds = CtThresholds::default();
    let dims = hu.dims();
    let sp = hu.spacing();
    let report = SegmentReport {
        dims: [dims.nx, dims.ny, dims.nz],
        spacing: [sp.sx, sp.sy, sp.sz],
        models: preds.iter().map(|p| p.model_id.clone()).collect(),
        fusion_strategy: strategy,
        fusion,
        ct_class: ct_class(shares.max_share, &thresholds),
        shares,
        thresholds,
        seed,
    };

    create_dir(&out)?;
    write_raw_volume(&RawVolume::Mask(lesion.clone(), sp), &out.join("lesion_mask.hdr"))?;
    if save_normalized {
        write_raw_volume(&RawVolume::Ct(normalized), &out.join("normalized.hdr"))?;
    }
    let overlays = out.join("overlays");
    create_dir(&overlays)?;
    for z in 0..dims.nz {
        write_overlay_image(&hu, &lesion, z, window, &overlays.join(format!("slice_{z:04}.png")))?;
    }
    write_file(&out.join("report.json"), to_json(&report)?.as_bytes())?;
    let text = report.render();
    write_file(&out.join("report.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(report)
}

pub fn cmd_evaluate(a: &EvaluateArgs, settings: &Settings) -> Result<()> {
    let input: PathBuf = settings.required(a.input.clone(), "input")?;
    let out = settings.get(a.out.clone(), "out")?;
    let overrides = StudySettings {
        quorum: settings.get(a.quorum, "quorum")?,
        resamples: settings.get(a.resamples, "resamples")?,
        seed: settings.get(a.seed, "seed")?,
        split_seed: settings.get(a.split_seed, "split_seed")?,
        stability_band: settings.get(a.stability_band, "stability_band")?,
    };
    let def = StudyDefinition::read(&input)?;
    let (opts, band) = def.options(&overrides);
    let base = input.parent().unwrap_or(Path::new("."));
    let cases = load_cases(&def, base)?;
    let report = run_study(&cases, &opts, band)?;
    let text = render_report(&report);
    if let Some(out) = out {
        create_dir(&out)?;
        write_file(&out.join("report.json"), to_json(&report)?.as_bytes())?;
        write_file(&out.join("report.txt"), text.as_bytes())?;
    }
    print!("{text}");
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsReport {
    pub before: f64,
    pub after: f64,
    pub stability_band: f64,
    pub dynamics: Dynamics,
}

fn read_segment_report(path: &Path) -> Result<SegmentReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::header(path, e.to_string()))
}

pub fn cmd_dynamics(a: &DynamicsArgs, settings: &Settings) -> Result<()> {
    let band = settings
        .get(a.stability_band, "stability_band")?
        .unwrap_or(DEFAULT_STABILITY_BAND);
    if !(band >= 0.0 && band.is_finite()) {
        return Err(Error::InvalidConfig(format!("stability band {band}")));
    }
    let [before, after] = &a.reports[..] else {
        return Err(Error::InvalidConfig("expected two reports".into()));
    };
    let b = read_segment_report(before)?.shares.total_share;
    let f = read_segment_report(after)?.shares.total_share;
    let report = DynamicsReport {
        before: b,
        after: f,
        stability_band: band,
        dynamics: dynamics(b, f, band),
    };
    if let Some(out) = settings.get(a.out.clone(), "out")? {
        write_file(&out, to_json(&report)?.as_bytes())?;
    }
    println!("{} {:.6} {:.6}", report.dynamics, b, f);
    Ok(())
}

/// Output of `fit-thresholds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub observations: usize,
    pub all: ThresholdFit,
    pub fold1: ThresholdFit,
    pub fold2: ThresholdFit,
    /// Accuracy of each fold's thresholds on the other fold, pooled.
    pub held_out_accuracy: f64,
}

fn read_observations(path: &Path) -> Result<(Vec<f64>, Vec<CtClass>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (mut shares, mut labels) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let [share, label] = cols[..] else {
            return Err(Error::header(path, format!("line {}: expected `share label`", i + 1)));
        };
        let share: f64 = share
            .parse()
            .ok()
            .filter(|s| (0.0..=1.0).contains(s))
            .ok_or_else(|| Error::header(path, format!("line {}: bad share `{share}`", i + 1)))?;
        shares.push(share);
        labels.push(label.parse()?);
    }
    if shares.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok((shares, labels))
}

/// Fits on all observations and on each half of a stratified split, and
/// scores each half's thresholds on the other half.
pub fn fit_with_cross_folds(shares: &[f64], labels: &[CtClass], seed: u64) -> Result<FitReport> {
    let idx: Vec<usize> = (0..shares.len()).collect();
    let (f1, f2) = stratified_two_fold_split(&idx, labels, seed)?;
    let fit = |ids: &[usize]| {
        let s: Vec<f64> = ids.iter().map(|i| shares[*i]).collect();
        let l: Vec<CtClass> = ids.iter().map(|i| labels[*i]).collect();
        fit_ct_thresholds(&s, &l)
    };
    let (fit1, fit2) = (fit(&f1)?, fit(&f2)?);
    let hits = f2
        .iter()
        .filter(|i| ct_class(shares[**i], &fit1.thresholds) == labels[**i])
        .count()
        + f1
            .iter()
            .filter(|i| ct_class(shares[**i], &fit2.thresholds) == labels[**i])
            .count();
    Ok(FitReport {
        observations: shares.len(),
        all: fit_ct_thresholds(shares, labels)?,
        fold1: fit1,
        fold2: fit2,
        held_out_accuracy: hits as f64 / shares.len() as f64,
    })
}

pub fn cmd_fit_thresholds(a: &FitArgs, settings: &Settings) -> Result<()> {
    let input: PathBuf = settings.required(a.input.clone(), "input")?;
    let seed = settings.get(a.seed, "seed")?.unwrap_or(0);
    let (shares, labels) = read_observations(&input)?;
    let report = fit_with_cross_folds(&shares, &labels, seed)?;
    let json = to_json(&report)?;
    if let Some(out) = settings.get(a.out.clone(), "out")? {
        write_file(&out, json.as_bytes())?;
    }
    let _ = std::io::stdout().write_all(json.as_bytes());
    Ok(())
}

fn parse_size(s: &str) -> Result<Dims> {
    let bad = || Error::InvalidConfig(format!("size `{s}` is not `n` or `nx,ny,nz`"));
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let dims = match v[..] {
        [n] => Dims::new(n, n, n),
        [x, y, z] => Dims::new(x, y, z),
        _ => return Err(bad()),
    };
    dims.validate()?;
    Ok(dims)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomTruth {
    pub left_share: f64,
    pub right_share: f64,
    pub total_share: f64,
    pub counts: crate::synth::TrueShares,
    pub spec: PhantomSpec,
}

pub fn cmd_phantom(a: &PhantomArgs, settings: &Settings) -> Result<()> {
    let out: PathBuf = settings.required(a.out.clone(), "out")?;
    let dims = parse_size(&settings.get(a.size.clone(), "size")?.unwrap_or_else(|| "64".into()))?;
    let seed = settings.get(a.seed, "seed")?.unwrap_or(0);
    let mut spec = PhantomSpec::standard(dims);
    spec.rng_seed = seed;
    spec.noise_hu = settings.get(a.noise, "noise")?.unwrap_or(0.0);
    let phantom = make_phantom(&spec)?;
    let sp = spec.spacing;

    create_dir(&out)?;
    let input = if settings.flag(a.dicom, "dicom")? {
        write_dicom_series(&phantom.volume, &out.join("dicom"), "LUNG phantom")?;
        "dicom"
    } else {
        write_raw_volume(&RawVolume::Ct(phantom.volume.clone()), &out.join("ct.hdr"))?;
        "ct.hdr"
    };
    write_raw_volume(&RawVolume::Mask(phantom.left_lung.clone(), sp), &out.join("lung_left.hdr"))?;
    write_raw_volume(&RawVolume::Mask(phantom.right_lung.clone(), sp), &out.join("lung_right.hdr"))?;
    write_raw_volume(&RawVolume::Mask(phantom.lesion.clone(), sp), &out.join("lesion.hdr"))?;

    let mut manifest = String::from("# model_id\tfamily\theader\n");
    manifest.push_str("lung_left\tlung\tlung_left.hdr\nlung_right\tlung\tlung_right.hdr\n");
    manifest.push_str("region_grow\treference\t-\n");
    let per_family = settings.get(a.ensemble, "ensemble")?.unwrap_or(0);
    if per_family > 0 {
        let dir = out.join("models");
        create_dir(&dir)?;
        let mut k = 0u64;
        for family in [ModelFamily::ResNet, ModelFamily::Dpn, ModelFamily::Fpn] {
            for i in 0..per_family {
                let id = format!("{family}_{i:02}");
                let prob = simulate_model(&phantom.lesion, 3.0, 0.02, seed.wrapping_add(1 + k))?;
                k += 1;
                write_raw_volume(&RawVolume::Prob(prob, sp), &dir.join(format!("{id}.hdr")))?;
                let _ = writeln!(manifest, "{id}\t{family}\tmodels/{id}.hdr");
            }
        }
    }
    write_file(&out.join("manifest.tsv"), manifest.as_bytes())?;
    let truth = PhantomTruth {
        left_share: phantom.shares.left(),
        right_share: phantom.shares.right(),
        total_share: phantom.shares.total(),
        counts: phantom.shares,
        spec,
    };
    write_file(&out.join("truth.json"), to_json(&truth)?.as_bytes())?;
    println!(
        "phantom {}x{}x{} input={input} total_share={:.6}",
        dims.nx, dims.ny, dims.nz, truth.total_share
    );
    Ok(())
}
