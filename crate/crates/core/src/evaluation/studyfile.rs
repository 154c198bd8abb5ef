//! JSON study definitions and the combined evaluation report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clinical::{CtClass, DEFAULT_STABILITY_BAND};
use crate::error::{Error, Result};
use crate::evaluation::study::{
    dynamics_study, fit_panel_bias_thresholds, leave_one_out_study, render_rows, BiasThresholds,
    ComparisonRow, DynamicsPair, FoldSplit, LungShares, Metric, StudyCase, StudyOptions,
};
use crate::io::{read_raw_volume, RawVolume};
use crate::volume::{BinaryMask, Spacing};

/// On-disk description of one case. Mask paths point at sidecar headers and
/// are resolved against the study file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseEntry {
    pub case_id: String,
    #[serde(default)]
    pub patient_id: Option<String>,
    #[serde(default)]
    pub scan_date: Option<String>,
    pub left_lung: PathBuf,
    pub right_lung: PathBuf,
    pub model_mask: PathBuf,
    #[serde(default)]
    pub rater_masks: Vec<PathBuf>,
    /// `[left, right]` per rater.
    #[serde(default)]
    pub rater_shares: Vec<[f64; 2]>,
    #[serde(default)]
    pub hospital_label: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySettings {
    pub quorum: Option<usize>,
    pub resamples: Option<usize>,
    pub seed: Option<u64>,
    pub split_seed: Option<u64>,
    pub stability_band: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyDefinition {
    #[serde(default)]
    pub settings: StudySettings,
    pub cases: Vec<CaseEntry>,
}

impl StudyDefinition {
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::header(source, e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Effective options: explicit overrides, then study settings, then defaults.
    pub fn options(&self, overrides: &StudySettings) -> (StudyOptions, f64) {
        let d = StudyOptions::default();
        let s = &self.settings;
        let o = overrides;
        let opts = StudyOptions {
            quorum: o.quorum.or(s.quorum).unwrap_or(d.quorum),
            resamples: o.resamples.or(s.resamples).unwrap_or(d.resamples),
            seed: o.seed.or(s.seed).unwrap_or(d.seed),
            split_seed: o.split_seed.or(s.split_seed).unwrap_or(d.split_seed),
        };
        let band = o
            .stability_band
            .or(s.stability_band)
            .unwrap_or(DEFAULT_STABILITY_BAND);
        (opts, band)
    }
}

fn load_mask(base: &Path, rel: &Path) -> Result<(BinaryMask, Spacing)> {
    let path = base.join(rel);
    match read_raw_volume(&path)? {
        RawVolume::Mask(m, s) => Ok((m, s)),
        other => Err(Error::header(
            &path,
            format!("expected a mask volume, found {}", other.kind()),
        )),
    }
}

/// Reads every referenced mask. `base` is the directory relative paths are
/// resolved against.
pub fn load_cases(def: &StudyDefinition, base: &Path) -> Result<Vec<StudyCase>> {
    if def.cases.is_empty() {
        return Err(Error::InvalidStudy("study has no cases".into()));
    }
    def.cases
        .iter()
        .map(|c| {
            let (model_mask, spacing) = load_mask(base, &c.model_mask)?;
            let (left_lung, _) = load_mask(base, &c.left_lung)?;
            let (right_lung, _) = load_mask(base, &c.right_lung)?;
            let rater_masks = c
                .rater_masks
                .iter()
                .map(|p| load_mask(base, p).map(|(m, _)| m))
                .collect::<Result<Vec<_>>>()?;
            for s in c.rater_shares.iter().flatten() {
                if !(0.0..=1.0).contains(s) {
                    return Err(Error::InvalidStudy(format!(
                        "case {}: share {s} outside [0, 1]",
                        c.case_id
                    )));
                }
            }
            let hospital_label = c
                .hospital_label
                .as_deref()
                .map(str::parse::<CtClass>)
                .transpose()?;
            Ok(StudyCase {
                case_id: c.case_id.clone(),
                patient_id: c.patient_id.clone(),
                scan_date: c.scan_date.clone(),
                spacing,
                left_lung,
                right_lung,
                model_mask,
                rater_masks,
                rater_shares: c
                    .rater_shares
                    .iter()
                    .map(|[l, r]| LungShares { left: *l, right: *r })
                    .collect(),
                hospital_label,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub rows: Vec<ComparisonRow>,
    pub thresholds: BiasThresholds,
    pub split: FoldSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub cases: usize,
    pub options: StudyOptions,
    pub stability_band: f64,
    pub dice: Option<Vec<ComparisonRow>>,
    pub share: Option<Vec<ComparisonRow>>,
    pub ct_class: Option<ClassReport>,
    pub dynamics: Vec<DynamicsPair>,
}

/// Runs every section the cases carry data for: segmentation agreement when
/// rater masks are present, share error when rater estimates are present and
/// CT classification when hospital labels are present as well.
pub fn run_study(cases: &[StudyCase], opts: &StudyOptions, stability_band: f64) -> Result<StudyReport> {
    if cases.is_empty() {
        return Err(Error::InvalidStudy("study has no cases".into()));
    }
    let has_masks = cases.iter().any(|c| !c.rater_masks.is_empty());
    let has_shares = cases.iter().any(|c| !c.rater_shares.is_empty());
    let has_labels = cases.iter().all(|c| c.hospital_label.is_some());

    let dice = has_masks
        .then(|| leave_one_out_study(cases, Metric::Dice, opts))
        .transpose()?;
    let share = has_shares
        .then(|| leave_one_out_study(cases, Metric::Share, opts))
        .transpose()?;
    let ct_class = if has_shares && has_labels {
        let split = FoldSplit::stratified(cases, opts.split_seed)?;
        Some(ClassReport {
            rows: leave_one_out_study(cases, Metric::CtClass, opts)?,
            thresholds: fit_panel_bias_thresholds(cases, &split)?,
            split,
        })
    } else {
        None
    };
    Ok(StudyReport {
        cases: cases.len(),
        options: *opts,
        stability_band,
        dice,
        share,
        ct_class,
        dynamics: dynamics_study(cases, stability_band)?,
    })
}

/// Human-readable companion of the JSON report.
pub fn render_report(report: &StudyReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "cases: {}  quorum: {}  resamples: {}  seed: {}",
        report.cases, report.options.quorum, report.options.resamples, report.options.seed
    );
    if let Some(rows) = &report.dice {
        let _ = writeln!(s, "\nsegmentation agreement (DSC)\n{}", render_rows(rows));
    }
    if let Some(rows) = &report.share {
        let _ = writeln!(s, "lesion share error (MAE)\n{}", render_rows(rows));
    }
    if let Some(class) = &report.ct_class {
        let _ = writeln!(s, "CT class accuracy\n{}", render_rows(&class.rows));
        let _ = writeln!(s, "fitted thresholds (t2, t3, t4)");
        let line = |name: String, f: &crate::evaluation::study::FoldThresholds| {
            let t = |x: &crate::clinical::ThresholdFit| {
                format!("{:.3}/{:.3}/{:.3}", x.thresholds.t2, x.thresholds.t3, x.thresholds.t4)
            };
            format!(
                "{:<12} all {:<17} fold1 {:<17} fold2 {}\n",
                name,
                t(&f.all),
                t(&f.fold1),
                t(&f.fold2)
            )
        };
        for (i, f) in class.thresholds.per_rater.iter().enumerate() {
            s.push_str(&line(format!("rater {}", i + 1), f));
        }
        s.push_str(&line("pooled".into(), &class.thresholds.pooled));
        s.push('\n');
    }
    if !report.dynamics.is_empty() {
        let _ = writeln!(s, "dynamics (band {})", report.stability_band);
        for d in &report.dynamics {
            let panel = d.panel.map_or_else(|| "tie".to_string(), |p| p.to_string());
            let _ = writeln!(
                s,
                "{} {} -> {}: model {} ({:.4} -> {:.4}), panel {}",
                d.patient_id, d.before, d.after, d.model, d.model_before, d.model_after, panel
            );
        }
    }
    s
}
