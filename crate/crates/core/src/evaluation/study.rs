//! Leave-one-rater-out comparison of each rater and the model against the
//! consensus of the remaining raters.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::clinical::{
    ct_class, dynamics, fit_ct_thresholds, lesion_share, stratified_two_fold_split, CtClass,
    Dynamics, LesionShareReport, ThresholdFit,
};
use crate::error::{Error, Result};
use crate::evaluation::metrics::{dice, mean_std, panel_ground_truth, panel_share_truth, PanelConfig};
use crate::evaluation::permutation::paired_permutation_test;
use crate::volume::{BinaryMask, Spacing};

/// One rater's share estimates for the two lungs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LungShares {
    pub left: f64,
    pub right: f64,
}

impl LungShares {
    pub fn max(&self) -> f64 {
        self.left.max(self.right)
    }
}

/// One scan with its lung masks, model output and rater annotations.
/// Rater vectors are indexed by rater and may be empty when a case carries
/// no annotations of that kind.
#[derive(Debug, Clone)]
pub struct StudyCase {
    pub case_id: String,
    pub patient_id: Option<String>,
    pub scan_date: Option<String>,
    pub spacing: Spacing,
    pub left_lung: BinaryMask,
    pub right_lung: BinaryMask,
    pub model_mask: BinaryMask,
    pub rater_masks: Vec<BinaryMask>,
    pub rater_shares: Vec<LungShares>,
    pub hospital_label: Option<CtClass>,
}

impl StudyCase {
    pub fn model_shares(&self) -> Result<LesionShareReport> {
        lesion_share(&self.model_mask, &self.left_lung, &self.right_lung, self.spacing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Dice,
    Share,
    CtClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    /// Votes needed for a voxel to enter the panel consensus.
    pub quorum: usize,
    pub resamples: usize,
    pub seed: u64,
    pub split_seed: u64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            quorum: 3,
            resamples: 10_000,
            seed: 0,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldAccuracy {
    pub rater: f64,
    pub model: f64,
    pub cases: usize,
}

/// One line of a rater-versus-model table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub rater: String,
    pub rater_mean: f64,
    pub rater_std: f64,
    pub model_mean: f64,
    pub model_std: f64,
    pub cases: usize,
    pub p_value: f64,
    /// Mean signed error, share metric only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rater_me: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub model_me: Option<f64>,
    /// Held-out accuracy per fold, CT-class metric only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub folds: Option<[FoldAccuracy; 2]>,
}

pub const POOLED_LABEL: &str = "all raters";

fn rater_label(r: usize) -> String {
    format!("rater {}", r + 1)
}

fn p_value(x: &[f64], y: &[f64], opts: &StudyOptions) -> Result<f64> {
    if x.len() < 2 {
        return Ok(1.0);
    }
    paired_permutation_test(x, y, opts.resamples, opts.seed)
}

fn comparison(label: String, rater: &[f64], model: &[f64], opts: &StudyOptions) -> Result<ComparisonRow> {
    let (rm, rs) = mean_std(rater);
    let (mm, ms) = mean_std(model);
    Ok(ComparisonRow {
        rater: label,
        rater_mean: rm,
        rater_std: rs,
        model_mean: mm,
        model_std: ms,
        cases: rater.len(),
        p_value: p_value(rater, model, opts)?,
        rater_me: None,
        model_me: None,
        folds: None,
    })
}

fn rater_count(cases: &[StudyCase], metric: Metric) -> Result<usize> {
    let first = cases.first().ok_or_else(|| Error::InvalidStudy("no cases".into()))?;
    let count = |c: &StudyCase| match metric {
        Metric::Dice => c.rater_masks.len(),
        Metric::Share | Metric::CtClass => c.rater_shares.len(),
    };
    let n = count(first);
    if let Some(bad) = cases.iter().find(|c| count(c) != n) {
        return Err(Error::InvalidStudy(format!(
            "case {} has {} raters, expected {n}",
            bad.case_id,
            count(bad)
        )));
    }
    if n < 2 {
        return Err(Error::InsufficientRaters(n));
    }
    Ok(n)
}

/// Runs the leave-one-rater-out protocol for `metric`, returning one row per
/// rater followed by a pooled row over every (rater, case) pair.
///
/// * `Dice`: truth is the quorum consensus of the other raters' masks.
/// * `Share`: truth is the mean of the other raters' per-lung estimates;
///   rows carry absolute error (mean is MAE) plus mean signed error.
/// * `CtClass`: cases are split into two stratified folds; the rater is
///   scored with thresholds fitted on their own estimates in the other fold,
///   the model with thresholds fitted on the pooled estimates of the other
///   raters in the other fold. Values are per-case correctness.
pub fn leave_one_out_study(
    cases: &[StudyCase],
    metric: Metric,
    opts: &StudyOptions,
) -> Result<Vec<ComparisonRow>> {
    let n = rater_count(cases, metric)?;
    match metric {
        Metric::Dice => dice_rows(cases, n, opts),
        Metric::Share => share_rows(cases, n, opts),
        Metric::CtClass => class_rows(cases, n, opts),
    }
}

fn dice_rows(cases: &[StudyCase], n: usize, opts: &StudyOptions) -> Result<Vec<ComparisonRow>> {
    let panel = PanelConfig {
        quorum: opts.quorum,
        panel_size: n - 1,
    };
    panel.validate()?;
    let mut rows = Vec::with_capacity(n + 1);
    let (mut all_r, mut all_m) = (Vec::new(), Vec::new());
    for r in 0..n {
        let (mut rv, mut mv) = (Vec::new(), Vec::new());
        for case in cases {
            let others: Vec<&BinaryMask> = case
                .rater_masks
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != r)
                .map(|(_, m)| m)
                .collect();
            let truth = panel_ground_truth(&others, &panel)?;
            rv.push(dice(&case.rater_masks[r], &truth)?);
            mv.push(dice(&case.model_mask, &truth)?);
        }
        rows.push(comparison(rater_label(r), &rv, &mv, opts)?);
        all_r.extend(rv);
        all_m.extend(mv);
    }
    rows.push(comparison(POOLED_LABEL.to_string(), &all_r, &all_m, opts)?);
    Ok(rows)
}

fn share_rows(cases: &[StudyCase], n: usize, opts: &StudyOptions) -> Result<Vec<ComparisonRow>> {
    let model: Vec<LesionShareReport> = cases.iter().map(StudyCase::model_shares).collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(n + 1);
    let (mut all_r, mut all_m) = (Vec::new(), Vec::new());
    for r in 0..n {
        let (mut rerr, mut merr) = (Vec::new(), Vec::new());
        for (case, ms) in cases.iter().zip(&model) {
            let sides: [(fn(&LungShares) -> f64, f64); 2] =
                [(|s| s.left, ms.left_share), (|s| s.right, ms.right_share)];
            for (side, model_share) in sides {
                let others: Vec<f64> = case
                    .rater_shares
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != r)
                    .map(|(_, s)| side(s))
                    .collect();
                let truth = panel_share_truth(&others)?;
                rerr.push(side(&case.rater_shares[r]) - truth);
                merr.push(model_share - truth);
            }
        }
        rows.push(error_row(rater_label(r), &rerr, &merr, opts)?);
        all_r.extend(rerr);
        all_m.extend(merr);
    }
    rows.push(error_row(POOLED_LABEL.to_string(), &all_r, &all_m, opts)?);
    Ok(rows)
}

fn error_row(label: String, rater_err: &[f64], model_err: &[f64], opts: &StudyOptions) -> Result<ComparisonRow> {
    let abs = |v: &[f64]| v.iter().map(|e| e.abs()).collect::<Vec<_>>();
    let mut row = comparison(label, &abs(rater_err), &abs(model_err), opts)?;
    row.rater_me = Some(mean_std(rater_err).0);
    row.model_me = Some(mean_std(model_err).0);
    Ok(row)
}

/// Fold membership (0 or 1) of each case, in case order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_of: Vec<u8>,
}

impl FoldSplit {
    /// Two folds stratified by hospital CT class.
    pub fn stratified(cases: &[StudyCase], seed: u64) -> Result<Self> {
        let labels = hospital_labels(cases)?;
        let idx: Vec<usize> = (0..cases.len()).collect();
        let (first, _) = stratified_two_fold_split(&idx, &labels, seed)?;
        let mut fold_of = vec![1u8; cases.len()];
        for i in first {
            fold_of[i] = 0;
        }
        Ok(Self { fold_of })
    }

    pub fn members(&self, fold: u8) -> impl Iterator<Item = usize> + '_ {
        self.fold_of
            .iter()
            .enumerate()
            .filter(move |(_, f)| **f == fold)
            .map(|(i, _)| i)
    }
}

fn hospital_labels(cases: &[StudyCase]) -> Result<Vec<CtClass>> {
    cases
        .iter()
        .map(|c| {
            c.hospital_label
                .ok_or_else(|| Error::InvalidStudy(format!("case {} has no hospital label", c.case_id)))
        })
        .collect()
}

/// Threshold fits on all cases and on each fold separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldThresholds {
    pub all: ThresholdFit,
    pub fold1: ThresholdFit,
    pub fold2: ThresholdFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasThresholds {
    pub per_rater: Vec<FoldThresholds>,
    /// Fitted on the estimates of every rater together.
    pub pooled: FoldThresholds,
}

/// Fits CT thresholds on the max-lung estimates of `raters` over `case_idx`.
fn fit_raters(cases: &[StudyCase], raters: &[usize], case_idx: &[usize]) -> Result<ThresholdFit> {
    let mut shares = Vec::new();
    let mut labels = Vec::new();
    for &c in case_idx {
        let label = cases[c]
            .hospital_label
            .ok_or_else(|| Error::InvalidStudy(format!("case {} has no hospital label", cases[c].case_id)))?;
        for &r in raters {
            shares.push(cases[c].rater_shares[r].max());
            labels.push(label);
        }
    }
    fit_ct_thresholds(&shares, &labels)
}

fn fold_fits(cases: &[StudyCase], raters: &[usize], split: &FoldSplit) -> Result<FoldThresholds> {
    let all: Vec<usize> = (0..cases.len()).collect();
    let f1: Vec<usize> = split.members(0).collect();
    let f2: Vec<usize> = split.members(1).collect();
    Ok(FoldThresholds {
        all: fit_raters(cases, raters, &all)?,
        fold1: fit_raters(cases, raters, &f1)?,
        fold2: fit_raters(cases, raters, &f2)?,
    })
}

/// Per-rater and pooled CT thresholds fitted against hospital labels.
pub fn fit_panel_bias_thresholds(cases: &[StudyCase], split: &FoldSplit) -> Result<BiasThresholds> {
    let n = rater_count(cases, Metric::CtClass).or_else(|e| match e {
        Error::InsufficientRaters(1) => Ok(1),
        other => Err(other),
    })?;
    if split.fold_of.len() != cases.len() {
        return Err(Error::LengthMismatch(split.fold_of.len(), cases.len()));
    }
    let per_rater = (0..n)
        .map(|r| fold_fits(cases, &[r], split))
        .collect::<Result<Vec<_>>>()?;
    let everyone: Vec<usize> = (0..n).collect();
    Ok(BiasThresholds {
        per_rater,
        pooled: fold_fits(cases, &everyone, split)?,
    })
}

fn class_rows(cases: &[StudyCase], n: usize, opts: &StudyOptions) -> Result<Vec<ComparisonRow>> {
    let labels = hospital_labels(cases)?;
    let split = FoldSplit::stratified(cases, opts.split_seed)?;
    let model_max: Vec<f64> = cases
        .iter()
        .map(|c| c.model_shares().map(|s| s.max_share))
        .collect::<Result<_>>()?;
    let folds: [Vec<usize>; 2] = [split.members(0).collect(), split.members(1).collect()];

    let mut rows = Vec::with_capacity(n + 1);
    let (mut all_r, mut all_m) = (Vec::new(), Vec::new());
    let mut pooled_fold = [(0.0, 0.0, 0usize); 2];
    for r in 0..n {
        let others: Vec<usize> = (0..n).filter(|i| *i != r).collect();
        let mut rater_ok = vec![0.0; cases.len()];
        let mut model_ok = vec![0.0; cases.len()];
        for test in 0..2 {
            let train = &folds[1 - test];
            let rater_fit = fit_raters(cases, &[r], train)?.thresholds;
            let panel_fit = fit_raters(cases, &others, train)?.thresholds;
            for &c in &folds[test] {
                let rc = ct_class(cases[c].rater_shares[r].max(), &rater_fit);
                let mc = ct_class(model_max[c], &panel_fit);
                rater_ok[c] = (rc == labels[c]) as u8 as f64;
                model_ok[c] = (mc == labels[c]) as u8 as f64;
            }
        }
        let fold_acc = |f: usize| {
            let idx = &folds[f];
            let m = idx.len().max(1) as f64;
            FoldAccuracy {
                rater: idx.iter().map(|c| rater_ok[*c]).sum::<f64>() / m,
                model: idx.iter().map(|c| model_ok[*c]).sum::<f64>() / m,
                cases: idx.len(),
            }
        };
        let mut row = comparison(rater_label(r), &rater_ok, &model_ok, opts)?;
        let fa = [fold_acc(0), fold_acc(1)];
        for f in 0..2 {
            pooled_fold[f].0 += fa[f].rater * fa[f].cases as f64;
            pooled_fold[f].1 += fa[f].model * fa[f].cases as f64;
            pooled_fold[f].2 += fa[f].cases;
        }
        row.folds = Some(fa);
        rows.push(row);
        all_r.extend(rater_ok);
        all_m.extend(model_ok);
    }
    let mut pooled = comparison(POOLED_LABEL.to_string(), &all_r, &all_m, opts)?;
    pooled.folds = Some(pooled_fold.map(|(r, m, c)| FoldAccuracy {
        rater: r / c.max(1) as f64,
        model: m / c.max(1) as f64,
        cases: c,
    }));
    rows.push(pooled);
    Ok(rows)
}

/// Follow-up comparison for one patient's consecutive scans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsPair {
    pub patient_id: String,
    pub before: String,
    pub after: String,
    pub model_before: f64,
    pub model_after: f64,
    pub model: Dynamics,
    pub raters: Vec<Dynamics>,
    /// Plurality of the raters; `None` when tied.
    pub panel: Option<Dynamics>,
    pub model_agrees: Option<bool>,
}

/// Lung-volume weighted total from per-lung estimates.
fn rater_total(s: &LungShares, report: &LesionShareReport) -> f64 {
    let (l, r) = (report.left_lung_voxels as f64, report.right_lung_voxels as f64);
    (s.left * l + s.right * r) / (l + r)
}

/// Pairs consecutive scans of each patient (ordered by scan date) and
/// classifies the change in total lesion share for the model and every rater.
pub fn dynamics_study(cases: &[StudyCase], stability_band: f64) -> Result<Vec<DynamicsPair>> {
    let mut by_patient: BTreeMap<&str, Vec<&StudyCase>> = BTreeMap::new();
    for c in cases {
        if let (Some(p), Some(_)) = (&c.patient_id, &c.scan_date) {
            by_patient.entry(p.as_str()).or_default().push(c);
        }
    }
    let mut out = Vec::new();
    for (patient, mut scans) in by_patient {
        scans.sort_by(|a, b| a.scan_date.cmp(&b.scan_date).then(a.case_id.cmp(&b.case_id)));
        for pair in scans.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let (ra, rb) = (a.model_shares()?, b.model_shares()?);
            let model = dynamics(ra.total_share, rb.total_share, stability_band);
            let raters: Vec<Dynamics> = a
                .rater_shares
                .iter()
                .zip(&b.rater_shares)
                .map(|(sa, sb)| {
                    dynamics(rater_total(sa, &ra), rater_total(sb, &rb), stability_band)
                })
                .collect();
            let panel = plurality(&raters);
            out.push(DynamicsPair {
                patient_id: patient.to_string(),
                before: a.case_id.clone(),
                after: b.case_id.clone(),
                model_before: ra.total_share,
                model_after: rb.total_share,
                model,
                model_agrees: panel.map(|p| p == model),
                raters,
                panel,
            });
        }
    }
    Ok(out)
}

fn plurality(votes: &[Dynamics]) -> Option<Dynamics> {
    let options = [Dynamics::PositiveResponse, Dynamics::Progression, Dynamics::Stable];
    let counts: Vec<usize> = options
        .iter()
        .map(|o| votes.iter().filter(|v| *v == o).count())
        .collect();
    let best = *counts.iter().max()?;
    if best == 0 || counts.iter().filter(|c| **c == best).count() > 1 {
        return None;
    }
    options.iter().zip(&counts).find(|(_, c)| **c == best).map(|(o, _)| *o)
}

/// `{:.prec$}` without a sign on values that round to zero.
fn fixed(v: f64, prec: usize) -> String {
    let s = format!("{v:.prec$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

/// Fixed-width text rendering of comparison rows.
pub fn render_rows(rows: &[ComparisonRow]) -> String {
    let with_me = rows.iter().any(|r| r.rater_me.is_some());
    let with_folds = rows.iter().any(|r| r.folds.is_some());
    let mut s = String::new();
    let _ = write!(s, "{:<12} {:>17} {:>17}", "", "rater", "model");
    if with_me {
        let _ = write!(s, " {:>8} {:>8}", "rater_me", "model_me");
    }
    if with_folds {
        let _ = write!(s, " {:>13} {:>13}", "fold1 r/m", "fold2 r/m");
    }
    let _ = writeln!(s, " {:>6} {:>8}", "cases", "p_value");
    for r in rows {
        let _ = write!(
            s,
            "{:<12} {:>17} {:>17}",
            r.rater,
            format!("{}({})", fixed(r.rater_mean, 4), fixed(r.rater_std, 4)),
            format!("{}({})", fixed(r.model_mean, 4), fixed(r.model_std, 4))
        );
        if with_me {
            let me = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| fixed(v, 4));
            let _ = write!(s, " {:>8} {:>8}", me(r.rater_me), me(r.model_me));
        }
        if let Some(f) = &r.folds {
            for fold in f {
                let _ = write!(s, " {:>13}", format!("{:.3}/{:.3}", fold.rater, fold.model));
            }
        }
        let _ = writeln!(s, " {:>6} {:>8}", r.cases, fixed(r.p_value, 6));
    }
    s
}
