//! Lesion share, CT severity classes, threshold fitting and follow-up
//! dynamics.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Spacing};

/// Lesion burden relative to lung volume, per lung and overall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionShareReport {
    pub left_share: f64,
    pub right_share: f64,
    pub total_share: f64,
    /// `max(left_share, right_share)`, the input to CT classification.
    pub max_share: f64,
    pub left_lesion_voxels: usize,
    pub right_lesion_voxels: usize,
    pub left_lung_voxels: usize,
    pub right_lung_voxels: usize,
    pub lesion_voxels: usize,
    pub lung_voxels: usize,
    pub lesion_ml: f64,
    pub lung_ml: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-lung and total share of lesion voxels. Lesion voxels outside both
/// lungs are ignored.
pub fn lesion_share(
    lesion: &BinaryMask,
    left_lung: &BinaryMask,
    right_lung: &BinaryMask,
    spacing: Spacing,
) -> Result<LesionShareReport> {
    let dims = lesion.dims();
    dims.ensure_same(left_lung.dims())?;
    dims.ensure_same(right_lung.dims())?;
    let (mut ll, mut rl, mut lles, mut rles) = (0usize, 0usize, 0usize, 0usize);
    for ((les, l), r) in lesion.bits().iter().zip(left_lung.bits()).zip(right_lung.bits()) {
        match (*l, *r) {
            (true, true) => return Err(Error::OverlappingLungs),
            (true, false) => {
                ll += 1;
                lles += *les as usize;
            }
            (false, true) => {
                rl += 1;
                rles += *les as usize;
            }
            (false, false) => {}
        }
    }
    let lung = ll + rl;
    if lung == 0 {
        return Err(Error::EmptyLungs);
    }
    let (left_share, right_share) = (ratio(lles, ll), ratio(rles, rl));
    let ml = spacing.voxel_ml();
    Ok(LesionShareReport {
        left_share,
        right_share,
        total_share: ratio(lles + rles, lung),
        max_share: left_share.max(right_share),
        left_lesion_voxels: lles,
        right_lesion_voxels: rles,
        left_lung_voxels: ll,
        right_lung_voxels: rl,
        lesion_voxels: lles + rles,
        lung_voxels: lung,
        lesion_ml: (lles + rles) as f64 * ml,
        lung_ml: lung as f64 * ml,
    })
}

/// Severity grade by parenchymal involvement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CtClass {
    CT0,
    CT1,
    CT2,
    CT3,
    CT4,
}

impl CtClass {
    pub const ALL: [CtClass; 5] = [CtClass::CT0, CtClass::CT1, CtClass::CT2, CtClass::CT3, CtClass::CT4];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for CtClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CT{}", self.index())
    }
}

impl FromStr for CtClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s.trim().to_ascii_uppercase().replace('-', "");
        match digits.strip_prefix("CT").unwrap_or(&digits) {
            "0" => Ok(CtClass::CT0),
            "1" => Ok(CtClass::CT1),
            "2" => Ok(CtClass::CT2),
            "3" => Ok(CtClass::CT3),
            "4" => Ok(CtClass::CT4),
            _ => Err(Error::InvalidConfig(format!("unknown CT class `{s}`"))),
        }
    }
}

/// Upper share boundaries of CT1 and CT2, and the lower boundary of CT4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtThresholds {
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
}

impl Default for CtThresholds {
    fn default() -> Self {
        Self {
            t2: 0.25,
            t3: 0.50,
            t4: 0.75,
        }
    }
}

impl CtThresholds {
    pub fn new(t2: f64, t3: f64, t4: f64) -> Result<Self> {
        if !(0.0 < t2 && t2 < t3 && t3 < t4 && t4 <= 1.0) {
            return Err(Error::InvalidConfig(format!("CT thresholds ({t2}, {t3}, {t4})")));
        }
        Ok(Self { t2, t3, t4 })
    }
}

/// `0` is CT0, `(0, t2]` CT1, `(t2, t3]` CT2, `(t3, t4)` CT3, `[t4, 1]` CT4.
pub fn ct_class(share: f64, thr: &CtThresholds) -> CtClass {
    if share <= 0.0 {
        CtClass::CT0
    } else if share <= thr.t2 {
        CtClass::CT1
    } else if share <= thr.t3 {
        CtClass::CT2
    } else if share < thr.t4 {
        CtClass::CT3
    } else {
        CtClass::CT4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub thresholds: CtThresholds,
    pub accuracy: f64,
}

/// Candidate boundaries with the open gap each one sits in: midpoints
/// between consecutive distinct positive shares, a sentinel below the
/// smallest and one above the largest (when it is below 1).
fn candidate_gaps(shares: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut distinct: Vec<f64> = shares.iter().copied().filter(|s| *s > 0.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let (Some(&lo), Some(&hi)) = (distinct.first(), distinct.last()) else {
        return vec![(0.5, 0.0, 1.0)];
    };
    let mut out = vec![(lo / 2.0, 0.0, lo)];
    out.extend(distinct.windows(2).map(|w| ((w[0] + w[1]) / 2.0, w[0], w[1])));
    if hi < 1.0 {
        out.push(((hi + 1.0) / 2.0, hi, 1.0));
    }
    out
}

/// Candidate boundaries: midpoints between consecutive distinct shares, a
/// sentinel below the smallest positive share and one above the largest.
pub fn threshold_candidates(shares: &[f64]) -> Vec<f64> {
    candidate_gaps(shares).into_iter().map(|(c, _, _)| c).collect()
}

/// Exhaustive search for the `(t2, t3, t4)` maximizing accuracy of
/// [`ct_class`] against `labels`; ties keep the lexicographically smallest
/// triple.
///
/// Thresholds may share a gap, which leaves the classes between them empty.
/// Coinciding thresholds are spread evenly across their gap (thirds or
/// quarters) so the triple stays strictly increasing; no share lies in a
/// gap, so this changes no classification.
pub fn fit_ct_thresholds(shares: &[f64], labels: &[CtClass]) -> Result<ThresholdFit> {
    if shares.len() != labels.len() {
        return Err(Error::LengthMismatch(shares.len(), labels.len()));
    }
    if shares.len() < 2 {
        return Err(Error::DegenerateLabels(format!("{} observations", shares.len())));
    }
    let first = labels[0];
    if labels.iter().all(|l| *l == first) {
        return Err(Error::DegenerateLabels(format!("every label is {first}")));
    }
    let gaps = candidate_gaps(shares);
    let cands: Vec<f64> = gaps.iter().map(|g| g.0).collect();
    let m = cands.len();

    // below[c][i]: observations with label c and 0 < share < cands[i].
    // No share equals a candidate, so strict and non-strict agree.
    let mut below = vec![vec![0usize; m + 1]; 5];
    let mut total = [0usize; 5];
    let mut zero_correct = 0usize;
    for (s, l) in shares.iter().zip(labels) {
        if *s <= 0.0 {
            zero_correct += (*l == CtClass::CT0) as usize;
            continue;
        }
        total[l.index()] += 1;
        let pos = cands.partition_point(|c| c < s);
        // contributes to below[..][i] for every i > pos - 1, i.e. cands[i] > s
        below[l.index()][pos] += 1;
    }
    for row in below.iter_mut() {
        for i in 1..=m {
            row[i] += row[i - 1];
        }
    }
    // count of label c with share < cands[i] is below[c][i]
    let lt = |c: CtClass, i: usize| below[c.index()][i];

    let mut best: Option<(usize, (usize, usize, usize))> = None;
    for i in 0..m {
        for j in i..m {
            for k in j..m {
                let correct = lt(CtClass::CT1, i)
                    + (lt(CtClass::CT2, j) - lt(CtClass::CT2, i))
                    + (lt(CtClass::CT3, k) - lt(CtClass::CT3, j))
                    + (total[CtClass::CT4.index()] - lt(CtClass::CT4, k));
                if best.is_none_or(|(b, _)| correct > b) {
                    best = Some((correct, (i, j, k)));
                }
            }
        }
    }
    let (correct, (i, j, k)) = best.expect("at least one candidate");
    let at = |g: usize, q: f64| gaps[g].1 + (gaps[g].2 - gaps[g].1) * q;
    let (t2, t3, t4) = match (i == j, j == k) {
        (false, false) => (cands[i], cands[j], cands[k]),
        (true, false) => (at(i, 1.0 / 3.0), at(i, 2.0 / 3.0), cands[k]),
        (false, true) => (cands[i], at(j, 1.0 / 3.0), at(j, 2.0 / 3.0)),
        (true, true) => (at(i, 0.25), at(i, 0.5), at(i, 0.75)),
    };
    Ok(ThresholdFit {
        thresholds: CtThresholds { t2, t3, t4 },
        accuracy: (correct + zero_correct) as f64 / shares.len() as f64,
    })
}

/// Splits cases into two folds stratified by label: within each label the
/// cases are shuffled with a seeded ChaCha8 generator, then dealt
/// alternately, continuing the alternation across labels.
pub fn stratified_two_fold_split<T: Clone>(
    case_ids: &[T],
    labels: &[CtClass],
    rng_seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    if case_ids.len() != labels.len() {
        return Err(Error::LengthMismatch(case_ids.len(), labels.len()));
    }
    if case_ids.len() < 2 {
        return Err(Error::InvalidConfig("a split needs at least 2 cases".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut fold_of = vec![0u8; case_ids.len()];
    let mut dealt = 0usize;
    for class in CtClass::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|i| labels[*i] == class).collect();
        members.shuffle(&mut rng);
        for idx in members {
            fold_of[idx] = (dealt % 2) as u8;
            dealt += 1;
        }
    }
    let pick = |f: u8| {
        case_ids
            .iter()
            .zip(&fold_of)
            .filter(|(_, g)| **g == f)
            .map(|(id, _)| id.clone())
            .collect()
    };
    Ok((pick(0), pick(1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dynamics {
    PositiveResponse,
    Progression,
    Stable,
}

impl Dynamics {
    pub fn reversed(self) -> Self {
        match self {
            Dynamics::PositiveResponse => Dynamics::Progression,
            Dynamics::Progression => Dynamics::PositiveResponse,
            Dynamics::Stable => Dynamics::Stable,
        }
    }
}

impl fmt::Display for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dynamics::PositiveResponse => "positive_response",
            Dynamics::Progression => "progression",
            Dynamics::Stable => "stable",
        })
    }
}

pub const DEFAULT_STABILITY_BAND: f64 = 0.01;

/// Absolute tolerance used when comparing a share change against the band,
/// so that decimal inputs such as 0.20 -> 0.21 sit exactly on the edge.
const BAND_EPS: f64 = 1e-12;

/// Stable when the absolute change is strictly below `stability_band`.
pub fn dynamics(share_before: f64, share_after: f64, stability_band: f64) -> Dynamics {
    let delta = share_after - share_before;
    if delta.abs() < stability_band - BAND_EPS {
        Dynamics::Stable
    } else if delta > 0.0 {
        Dynamics::Progression
    } else {
        Dynamics::PositiveResponse
    }
}

/// Nearest multiple of `step`, halves rounding up.
pub fn quantize_share(share: f64, step: f64) -> f64 {
    let q = share / step;
    // absorb representation error such as 0.125 / 0.05 = 2.4999999999999996
    let n = (q + 0.5 + 1e-9).floor();
    let inv = (1.0 / step).round();
    if (inv * step - 1.0).abs() < 1e-12 {
        n / inv
    } else {
        n * step
    }
}
