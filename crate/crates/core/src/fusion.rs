//! Ensemble combination: per-family averaging, unanimous voting, the
//! five-rule confidence score, random subset search and projection merging.
//!
//! Probabilities are `f32`; thresholds are held as `f64` and compared in the
//! `f32` domain (`p > thr as f32`) so that a stored probability equal to a
//! threshold constant never passes a strict comparison.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{parse_f64, parse_kv};
use crate::error::{Error, Result};
use crate::evaluation::metrics::dice;
use crate::models::{ModelFamily, ModelPrediction};
use crate::volume::{BinaryMask, Dims, ProbabilityVolume};

const CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub resnet_vote_thr: f64,
    pub dpn_pos_thr: f64,
    pub fpn_pos_thr: f64,
    pub dpn_neg_thr: f64,
    pub fpn_neg_thr: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            resnet_vote_thr: 0.5,
            dpn_pos_thr: 0.7,
            fpn_pos_thr: 0.85,
            dpn_neg_thr: 0.3,
            fpn_neg_thr: 0.15,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        let ok = self.resnet_vote_thr > 0.0
            && self.resnet_vote_thr < 1.0
            && in_unit(self.dpn_neg_thr)
            && in_unit(self.dpn_pos_thr)
            && self.dpn_neg_thr < self.dpn_pos_thr
            && in_unit(self.fpn_neg_thr)
            && in_unit(self.fpn_pos_thr)
            && self.fpn_neg_thr < self.fpn_pos_thr;
        if !ok {
            return Err(Error::InvalidConfig(format!("fusion thresholds {self:?}")));
        }
        Ok(())
    }

    /// Parses a `key=value` document; absent keys keep their defaults.
    pub fn from_kv_str(text: &str, source: &Path) -> Result<Self> {
        let kv = parse_kv(text, source)?;
        let mut cfg = Self::default();
        for (k, v) in &kv {
            let slot = match k.as_str() {
                "resnet_vote_thr" => &mut cfg.resnet_vote_thr,
                "dpn_pos_thr" => &mut cfg.dpn_pos_thr,
                "fpn_pos_thr" => &mut cfg.fpn_pos_thr,
                "dpn_neg_thr" => &mut cfg.dpn_neg_thr,
                "fpn_neg_thr" => &mut cfg.fpn_neg_thr,
                _ => return Err(Error::header(source, format!("unknown key `{k}`"))),
            };
            *slot = parse_f64(source, k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::header(path, format!("cannot read fusion config: {e}")))?;
        Self::from_kv_str(&text, path)
    }

    pub fn to_kv_string(&self) -> String {
        format!(
            "resnet_vote_thr={}\ndpn_pos_thr={}\nfpn_pos_thr={}\ndpn_neg_thr={}\nfpn_neg_thr={}\n",
            self.resnet_vote_thr, self.dpn_pos_thr, self.fpn_pos_thr, self.dpn_neg_thr, self.fpn_neg_thr
        )
    }
}

fn common_dims(probs: &[&ProbabilityVolume]) -> Result<Dims> {
    let first = probs.first().ok_or(Error::EmptyEnsemble)?.dims();
    for p in &probs[1..] {
        first.ensure_same(p.dims())?;
    }
    Ok(first)
}

/// Voxelwise arithmetic mean.
pub fn mean_ensemble(probs: &[&ProbabilityVolume]) -> Result<ProbabilityVolume> {
    let dims = common_dims(probs)?;
    let k = probs.len() as f64;
    let mut out = vec![0f32; dims.len()];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let base = c * CHUNK;
        for (j, slot) in chunk.iter_mut().enumerate() {
            let i = base + j;
            let sum: f64 = probs.iter().map(|p| p.probs()[i] as f64).sum();
            *slot = ((sum / k) as f32).clamp(0.0, 1.0);
        }
    });
    Ok(ProbabilityVolume::new_unchecked(dims, out))
}

/// Positive where every model is strictly above `thr`.
pub fn unanimous_vote(probs: &[&ProbabilityVolume], thr: f64) -> Result<BinaryMask> {
    let dims = common_dims(probs)?;
    let thr = thr as f32;
    let mut bits = vec![false; dims.len()];
    bits.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let base = c * CHUNK;
        for (j, slot) in chunk.iter_mut().enumerate() {
            *slot = probs.iter().all(|p| p.probs()[base + j] > thr);
        }
    });
    BinaryMask::new(dims, bits)
}

/// Five-rule confidence score; a voxel is positive when its score is > 0.
///
/// +1 when every ResNet model is above `resnet_vote_thr`, +1 when the DPN
/// mean is above `dpn_pos_thr`, +1 when the FPN mean is above `fpn_pos_thr`,
/// -1 when the DPN mean is below `dpn_neg_thr`, -1 when the FPN mean is
/// below `fpn_neg_thr`.
pub fn score_fusion(
    resnet: &[&ProbabilityVolume],
    dpn_mean: &ProbabilityVolume,
    fpn_mean: &ProbabilityVolume,
    cfg: &FusionConfig,
) -> Result<BinaryMask> {
    let dims = common_dims(resnet)?;
    dims.ensure_same(dpn_mean.dims())?;
    dims.ensure_same(fpn_mean.dims())?;
    let vote = cfg.resnet_vote_thr as f32;
    let (dpn_pos, dpn_neg) = (cfg.dpn_pos_thr as f32, cfg.dpn_neg_thr as f32);
    let (fpn_pos, fpn_neg) = (cfg.fpn_pos_thr as f32, cfg.fpn_neg_thr as f32);
    let (dpn, fpn) = (dpn_mean.probs(), fpn_mean.probs());

    let mut bits = vec![false; dims.len()];
    bits.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let base = c * CHUNK;
        for (j, slot) in chunk.iter_mut().enumerate() {
            let i = base + j;
            let mut score = 0i8;
            if resnet.iter().all(|p| p.probs()[i] > vote) {
                score += 1;
            }
            if dpn[i] > dpn_pos {
                score += 1;
            }
            if fpn[i] > fpn_pos {
                score += 1;
            }
            if dpn[i] < dpn_neg {
                score -= 1;
            }
            if fpn[i] < fpn_neg {
                score -= 1;
            }
            *slot = score > 0;
        }
    });
    BinaryMask::new(dims, bits)
}

/// How [`fuse_predictions`] combined the available models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStrategy {
    /// ResNet vote plus DPN and FPN confidence rules.
    Score,
    /// Mean of every lesion model, positive above 0.5.
    Mean,
}

/// Lesion mask from a mixed set of model outputs. Uses [`score_fusion`] when
/// ResNet, DPN and FPN families are all present; otherwise averages every
/// lesion model (lung models excluded) and keeps voxels above 0.5.
pub fn fuse_predictions(
    preds: &[ModelPrediction],
    cfg: &FusionConfig,
) -> Result<(BinaryMask, FusionStrategy)> {
    let of = |f: ModelFamily| -> Vec<&ProbabilityVolume> {
        preds.iter().filter(|p| p.family == f).map(|p| &p.prob).collect()
    };
    let (resnet, dpn, fpn) = (of(ModelFamily::ResNet), of(ModelFamily::Dpn), of(ModelFamily::Fpn));
    if !resnet.is_empty() && !dpn.is_empty() && !fpn.is_empty() {
        let dpn_mean = mean_ensemble(&dpn)?;
        let fpn_mean = mean_ensemble(&fpn)?;
        return Ok((score_fusion(&resnet, &dpn_mean, &fpn_mean, cfg)?, FusionStrategy::Score));
    }
    let lesion: Vec<&ProbabilityVolume> = preds
        .iter()
        .filter(|p| p.family != ModelFamily::Lung)
        .map(|p| &p.prob)
        .collect();
    let mean = mean_ensemble(&lesion)?;
    Ok((mean.threshold(0.5), FusionStrategy::Mean))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSearchConfig {
    pub pool_size: usize,
    pub subset_size: usize,
    pub sample_count: usize,
    pub rng_seed: u64,
}

impl Default for SubsetSearchConfig {
    fn default() -> Self {
        Self {
            pool_size: 16,
            subset_size: 5,
            sample_count: 1000,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetSearchResult {
    /// Ascending pool indices of the winning subset.
    pub indices: Vec<usize>,
    pub value: f64,
    /// Every draw in order with its objective value.
    pub log: Vec<(Vec<usize>, f64)>,
}

/// Draws `sample_count` random subsets (duplicates across draws allowed),
/// scores each with `objective` and keeps the best; ties go to the earliest
/// draw. NaN objective values never win against a number.
pub fn select_best_subset<T, F>(
    pool: &[T],
    cfg: &SubsetSearchConfig,
    objective: F,
) -> Result<SubsetSearchResult>
where
    T: Sync,
    F: Fn(&[usize]) -> f64 + Sync,
{
    if pool.len() != cfg.pool_size {
        return Err(Error::InvalidConfig(format!(
            "pool has {} members, config says {}",
            pool.len(),
            cfg.pool_size
        )));
    }
    if cfg.subset_size == 0 || cfg.subset_size > cfg.pool_size {
        return Err(Error::InvalidConfig(format!(
            "subset size {} for pool of {}",
            cfg.subset_size, cfg.pool_size
        )));
    }
    if cfg.sample_count == 0 {
        return Err(Error::EmptySample);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let draws: Vec<Vec<usize>> = (0..cfg.sample_count)
        .map(|_| {
            let mut idx = rand::seq::index::sample(&mut rng, cfg.pool_size, cfg.subset_size).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect();
    let values: Vec<f64> = draws.par_iter().map(|d| objective(d)).collect();

    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] || (values[best].is_nan() && !v.is_nan()) {
            best = i;
        }
    }
    Ok(SubsetSearchResult {
        indices: draws[best].clone(),
        value: values[best],
        log: draws.into_iter().zip(values).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionWeights {
    pub axial: f64,
    pub coronal: f64,
    pub sagittal: f64,
}

impl ProjectionWeights {
    pub fn new(axial: f64, coronal: f64, sagittal: f64) -> Result<Self> {
        let w = Self {
            axial,
            coronal,
            sagittal,
        };
        let nonneg = [axial, coronal, sagittal].iter().all(|v| *v >= 0.0);
        if !nonneg || ((axial + coronal + sagittal) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("projection weights {w:?}")));
        }
        Ok(w)
    }

    pub fn equal() -> Self {
        Self {
            axial: 1.0 / 3.0,
            coronal: 1.0 / 3.0,
            sagittal: 1.0 / 3.0,
        }
    }
}

/// Convex combination of the three projection ensembles.
pub fn merge_projections(
    axial: &ProbabilityVolume,
    coronal: &ProbabilityVolume,
    sagittal: &ProbabilityVolume,
    w: &ProjectionWeights,
) -> Result<ProbabilityVolume> {
    let dims = axial.dims();
    dims.ensure_same(coronal.dims())?;
    dims.ensure_same(sagittal.dims())?;
    let out = axial
        .probs()
        .iter()
        .zip(coronal.probs())
        .zip(sagittal.probs())
        .map(|((a, c), s)| {
            let v = w.axial * *a as f64 + w.coronal * *c as f64 + w.sagittal * *s as f64;
            (v as f32).clamp(0.0, 1.0)
        })
        .collect();
    Ok(ProbabilityVolume::new_unchecked(dims, out))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionFit {
    pub weights: ProjectionWeights,
    pub dice: f64,
    pub evaluated: usize,
}

/// Exhaustive search over the simplex grid with spacing `grid_step` for the
/// weights whose merge, binarized strictly above `binarize_thr`, has the
/// highest DSC against `truth`. Ties keep the lexicographically smallest
/// `(axial, coronal, sagittal)`.
pub fn fit_projection_weights(
    axial: &ProbabilityVolume,
    coronal: &ProbabilityVolume,
    sagittal: &ProbabilityVolume,
    truth: &BinaryMask,
    binarize_thr: f64,
    grid_step: f64,
) -> Result<ProjectionFit> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::InvalidConfig(format!("grid step {grid_step}")));
    }
    let n = (1.0 / grid_step).round();
    if (n * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "grid step {grid_step} does not divide 1"
        )));
    }
    let n = n as usize;
    axial.dims().ensure_same(truth.dims())?;
    let thr = binarize_thr as f32;

    let mut best: Option<ProjectionFit> = None;
    let mut evaluated = 0;
    for i in 0..=n {
        for j in 0..=(n - i) {
            let k = n - i - j;
            let w = ProjectionWeights {
                axial: i as f64 / n as f64,
                coronal: j as f64 / n as f64,
                sagittal: k as f64 / n as f64,
            };
            let merged = merge_projections(axial, coronal, sagittal, &w)?;
            let d = dice(&merged.threshold(thr), truth)?;
            evaluated += 1;
            if best.is_none_or(|b| d > b.dice) {
                best = Some(ProjectionFit {
                    weights: w,
                    dice: d,
                    evaluated: 0,
                });
            }
        }
    }
    let mut fit = best.expect("grid has at least one point");
    fit.evaluated = evaluated;
    Ok(fit)
}
