//! How per-model lesion probabilities enter the pipeline.
//!
//! Trained networks run outside this crate and hand over probability volumes
//! as sidecar files listed in a tab-separated manifest:
//!
//! ```text
//! # model_id   family   header
//! resnet_00    resnet   preds/resnet_00.hdr
//! ref          reference   -
//! ```
//!
//! A path of `-` marks a built-in model computed from the input scan.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::sidecar::{read_raw_volume, RawVolume};
use crate::labeling::{label_components, remove_small_components};
use crate::volume::{BinaryMask, CtVolume, Dims, ProbabilityVolume, UnitState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    ResNet,
    Dpn,
    Fpn,
    Lung,
    Reference,
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "resnet" => Ok(ModelFamily::ResNet),
            "dpn" => Ok(ModelFamily::Dpn),
            "fpn" => Ok(ModelFamily::Fpn),
            "lung" => Ok(ModelFamily::Lung),
            "reference" => Ok(ModelFamily::Reference),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelFamily::ResNet => "resnet",
            ModelFamily::Dpn => "dpn",
            ModelFamily::Fpn => "fpn",
            ModelFamily::Lung => "lung",
            ModelFamily::Reference => "reference",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelPrediction {
    pub model_id: String,
    pub family: ModelFamily,
    pub prob: ProbabilityVolume,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub model_id: String,
    pub family: ModelFamily,
    /// `None` for built-in models.
    pub header: Option<PathBuf>,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::header(path, format!("cannot read manifest: {e}")))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        let [model_id, family, header] = cols[..] else {
            return Err(Error::header(
                path,
                format!("line {}: expected 3 tab-separated columns", lineno + 1),
            ));
        };
        if model_id.is_empty() {
            return Err(Error::header(path, format!("line {}: empty model id", lineno + 1)));
        }
        let header = match header {
            "-" => None,
            p => Some(base.join(p)),
        };
        entries.push(ManifestEntry {
            model_id: model_id.to_string(),
            family: family.parse()?,
            header,
        });
    }
    Ok(entries)
}

/// Loads every entry, computing built-in entries with `builtin`, and checks
/// that all predictions share one geometry.
pub fn resolve_manifest(
    entries: &[ManifestEntry],
    mut builtin: impl FnMut(&ManifestEntry) -> Result<ProbabilityVolume>,
) -> Result<Vec<ModelPrediction>> {
    let mut out: Vec<ModelPrediction> = Vec::with_capacity(entries.len());
    for entry in entries {
        let prob = match &entry.header {
            Some(h) => match read_raw_volume(h)? {
                RawVolume::Prob(p, _) => p,
                RawVolume::Mask(m, _) => ProbabilityVolume::from_mask(&m),
                RawVolume::Ct(_) => {
                    return Err(Error::header(h, "model output must be a prob or mask volume"))
                }
            },
            None => builtin(entry)?,
        };
        if let Some(first) = out.first() {
            first.prob.dims().ensure_same(prob.dims())?;
        }
        out.push(ModelPrediction {
            model_id: entry.model_id.clone(),
            family: entry.family,
            prob,
        });
    }
    Ok(out)
}

/// Loads a manifest whose entries all point at sidecar files.
pub fn load_predictions(manifest: &Path) -> Result<Vec<ModelPrediction>> {
    let entries = read_manifest(manifest)?;
    resolve_manifest(&entries, |e| {
        Err(Error::header(
            manifest,
            format!("built-in model `{}` needs an input scan", e.model_id),
        ))
    })
}

pub fn group_by_family(preds: &[ModelPrediction]) -> BTreeMap<ModelFamily, Vec<&ModelPrediction>> {
    let mut map: BTreeMap<ModelFamily, Vec<&ModelPrediction>> = BTreeMap::new();
    for p in preds {
        map.entry(p.family).or_default().push(p);
    }
    map
}

/// Dual-threshold lesion candidate extraction used as the built-in model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionGrowConfig {
    pub lower: f64,
    pub upper: f64,
    pub restrict_to_lungs: bool,
    pub min_component_voxels: usize,
}

impl Default for RegionGrowConfig {
    fn default() -> Self {
        Self {
            lower: -640.0,
            upper: -240.0,
            restrict_to_lungs: true,
            min_component_voxels: 1,
        }
    }
}

impl RegionGrowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lower < self.upper) {
            return Err(Error::InvalidConfig(format!(
                "region grow lower {} must be below upper {}",
                self.lower, self.upper
            )));
        }
        if self.min_component_voxels < 1 {
            return Err(Error::InvalidConfig("min_component_voxels must be >= 1".into()));
        }
        Ok(())
    }
}

/// Marks voxels with `lower <= HU <= upper` (inside the lungs when
/// configured), then drops 26-connected components smaller than
/// `min_component_voxels`.
pub fn reference_region_grow(
    volume: &CtVolume,
    lungs: &BinaryMask,
    cfg: &RegionGrowConfig,
) -> Result<ProbabilityVolume> {
    cfg.validate()?;
    volume.require_state(UnitState::Hounsfield)?;
    volume.dims().ensure_same(lungs.dims())?;
    let candidates = BinaryMask::new(
        volume.dims(),
        volume
            .voxels()
            .iter()
            .zip(lungs.bits())
            .map(|(hu, lung)| {
                (cfg.lower..=cfg.upper).contains(hu) && (*lung || !cfg.restrict_to_lungs)
            })
            .collect(),
    )?;
    let kept = remove_small_components(&candidates, cfg.min_component_voxels);
    Ok(ProbabilityVolume::from_mask(&kept))
}

/// Upper HU bound of the built-in lung extractor.
pub const BUILTIN_LUNG_MAX_HU: f64 = -240.0;

/// Built-in lung model: voxels at or below [`BUILTIN_LUNG_MAX_HU`] that form
/// 26-connected components not touching the volume border, which removes
/// the air around the body.
pub fn builtin_lung_mask(volume: &CtVolume) -> Result<BinaryMask> {
    volume.require_state(UnitState::Hounsfield)?;
    let dims = volume.dims();
    let dark = BinaryMask::new(
        dims,
        volume.voxels().iter().map(|hu| *hu <= BUILTIN_LUNG_MAX_HU).collect(),
    )?;
    let comps = label_components(&dark);
    let mut touches = vec![false; comps.sizes.len() + 1];
    for (i, l) in comps.labels.iter().enumerate() {
        if *l == 0 {
            continue;
        }
        let (x, y, z) = dims.coords(i);
        if x == 0 || y == 0 || z == 0 || x + 1 == dims.nx || y + 1 == dims.ny || z + 1 == dims.nz {
            touches[*l as usize] = true;
        }
    }
    BinaryMask::new(
        dims,
        comps.labels.iter().map(|l| *l != 0 && !touches[*l as usize]).collect(),
    )
}

/// Splits a combined lung mask at the x midline: voxels with `x < nx / 2`
/// are the patient's right lung (image left), the rest the left lung.
pub fn split_lungs_at_midline(lungs: &BinaryMask) -> (BinaryMask, BinaryMask) {
    let dims: Dims = lungs.dims();
    let half = dims.nx / 2;
    let left = BinaryMask::from_fn(dims, |x, y, z| x >= half && lungs.get(x, y, z));
    let right = BinaryMask::from_fn(dims, |x, y, z| x < half && lungs.get(x, y, z));
    (left, right)
}
