//! Seeded synthetic data: ellipsoid CT phantoms, simulated model outputs,
//! simulated raters and a byte-level DICOM slice encoder.
//!
//! All randomness comes from ChaCha8 seeded with `seed_from_u64`, so output
//! is identical across runs and platforms.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clinical::quantize_share;
use crate::error::{Error, Result};
use crate::io::dicom::{tags, Tag, EXPLICIT_VR_LITTLE_ENDIAN};
use crate::io::sidecar::{write_raw_volume, RawVolume};
use crate::models::ModelFamily;
use crate::volume::{BinaryMask, CtVolume, Dims, ProbabilityVolume, Spacing, UnitState};

pub const PHANTOM_SLOPE: f64 = 1.0;
pub const PHANTOM_INTERCEPT: f64 = -1024.0;
pub const SHARE_STEP: f64 = 0.05;

/// Axis-aligned ellipsoid in voxel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub radii: [f64; 3],
}

impl Ellipsoid {
    pub fn new(center: [f64; 3], radii: [f64; 3]) -> Self {
        Self { center, radii }
    }

    /// True when the voxel center lies inside. Any non-positive radius
    /// makes the ellipsoid empty.
    pub fn contains(&self, x: usize, y: usize, z: usize) -> bool {
        if self.radii.iter().any(|r| *r <= 0.0) {
            return false;
        }
        let p = [x as f64, y as f64, z as f64];
        (0..3)
            .map(|i| {
                let d = (p[i] - self.center[i]) / self.radii[i];
                d * d
            })
            .sum::<f64>()
            <= 1.0
    }

    pub fn voxelize(&self, dims: Dims) -> BinaryMask {
        BinaryMask::from_fn(dims, |x, y, z| self.contains(x, y, z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesionSpec {
    pub lung: Side,
    pub shape: Ellipsoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: Dims,
    pub spacing: Spacing,
    pub background_hu: f64,
    pub lung_hu: f64,
    pub lesion_hu: f64,
    pub left_lung: Ellipsoid,
    pub right_lung: Ellipsoid,
    pub lesions: Vec<LesionSpec>,
    /// Standard deviation of additive Gaussian noise in HU; 0 disables it.
    pub noise_hu: f64,
    pub rng_seed: u64,
}

impl PhantomSpec {
    /// Two lungs side by side with one lesion in each. The patient's right
    /// lung sits at low x.
    pub fn standard(dims: Dims) -> Self {
        let (nx, ny, nz) = (dims.nx as f64, dims.ny as f64, dims.nz as f64);
        let lung_r = [nx * 0.18, ny * 0.3, nz * 0.38];
        let cy = (ny - 1.0) / 2.0;
        let cz = (nz - 1.0) / 2.0;
        let right = Ellipsoid::new([nx * 0.28, cy, cz], lung_r);
        let left = Ellipsoid::new([nx * 0.72, cy, cz], lung_r);
        let lesion = |lung: &Ellipsoid, side| LesionSpec {
            lung: side,
            shape: Ellipsoid::new(
                [lung.center[0], lung.center[1] + lung_r[1] * 0.3, lung.center[2]],
                [lung_r[0] * 0.45, lung_r[1] * 0.4, lung_r[2] * 0.45],
            ),
        };
        Self {
            dims,
            spacing: Spacing::new(0.8, 0.8, 1.5),
            background_hu: 20.0,
            lung_hu: -800.0,
            lesion_hu: -450.0,
            left_lung: left,
            right_lung: right,
            lesions: vec![lesion(&right, Side::Right), lesion(&left, Side::Left)],
            noise_hu: 0.0,
            rng_seed: 0,
        }
    }

    fn lung(&self, side: Side) -> &Ellipsoid {
        match side {
            Side::Left => &self.left_lung,
            Side::Right => &self.right_lung,
        }
    }
}

/// Exact voxel counts of a phantom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrueShares {
    pub left_lesion: usize,
    pub left_lung: usize,
    pub right_lesion: usize,
    pub right_lung: usize,
}

impl TrueShares {
    fn ratio(n: usize, d: usize) -> f64 {
        if d == 0 {
            0.0
        } else {
            n as f64 / d as f64
        }
    }

    pub fn left(&self) -> f64 {
        Self::ratio(self.left_lesion, self.left_lung)
    }

    pub fn right(&self) -> f64 {
        Self::ratio(self.right_lesion, self.right_lung)
    }

    pub fn total(&self) -> f64 {
        Self::ratio(self.left_lesion + self.right_lesion, self.left_lung + self.right_lung)
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    /// Raw stored values with slope 1 and intercept -1024.
    pub volume: CtVolume,
    pub left_lung: BinaryMask,
    pub right_lung: BinaryMask,
    pub lesion: BinaryMask,
    pub shares: TrueShares,
}

pub fn make_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.dims.validate()?;
    if !(spec.noise_hu >= 0.0 && spec.noise_hu.is_finite()) {
        return Err(Error::SpecInvalid(format!("noise_hu {}", spec.noise_hu)));
    }
    let dims = spec.dims;
    let left = spec.left_lung.voxelize(dims);
    let right = spec.right_lung.voxelize(dims);
    if left.intersection_count(&right)? > 0 {
        return Err(Error::SpecInvalid("lungs overlap".into()));
    }
    let mut lesion = BinaryMask::empty(dims);
    for (i, l) in spec.lesions.iter().enumerate() {
        let lung = spec.lung(l.lung);
        let m = l.shape.voxelize(dims);
        let inside = m.bits().iter().enumerate().all(|(v, b)| {
            let (x, y, z) = dims.coords(v);
            !*b || lung.contains(x, y, z)
        });
        if !inside {
            return Err(Error::SpecInvalid(format!("lesion {i} extends outside its lung")));
        }
        lesion = lesion.union(&m)?;
    }

    let normal = Normal::new(0.0, spec.noise_hu.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::SpecInvalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let voxels: Vec<f64> = (0..dims.len())
        .map(|i| {
            let base = if lesion.bits()[i] {
                spec.lesion_hu
            } else if left.bits()[i] || right.bits()[i] {
                spec.lung_hu
            } else {
                spec.background_hu
            };
            let hu = if spec.noise_hu > 0.0 {
                (base + normal.sample(&mut rng)).round()
            } else {
                base.round()
            };
            ((hu - PHANTOM_INTERCEPT) / PHANTOM_SLOPE).clamp(i16::MIN as f64, i16::MAX as f64)
        })
        .collect();
    let volume = CtVolume::new(dims, spec.spacing, voxels, UnitState::RawStored)?
        .with_rescale(PHANTOM_SLOPE, PHANTOM_INTERCEPT);
    let shares = TrueShares {
        left_lesion: lesion.intersection_count(&left)?,
        left_lung: left.count(),
        right_lesion: lesion.intersection_count(&right)?,
        right_lung: right.count(),
    };
    Ok(Phantom {
        volume,
        left_lung: left,
        right_lung: right,
        lesion,
        shares,
    })
}

const MODEL_CHUNK: usize = 4096;

/// Probability volume concentrated near 1 on `truth` and near 0 elsewhere:
/// `sigmoid(sharpness * s + e)` with `s = ±1` and `e ~ N(0, 1)`, where `s`
/// is flipped against the truth with probability `error_rate`. An infinite
/// sharpness yields exactly 0 and 1.
///
/// Voxels are generated in fixed chunks, each from its own ChaCha8 stream,
/// so the output does not depend on the thread count.
pub fn simulate_model(truth: &BinaryMask, sharpness: f64, error_rate: f64, rng_seed: u64) -> Result<ProbabilityVolume> {
    if !(sharpness > 0.0) {
        return Err(Error::SpecInvalid(format!("sharpness {sharpness}")));
    }
    if !(0.0..=1.0).contains(&error_rate) {
        return Err(Error::SpecInvalid(format!("error rate {error_rate}")));
    }
    let bits = truth.bits();
    let mut probs = vec![0f32; bits.len()];
    probs
        .par_chunks_mut(MODEL_CHUNK)
        .enumerate()
        .for_each(|(chunk, out)| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(chunk as u64);
            let start = chunk * MODEL_CHUNK;
            for (i, p) in out.iter_mut().enumerate() {
                let flip = rng.random::<f64>() < error_rate;
                let e: f64 = StandardNormal.sample(&mut rng);
                let sign = if bits[start + i] != flip { 1.0 } else { -1.0 };
                let logit = sharpness * sign + e;
                *p = (1.0 / (1.0 + (-logit).exp())) as f32;
            }
        });
    Ok(ProbabilityVolume::new_unchecked(truth.dims(), probs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaterSpec {
    /// Cube dilation radius in voxels; negative values erode.
    pub radius: i32,
    pub share_bias: f64,
    pub flip_rate: f64,
    pub rng_seed: u64,
}

impl Default for RaterSpec {
    fn default() -> Self {
        Self {
            radius: 0,
            share_bias: 1.0,
            flip_rate: 0.0,
            rng_seed: 0,
        }
    }
}

impl RaterSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.flip_rate) {
            return Err(Error::SpecInvalid(format!("flip rate {}", self.flip_rate)));
        }
        if !(self.share_bias >= 0.0 && self.share_bias.is_finite()) {
            return Err(Error::SpecInvalid(format!("share bias {}", self.share_bias)));
        }
        Ok(())
    }
}

/// A rater's mask and share estimate for a case with the given truth.
/// The estimate is `true_share * share_bias`, clamped to [0, 1] and rounded
/// to the nearest 5%.
pub fn simulate_rater(truth: &BinaryMask, true_share: f64, spec: &RaterSpec) -> Result<(BinaryMask, f64)> {
    spec.validate()?;
    let mut mask = match spec.radius {
        0 => truth.clone(),
        r if r > 0 => morph(truth, r as usize, true),
        r => morph(truth, r.unsigned_abs() as usize, false),
    };
    if spec.flip_rate > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
        let dims = mask.dims();
        let bits: Vec<bool> = mask
            .bits()
            .iter()
            .map(|b| *b != (rng.random::<f64>() < spec.flip_rate))
            .collect();
        mask = BinaryMask::new(dims, bits)?;
    }
    let estimate = quantize_share((true_share * spec.share_bias).clamp(0.0, 1.0), SHARE_STEP);
    Ok((mask, estimate))
}

/// Cube dilation (`dilate`) or erosion with the given radius, one axis at a
/// time. Voxels outside the volume count as background.
fn morph(mask: &BinaryMask, radius: usize, dilate: bool) -> BinaryMask {
    let dims = mask.dims();
    let mut cur: Vec<bool> = mask.bits().to_vec();
    let (nx, ny, nz) = (dims.nx, dims.ny, dims.nz);
    let axes = [(nx, 1, ny * nz), (ny, nx, nx * nz), (nz, nx * ny, nx * ny)];
    for (axis, (len, stride, lines)) in axes.into_iter().enumerate() {
        let mut next = vec![false; cur.len()];
        let mut prefix = vec![0usize; len + 1];
        for line in 0..lines {
            let base = match axis {
                0 => line * nx,
                1 => (line / nx) * nx * ny + line % nx,
                _ => line,
            };
            for i in 0..len {
                prefix[i + 1] = prefix[i] + cur[base + i * stride] as usize;
            }
            for i in 0..len {
                let lo = i.saturating_sub(radius);
                let hi = (i + radius + 1).min(len);
                let set = prefix[hi] - prefix[lo];
                next[base + i * stride] = if dilate {
                    set > 0
                } else {
                    // the window must be fully inside and fully set
                    i >= radius && i + radius < len && set == hi - lo
                };
            }
        }
        cur = next;
    }
    BinaryMask::new(dims, cur).expect("same dims")
}

/// Writes `per_family` simulated models for each of the ResNet, DPN and FPN
/// families as probability sidecars under `dir`, plus `manifest.tsv`
/// listing them. Returns the manifest path.
pub fn write_ensemble_fixture(
    dir: &Path,
    truth: &BinaryMask,
    spacing: Spacing,
    per_family: usize,
    rng_seed: u64,
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::from("# model_id\tfamily\theader\n");
    let mut k = 0u64;
    for family in [ModelFamily::ResNet, ModelFamily::Dpn, ModelFamily::Fpn] {
        for i in 0..per_family {
            let id = format!("{family}_{i:02}");
            let prob = simulate_model(truth, 3.0, 0.02, rng_seed.wrapping_add(k))?;
            k += 1;
            let header = format!("{id}.hdr");
            write_raw_volume(&RawVolume::Prob(prob, spacing), &dir.join(&header))?;
            manifest.push_str(&format!("{id}\t{family}\t{header}\n"));
        }
    }
    let path = dir.join("manifest.tsv");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Appends one explicit-VR little-endian element, padding the value to an
/// even length (`\0` for UI and binary VRs, space otherwise).
pub fn encode_element(out: &mut Vec<u8>, tag: Tag, vr: [u8; 2], value: &[u8]) {
    let mut v = value.to_vec();
    if v.len() % 2 == 1 {
        v.push(if matches!(&vr, b"UI" | b"OB" | b"OW") { 0 } else { b' ' });
    }
    out.extend_from_slice(&tag.0.to_le_bytes());
    out.extend_from_slice(&tag.1.to_le_bytes());
    out.extend_from_slice(&vr);
    if matches!(&vr, b"OB" | b"OW" | b"OF" | b"SQ" | b"UT" | b"UN") {
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&(v.len() as u32).to_le_bytes());
    } else {
        out.extend_from_slice(&(v.len() as u16).to_le_bytes());
    }
    out.extend_from_slice(&v);
}

/// Attributes of one synthetic image slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceEncoding {
    pub rows: u16,
    pub columns: u16,
    /// Stored values, row-major.
    pub pixels: Vec<i32>,
    pub signed: bool,
    pub bits_stored: u16,
    pub pixel_spacing: Option<(f64, f64)>,
    pub slice_thickness: Option<f64>,
    pub image_position: Option<[f64; 3]>,
    pub instance_number: Option<i64>,
    pub rescale_slope: f64,
    pub rescale_intercept: f64,
    pub series_description: String,
    pub transfer_syntax: String,
}

impl SliceEncoding {
    pub fn new(rows: u16, columns: u16, pixels: Vec<i32>) -> Self {
        Self {
            rows,
            columns,
            pixels,
            signed: true,
            bits_stored: 16,
            pixel_spacing: None,
            slice_thickness: None,
            image_position: None,
            instance_number: None,
            rescale_slope: 1.0,
            rescale_intercept: 0.0,
            series_description: "LUNG".to_string(),
            transfer_syntax: EXPLICIT_VR_LITTLE_ENDIAN.to_string(),
        }
    }

    /// Serializes as a Part 10 file.
    pub fn encode(&self) -> Vec<u8> {
        let ds = |v: f64| format!("{v}").into_bytes();
        let us = |v: u16| v.to_le_bytes().to_vec();
        let mut out = vec![0u8; 128];
        out.extend_from_slice(b"DICM");
        encode_element(&mut out, tags::TRANSFER_SYNTAX_UID, *b"UI", self.transfer_syntax.as_bytes());
        encode_element(&mut out, tags::SERIES_DESCRIPTION, *b"LO", self.series_description.as_bytes());
        if let Some(t) = self.slice_thickness {
            encode_element(&mut out, tags::SLICE_THICKNESS, *b"DS", &ds(t));
        }
        if let Some(n) = self.instance_number {
            encode_element(&mut out, tags::INSTANCE_NUMBER, *b"IS", n.to_string().as_bytes());
        }
        if let Some(p) = self.image_position {
            let s = format!("{}\\{}\\{}", p[0], p[1], p[2]);
            encode_element(&mut out, tags::IMAGE_POSITION_PATIENT, *b"DS", s.as_bytes());
        }
        encode_element(&mut out, tags::SAMPLES_PER_PIXEL, *b"US", &us(1));
        encode_element(&mut out, tags::PHOTOMETRIC_INTERPRETATION, *b"CS", b"MONOCHROME2");
        encode_element(&mut out, tags::ROWS, *b"US", &us(self.rows));
        encode_element(&mut out, tags::COLUMNS, *b"US", &us(self.columns));
        if let Some((r, c)) = self.pixel_spacing {
            encode_element(&mut out, tags::PIXEL_SPACING, *b"DS", format!("{r}\\{c}").as_bytes());
        }
        encode_element(&mut out, tags::BITS_ALLOCATED, *b"US", &us(16));
        encode_element(&mut out, tags::BITS_STORED, *b"US", &us(self.bits_stored));
        encode_element(&mut out, tags::PIXEL_REPRESENTATION, *b"US", &us(self.signed as u16));
        encode_element(&mut out, tags::RESCALE_INTERCEPT, *b"DS", &ds(self.rescale_intercept));
        encode_element(&mut out, tags::RESCALE_SLOPE, *b"DS", &ds(self.rescale_slope));
        let mask: u32 = if self.bits_stored >= 16 { 0xFFFF } else { (1 << self.bits_stored) - 1 };
        let data: Vec<u8> = self
            .pixels
            .iter()
            .flat_map(|p| ((*p as u32 & mask) as u16).to_le_bytes())
            .collect();
        encode_element(&mut out, tags::PIXEL_DATA, *b"OW", &data);
        out
    }
}

/// Writes a raw-stored volume as one file per axial slice (`slice_0000.dcm`,
/// ...), positioned at `z * sz`.
pub fn write_dicom_series(volume: &CtVolume, dir: &Path, description: &str) -> Result<Vec<PathBuf>> {
    volume.require_state(UnitState::RawStored)?;
    let dims = volume.dims();
    let sp = volume.spacing();
    if dims.nx > u16::MAX as usize || dims.ny > u16::MAX as usize {
        return Err(Error::InvalidConfig("slice too large for DICOM".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let plane = dims.nx * dims.ny;
    let mut paths = Vec::with_capacity(dims.nz);
    for z in 0..dims.nz {
        let pixels = volume.voxels()[z * plane..(z + 1) * plane]
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if v.fract() != 0.0 || *v < i16::MIN as f64 || *v > i16::MAX as f64 {
                    Err(Error::UnrepresentableValue {
                        index: z * plane + i,
                        value: *v,
                        element: "i16",
                    })
                } else {
                    Ok(*v as i32)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut enc = SliceEncoding::new(dims.ny as u16, dims.nx as u16, pixels);
        enc.pixel_spacing = Some((sp.sy, sp.sx));
        enc.slice_thickness = Some(sp.sz);
        enc.image_position = Some([0.0, 0.0, z as f64 * sp.sz]);
        enc.instance_number = Some(z as i64 + 1);
        enc.rescale_slope = volume.rescale_slope;
        enc.rescale_intercept = volume.rescale_intercept;
        enc.series_description = description.to_string();
        let path = dir.join(format!("slice_{z:04}.dcm"));
        fs::write(&path, enc.encode()).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::dicom::parse_dicom_bytes;

    #[test]
    fn empty_and_full_lesions() {
        let dims = Dims::new(24, 20, 12);
        let mut spec = PhantomSpec::standard(dims);
        spec.lesions[0].shape.radii = [0.0, 3.0, 3.0];
        spec.lesions.truncate(1);
        let p = make_phantom(&spec).unwrap();
        assert_eq!(p.lesion.count(), 0);
        assert_eq!(p.shares.total(), 0.0);

        spec.lesions[0].shape = spec.right_lung;
        let p = make_phantom(&spec).unwrap();
        assert_eq!(p.shares.right(), 1.0);
        assert_eq!(p.shares.left(), 0.0);
    }

    #[test]
    fn invalid_specs() {
        let dims = Dims::new(24, 20, 12);
        let mut spec = PhantomSpec::standard(dims);
        spec.lesions[0].lung = Side::Left;
        assert!(matches!(make_phantom(&spec), Err(Error::SpecInvalid(_))));
        let mut spec = PhantomSpec::standard(dims);
        spec.left_lung = spec.right_lung;
        assert!(matches!(make_phantom(&spec), Err(Error::SpecInvalid(_))));
    }

    #[test]
    fn infinite_sharpness_is_binary() {
        let truth = BinaryMask::from_fn(Dims::new(9, 7, 5), |x, y, _| (x + y) % 3 == 0);
        let p = simulate_model(&truth, f64::INFINITY, 0.0, 4).unwrap();
        assert_eq!(p.probs().iter().map(|v| *v == 1.0).collect::<Vec<_>>(), truth.bits());
        assert!(p.probs().iter().all(|v| *v == 0.0 || *v == 1.0));
        assert_eq!(simulate_model(&truth, 2.0, 0.1, 9).unwrap(), simulate_model(&truth, 2.0, 0.1, 9).unwrap());
    }

    #[test]
    fn morphology() {
        let dims = Dims::new(7, 7, 7);
        let mut one = BinaryMask::empty(dims);
        one.set(3, 3, 3, true);
        let d = morph(&one, 1, true);
        assert_eq!(d.count(), 27);
        assert_eq!(morph(&d, 1, false), one);
        let edge = BinaryMask::from_fn(dims, |x, _, _| x == 0);
        assert_eq!(morph(&edge, 1, false).count(), 0);
    }

    #[test]
    fn rater_estimate() {
        let truth = BinaryMask::from_fn(Dims::new(4, 4, 4), |x, _, _| x < 2);
        let spec = RaterSpec {
            share_bias: 1.2,
            ..Default::default()
        };
        let (m, s) = simulate_rater(&truth, 0.25, &spec).unwrap();
        assert_eq!(m, truth);
        assert_eq!(s, 0.3);
    }

    #[test]
    fn encoded_slice_parses() {
        let mut enc = SliceEncoding::new(2, 3, vec![-1024, 0, 1, 2, 3, 3071]);
        enc.rescale_intercept = -1024.0;
        let s = parse_dicom_bytes(&enc.encode(), Path::new("mem")).unwrap();
        assert_eq!((s.rows, s.columns), (2, 3));
        assert_eq!(s.pixels, enc.pixels);
        assert_eq!(s.rescale_intercept, -1024.0);
    }
}
