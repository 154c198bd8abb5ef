//! Raw volume interchange: a `key=value` text header next to a little-endian
//! payload file.
//!
//! ```text
//! kind=prob
//! dims=64 64 32
//! spacing=0.7 0.7 1.25
//! element=f32le
//! data=model_03.raw
//! ```
//!
//! `kind` is one of `ct`, `prob`, `mask`; `element` one of `i16le`, `f32le`,
//! `u8`. CT headers may also carry `unit` (`raw`, `hu`, `normalized`),
//! `slope`, `intercept` and `description`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, CtVolume, Dims, ProbabilityVolume, Spacing, UnitState};

#[derive(Debug, Clone, PartialEq)]
pub enum RawVolume {
    Ct(CtVolume),
    Prob(ProbabilityVolume, Spacing),
    Mask(BinaryMask, Spacing),
}

impl RawVolume {
    pub fn dims(&self) -> Dims {
        match self {
            RawVolume::Ct(v) => v.dims(),
            RawVolume::Prob(p, _) => p.dims(),
            RawVolume::Mask(m, _) => m.dims(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RawVolume::Ct(_) => "ct",
            RawVolume::Prob(..) => "prob",
            RawVolume::Mask(..) => "mask",
        }
    }

    pub fn into_ct(self) -> Option<CtVolume> {
        match self {
            RawVolume::Ct(v) => Some(v),
            _ => None,
        }
    }

    pub fn into_prob(self) -> Option<ProbabilityVolume> {
        match self {
            RawVolume::Prob(p, _) => Some(p),
            _ => None,
        }
    }

    pub fn into_mask(self) -> Option<BinaryMask> {
        match self {
            RawVolume::Mask(m, _) => Some(m),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Element {
    I16,
    F32,
    U8,
}

impl Element {
    fn name(self) -> &'static str {
        match self {
            Element::I16 => "i16le",
            Element::F32 => "f32le",
            Element::U8 => "u8",
        }
    }

    fn size(self) -> usize {
        match self {
            Element::I16 => 2,
            Element::F32 => 4,
            Element::U8 => 1,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "i16le" => Some(Element::I16),
            "f32le" => Some(Element::F32),
            "u8" => Some(Element::U8),
            _ => None,
        }
    }
}

#[derive(Debug, Default)]
struct Header {
    kind: Option<String>,
    dims: Option<Dims>,
    spacing: Option<Spacing>,
    element: Option<Element>,
    data: Option<String>,
    unit: Option<UnitState>,
    slope: Option<f64>,
    intercept: Option<f64>,
    description: Option<String>,
}

fn parse_triple<T: std::str::FromStr>(path: &Path, key: &str, value: &str) -> Result<[T; 3]> {
    let parts: Vec<T> = value
        .split_whitespace()
        .map(|p| p.parse::<T>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::header(path, format!("`{key}` has a non-numeric entry")))?;
    <[T; 3]>::try_from(parts).map_err(|_| Error::header(path, format!("`{key}` needs 3 values")))
}

fn parse_header(path: &Path, text: &str) -> Result<Header> {
    let mut h = Header::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::header(path, format!("line {}: expected key=value", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::header(path, format!("`{key}` is not a number")))
        };
        match key {
            "kind" => h.kind = Some(value.to_string()),
            "dims" => {
                let [nx, ny, nz] = parse_triple::<usize>(path, key, value)?;
                h.dims = Some(Dims::new(nx, ny, nz));
            }
            "spacing" => {
                let [sx, sy, sz] = parse_triple::<f64>(path, key, value)?;
                h.spacing = Some(Spacing::new(sx, sy, sz));
            }
            "element" => {
                h.element = Some(
                    Element::parse(value)
                        .ok_or_else(|| Error::header(path, format!("unknown element `{value}`")))?,
                )
            }
            "data" => h.data = Some(value.to_string()),
            "unit" => {
                h.unit = Some(match value {
                    "raw" => UnitState::RawStored,
                    "hu" => UnitState::Hounsfield,
                    "normalized" => UnitState::Normalized,
                    _ => return Err(Error::header(path, format!("unknown unit `{value}`"))),
                })
            }
            "slope" => h.slope = Some(num(value)?),
            "intercept" => h.intercept = Some(num(value)?),
            "description" => h.description = Some(value.to_string()),
            _ => return Err(Error::header(path, format!("unknown key `{key}`"))),
        }
    }
    Ok(h)
}

/// Reads a header and its payload into the declared volume kind.
pub fn read_raw_volume(header_path: &Path) -> Result<RawVolume> {
    let text = fs::read_to_string(header_path)
        .map_err(|e| Error::header(header_path, format!("cannot read header: {e}")))?;
    let h = parse_header(header_path, &text)?;
    let missing = |k: &str| Error::header(header_path, format!("missing `{k}`"));
    let kind = h.kind.clone().ok_or_else(|| missing("kind"))?;
    let dims = h.dims.ok_or_else(|| missing("dims"))?;
    let spacing = h.spacing.ok_or_else(|| missing("spacing"))?;
    let element = h.element.ok_or_else(|| missing("element"))?;
    let data = h.data.clone().ok_or_else(|| missing("data"))?;
    dims.validate()
        .map_err(|e| Error::header(header_path, e.to_string()))?;
    spacing
        .validate()
        .map_err(|e| Error::header(header_path, e.to_string()))?;

    match (kind.as_str(), element) {
        ("mask", Element::U8) | ("prob", Element::F32) | ("ct", Element::I16 | Element::F32) => {}
        (k @ ("ct" | "prob" | "mask"), e) => {
            return Err(Error::header(
                header_path,
                format!("element {} is not valid for kind {k}", e.name()),
            ))
        }
        (k, _) => return Err(Error::header(header_path, format!("unknown kind `{k}`"))),
    }

    let payload_path = header_path
        .parent()
        .map(|p| p.join(&data))
        .unwrap_or_else(|| PathBuf::from(&data));
    let payload = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let expected = dims.len() * element.size();
    if payload.len() != expected {
        return Err(Error::PayloadLengthMismatch {
            expected,
            found: payload.len(),
        });
    }

    match (kind.as_str(), element) {
        ("mask", Element::U8) => {
            let bits = payload
                .iter()
                .enumerate()
                .map(|(i, b)| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    _ => Err(Error::header(
                        header_path,
                        format!("mask byte {b} at voxel {i}"),
                    )),
                })
                .collect::<Result<Vec<bool>>>()?;
            Ok(RawVolume::Mask(BinaryMask::new(dims, bits)?, spacing))
        }
        ("prob", Element::F32) => {
            let probs = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Ok(RawVolume::Prob(ProbabilityVolume::new(dims, probs)?, spacing))
        }
        ("ct", Element::I16 | Element::F32) => {
            let (voxels, default_unit): (Vec<f64>, _) = if element == Element::I16 {
                let v = payload
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64)
                    .collect();
                (v, UnitState::RawStored)
            } else {
                let v = payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                    .collect();
                (v, UnitState::Hounsfield)
            };
            let unit = h.unit.unwrap_or(default_unit);
            if unit == UnitState::RawStored && element != Element::I16 {
                return Err(Error::header(header_path, "raw CT payload must be i16le"));
            }
            let mut v = CtVolume::new(dims, spacing, voxels, unit)?
                .with_rescale(h.slope.unwrap_or(1.0), h.intercept.unwrap_or(0.0));
            v.series_description = h.description.unwrap_or_default();
            Ok(RawVolume::Ct(v))
        }
        _ => unreachable!("kind and element checked above"),
    }
}

fn fmt_spacing(s: Spacing) -> String {
    format!("{} {} {}", s.sx, s.sy, s.sz)
}

fn payload_name(header_path: &Path) -> String {
    let stem = header_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "volume".to_string());
    format!("{stem}.raw")
}

/// Writes `volume` as a header at `header_path` plus a `<stem>.raw` payload
/// in the same directory.
pub fn write_raw_volume(volume: &RawVolume, header_path: &Path) -> Result<()> {
    let dims = volume.dims();
    let data = payload_name(header_path);
    let mut header = format!(
        "kind={}\ndims={} {} {}\n",
        volume.kind(),
        dims.nx,
        dims.ny,
        dims.nz
    );
    let payload: Vec<u8> = match volume {
        RawVolume::Mask(m, spacing) => {
            header += &format!("spacing={}\nelement=u8\n", fmt_spacing(*spacing));
            m.bits().iter().map(|b| *b as u8).collect()
        }
        RawVolume::Prob(p, spacing) => {
            header += &format!("spacing={}\nelement=f32le\n", fmt_spacing(*spacing));
            p.probs().iter().flat_map(|v| v.to_le_bytes()).collect()
        }
        RawVolume::Ct(v) => {
            let (element, unit) = match v.unit_state() {
                UnitState::RawStored => ("i16le", "raw"),
                UnitState::Hounsfield => ("f32le", "hu"),
                UnitState::Normalized => ("f32le", "normalized"),
            };
            header += &format!(
                "spacing={}\nelement={element}\nunit={unit}\nslope={}\nintercept={}\n",
                fmt_spacing(v.spacing()),
                v.rescale_slope,
                v.rescale_intercept
            );
            if !v.series_description.is_empty() {
                header += &format!("description={}\n", v.series_description.replace('\n', " "));
            }
            encode_ct(v)?
        }
    };
    header += &format!("data={data}\n");

    let payload_path = header_path
        .parent()
        .map(|p| p.join(&data))
        .unwrap_or_else(|| PathBuf::from(&data));
    fs::write(&payload_path, payload).map_err(|e| Error::io(&payload_path, e))?;
    fs::write(header_path, header).map_err(|e| Error::io(header_path, e))?;
    Ok(())
}

fn encode_ct(v: &CtVolume) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(v.voxels().len() * 4);
    if v.unit_state() == UnitState::RawStored {
        for (index, &value) in v.voxels().iter().enumerate() {
            let stored = value as i16;
            if stored as f64 != value {
                return Err(Error::UnrepresentableValue {
                    index,
                    value,
                    element: "i16le",
                });
            }
            out.extend_from_slice(&stored.to_le_bytes());
        }
    } else {
        for (index, &value) in v.voxels().iter().enumerate() {
            let stored = value as f32;
            if stored as f64 != value && !value.is_nan() {
                return Err(Error::UnrepresentableValue {
                    index,
                    value,
                    element: "f32le",
                });
            }
            out.extend_from_slice(&stored.to_le_bytes());
        }
    }
    Ok(out)
}

/// Rounds HU voxels to the nearest `f32` so the volume can be written
/// losslessly as `f32le`.
pub fn to_f32_precision(v: &CtVolume) -> CtVolume {
    let mut out = v.clone();
    if v.unit_state() != UnitState::RawStored {
        let voxels = v.voxels().iter().map(|x| *x as f32 as f64).collect();
        out = CtVolume::new(v.dims(), v.spacing(), voxels, v.unit_state())
            .expect("geometry already validated")
            .with_rescale(v.rescale_slope, v.rescale_intercept);
        out.series_description = v.series_description.clone();
    }
    out
}
