//! Reader for a narrow DICOM subset: Part 10 files, Explicit VR Little Endian,
//! uncompressed single-frame monochrome images with 16 bits allocated.
//!
//! Every length read from the file is bounds-checked before use, so truncated
//! or corrupted input produces [`Error::MalformedDicom`] rather than a panic.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::volume::{CtVolume, Dims, Spacing, UnitState};

pub const EXPLICIT_VR_LITTLE_ENDIAN: &str = "1.2.840.10008.1.2.1";

const PREAMBLE_LEN: usize = 128;
const MAGIC: &[u8; 4] = b"DICM";
const UNDEFINED_LENGTH: u32 = 0xFFFF_FFFF;
const MAX_SEQUENCE_DEPTH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tag(pub u16, pub u16);

pub mod tags {
    use super::Tag;

    pub const TRANSFER_SYNTAX_UID: Tag = Tag(0x0002, 0x0010);
    pub const SERIES_DESCRIPTION: Tag = Tag(0x0008, 0x103E);
    pub const SLICE_THICKNESS: Tag = Tag(0x0018, 0x0050);
    pub const INSTANCE_NUMBER: Tag = Tag(0x0020, 0x0013);
    pub const IMAGE_POSITION_PATIENT: Tag = Tag(0x0020, 0x0032);
    pub const SAMPLES_PER_PIXEL: Tag = Tag(0x0028, 0x0002);
    pub const PHOTOMETRIC_INTERPRETATION: Tag = Tag(0x0028, 0x0004);
    pub const NUMBER_OF_FRAMES: Tag = Tag(0x0028, 0x0008);
    pub const ROWS: Tag = Tag(0x0028, 0x0010);
    pub const COLUMNS: Tag = Tag(0x0028, 0x0011);
    pub const PIXEL_SPACING: Tag = Tag(0x0028, 0x0030);
    pub const BITS_ALLOCATED: Tag = Tag(0x0028, 0x0100);
    pub const BITS_STORED: Tag = Tag(0x0028, 0x0101);
    pub const PIXEL_REPRESENTATION: Tag = Tag(0x0028, 0x0103);
    pub const RESCALE_INTERCEPT: Tag = Tag(0x0028, 0x1052);
    pub const RESCALE_SLOPE: Tag = Tag(0x0028, 0x1053);
    pub const PIXEL_DATA: Tag = Tag(0x7FE0, 0x0010);

    pub const ITEM: Tag = Tag(0xFFFE, 0xE000);
    pub const ITEM_DELIMITATION: Tag = Tag(0xFFFE, 0xE00D);
    pub const SEQUENCE_DELIMITATION: Tag = Tag(0xFFFE, 0xE0DD);
}

/// VRs encoded with a 2-byte reserved field and a 4-byte length.
fn has_long_length(vr: [u8; 2]) -> bool {
    matches!(
        &vr,
        b"OB" | b"OD" | b"OF" | b"OL" | b"OV" | b"OW" | b"SQ" | b"SV" | b"UC" | b"UR" | b"UT"
            | b"UN" | b"UV"
    )
}

/// Options for assembling a series from a directory.
#[derive(Debug, Clone)]
pub struct SeriesOptions {
    /// Case-insensitive substring that SeriesDescription must contain.
    /// `None` accepts every slice.
    pub series_filter: Option<String>,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self {
            series_filter: Some("lung".to_string()),
        }
    }
}

/// Attributes extracted from one single-frame image file.
#[derive(Debug, Clone, PartialEq)]
pub struct DicomSlice {
    pub rows: usize,
    pub columns: usize,
    pub pixel_spacing: Option<(f64, f64)>,
    pub slice_thickness: Option<f64>,
    pub image_position: Option<[f64; 3]>,
    pub instance_number: Option<i64>,
    pub rescale_slope: f64,
    pub rescale_intercept: f64,
    pub series_description: String,
    /// Stored values, row-major (column index fastest).
    pub pixels: Vec<i32>,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn malformed(&self, reason: impl Into<String>) -> Error {
        Error::MalformedDicom {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|end| *end <= self.data.len())
            .ok_or_else(|| {
                self.malformed(format!(
                    "needs {n} bytes, {} remain",
                    self.data.len() - self.pos
                ))
            })?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn tag(&mut self) -> Result<Tag> {
        Ok(Tag(self.u16()?, self.u16()?))
    }

    fn at_end(&self) -> bool {
        self.pos >= self.data.len()
    }
}

struct Element<'a> {
    tag: Tag,
    vr: [u8; 2],
    /// `None` for undefined-length values, which have already been skipped.
    value: Option<&'a [u8]>,
}

/// Reads one explicit-VR element header and its value.
fn read_element<'a>(cur: &mut Cursor<'a>, depth: usize) -> Result<Element<'a>> {
    let tag = cur.tag()?;
    let vr_bytes = cur.take(2)?;
    let vr = [vr_bytes[0], vr_bytes[1]];
    if !vr.iter().all(u8::is_ascii_uppercase) {
        return Err(cur.malformed(format!("invalid VR bytes {vr:?} for tag {tag:?}")));
    }
    let len = if has_long_length(vr) {
        cur.take(2)?;
        cur.u32()?
    } else {
        cur.u16()? as u32
    };
    if len == UNDEFINED_LENGTH {
        if tag == tags::PIXEL_DATA {
            return Err(Error::UnsupportedPixelFormat(
                "encapsulated pixel data".to_string(),
            ));
        }
        if &vr != b"SQ" && &vr != b"UN" {
            return Err(cur.malformed(format!("undefined length on VR {}", vr_str(vr))));
        }
        skip_undefined_sequence(cur, depth + 1)?;
        return Ok(Element {
            tag,
            vr,
            value: None,
        });
    }
    let value = cur.take(len as usize)?;
    Ok(Element {
        tag,
        vr,
        value: Some(value),
    })
}

fn vr_str(vr: [u8; 2]) -> String {
    String::from_utf8_lossy(&vr).into_owned()
}

/// Skips the items of an undefined-length sequence up to and including
/// its sequence delimitation item.
fn skip_undefined_sequence(cur: &mut Cursor<'_>, depth: usize) -> Result<()> {
    if depth > MAX_SEQUENCE_DEPTH {
        return Err(cur.malformed("sequence nesting too deep"));
    }
    loop {
        let tag = cur.tag()?;
        let len = cur.u32()?;
        match tag {
            tags::SEQUENCE_DELIMITATION => return Ok(()),
            tags::ITEM if len == UNDEFINED_LENGTH => loop {
                let save = cur.pos;
                let t = cur.tag()?;
                if t == tags::ITEM_DELIMITATION {
                    cur.u32()?;
                    break;
                }
                cur.pos = save;
                read_element(cur, depth)?;
            },
            tags::ITEM => {
                cur.take(len as usize)?;
            }
            other => {
                return Err(cur.malformed(format!("unexpected tag {other:?} inside sequence")))
            }
        }
    }
}

fn text(value: &[u8]) -> String {
    String::from_utf8_lossy(value)
        .trim_matches(|c: char| c == '\0' || c.is_whitespace())
        .to_string()
}

fn numbers(tag: Tag, value: &[u8]) -> Result<Vec<f64>> {
    text(value)
        .split('\\')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| Error::MalformedDicom {
                offset: 0,
                reason: format!("tag {tag:?}: `{s}` is not a number"),
            })
        })
        .collect()
}

fn single_number(tag: Tag, value: &[u8]) -> Result<f64> {
    numbers(tag, value)?
        .first()
        .copied()
        .ok_or_else(|| Error::MalformedDicom {
            offset: 0,
            reason: format!("tag {tag:?} is empty"),
        })
}

fn us(tag: Tag, value: &[u8]) -> Result<u16> {
    if value.len() < 2 {
        return Err(Error::MalformedDicom {
            offset: 0,
            reason: format!("tag {tag:?} too short for US"),
        });
    }
    Ok(u16::from_le_bytes([value[0], value[1]]))
}

/// Returns true when `bytes` carries the Part 10 preamble and magic.
pub fn has_dicom_magic(bytes: &[u8]) -> bool {
    bytes.len() >= PREAMBLE_LEN + 4 && &bytes[PREAMBLE_LEN..PREAMBLE_LEN + 4] == MAGIC
}

/// Parses a single-frame image file held in memory.
pub fn parse_dicom_bytes(bytes: &[u8], source: &Path) -> Result<DicomSlice> {
    if !has_dicom_magic(bytes) {
        return Err(Error::MalformedDicom {
            offset: 0,
            reason: "missing DICM preamble".to_string(),
        });
    }
    let mut cur = Cursor {
        data: bytes,
        pos: PREAMBLE_LEN + 4,
    };

    let mut transfer_syntax: Option<String> = None;
    let mut rows = None;
    let mut columns = None;
    let mut bits_allocated = None;
    let mut bits_stored = None;
    let mut pixel_representation = 0u16;
    let mut samples_per_pixel = 1u16;
    let mut photometric: Option<String> = None;
    let mut frames = 1i64;
    let mut slice = DicomSlice {
        rows: 0,
        columns: 0,
        pixel_spacing: None,
        slice_thickness: None,
        image_position: None,
        instance_number: None,
        rescale_slope: 1.0,
        rescale_intercept: 0.0,
        series_description: String::new(),
        pixels: Vec::new(),
    };
    let mut pixel_data: Option<&[u8]> = None;

    while !cur.at_end() {
        // Group 0002 is always explicit VR little endian; check the dataset
        // encoding before touching anything past it.
        let save = cur.pos;
        let group = cur.u16()?;
        cur.pos = save;
        if group != 0x0002 {
            match transfer_syntax.as_deref() {
                Some(EXPLICIT_VR_LITTLE_ENDIAN) => {}
                Some(other) => return Err(Error::UnsupportedTransferSyntax(other.to_string())),
                None => return Err(Error::UnsupportedTransferSyntax("<missing>".to_string())),
            }
        }

        let elem = read_element(&mut cur, 0)?;
        let Some(value) = elem.value else { continue };
        match elem.tag {
            tags::TRANSFER_SYNTAX_UID => transfer_syntax = Some(text(value)),
            tags::ROWS => rows = Some(us(elem.tag, value)?),
            tags::COLUMNS => columns = Some(us(elem.tag, value)?),
            tags::BITS_ALLOCATED => bits_allocated = Some(us(elem.tag, value)?),
            tags::BITS_STORED => bits_stored = Some(us(elem.tag, value)?),
            tags::PIXEL_REPRESENTATION => pixel_representation = us(elem.tag, value)?,
            tags::SAMPLES_PER_PIXEL => samples_per_pixel = us(elem.tag, value)?,
            tags::PHOTOMETRIC_INTERPRETATION => photometric = Some(text(value)),
            tags::NUMBER_OF_FRAMES => frames = single_number(elem.tag, value)? as i64,
            tags::PIXEL_SPACING => {
                let v = numbers(elem.tag, value)?;
                if v.len() >= 2 {
                    slice.pixel_spacing = Some((v[0], v[1]));
                }
            }
            tags::SLICE_THICKNESS => {
                if !text(value).is_empty() {
                    slice.slice_thickness = Some(single_number(elem.tag, value)?);
                }
            }
            tags::IMAGE_POSITION_PATIENT => {
                let v = numbers(elem.tag, value)?;
                if v.len() != 3 {
                    return Err(Error::MalformedDicom {
                        offset: cur.pos,
                        reason: "ImagePositionPatient needs 3 values".to_string(),
                    });
                }
                slice.image_position = Some([v[0], v[1], v[2]]);
            }
            tags::INSTANCE_NUMBER => {
                if !text(value).is_empty() {
                    slice.instance_number = Some(single_number(elem.tag, value)? as i64);
                }
            }
            tags::RESCALE_SLOPE => slice.rescale_slope = single_number(elem.tag, value)?,
            tags::RESCALE_INTERCEPT => slice.rescale_intercept = single_number(elem.tag, value)?,
            tags::SERIES_DESCRIPTION => slice.series_description = text(value),
            tags::PIXEL_DATA => {
                if &elem.vr != b"OW" && &elem.vr != b"OB" {
                    return Err(Error::MalformedDicom {
                        offset: cur.pos,
                        reason: format!("pixel data has VR {}", vr_str(elem.vr)),
                    });
                }
                pixel_data = Some(value);
            }
            _ => {}
        }
    }

    let pixel_data = pixel_data.ok_or_else(|| Error::MissingPixelData(source.to_path_buf()))?;
    let (Some(rows), Some(columns)) = (rows, columns) else {
        return Err(Error::MalformedDicom {
            offset: cur.pos,
            reason: "Rows/Columns missing".to_string(),
        });
    };
    if bits_allocated != Some(16) {
        return Err(Error::UnsupportedPixelFormat(format!(
            "BitsAllocated {bits_allocated:?}"
        )));
    }
    if samples_per_pixel != 1 {
        return Err(Error::UnsupportedPixelFormat(format!(
            "SamplesPerPixel {samples_per_pixel}"
        )));
    }
    if frames != 1 {
        return Err(Error::UnsupportedPixelFormat(format!("{frames} frames")));
    }
    if let Some(p) = &photometric {
        if !p.starts_with("MONOCHROME") {
            return Err(Error::UnsupportedPixelFormat(format!(
                "PhotometricInterpretation {p}"
            )));
        }
    }
    let bits_stored = bits_stored.unwrap_or(16);
    if bits_stored == 0 || bits_stored > 16 {
        return Err(Error::UnsupportedPixelFormat(format!("BitsStored {bits_stored}")));
    }
    let (rows, columns) = (rows as usize, columns as usize);
    if rows == 0 || columns == 0 {
        return Err(Error::InconsistentSliceGeometry(format!(
            "{} has empty geometry {rows}x{columns}",
            source.display()
        )));
    }
    let needed = rows * columns * 2;
    // Allow one byte of even-length padding at most.
    if pixel_data.len() != needed && pixel_data.len() != needed + 1 {
        return Err(Error::MalformedDicom {
            offset: cur.pos,
            reason: format!(
                "pixel data holds {} bytes, geometry needs {needed}",
                pixel_data.len()
            ),
        });
    }

    let mask: u32 = if bits_stored == 16 { 0xFFFF } else { (1u32 << bits_stored) - 1 };
    let sign_bit: u32 = 1 << (bits_stored - 1);
    slice.pixels = pixel_data[..needed]
        .chunks_exact(2)
        .map(|c| {
            let raw = u16::from_le_bytes([c[0], c[1]]) as u32 & mask;
            if pixel_representation == 1 && raw & sign_bit != 0 {
                raw as i32 - (mask as i32 + 1)
            } else {
                raw as i32
            }
        })
        .collect();
    slice.rows = rows;
    slice.columns = columns;
    Ok(slice)
}

pub fn parse_dicom_file(path: &Path) -> Result<DicomSlice> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_dicom_bytes(&bytes, path)
}

/// Assembles every Part 10 file in `dir` into a raw-stored volume using the
/// default series filter.
pub fn parse_dicom_series(dir: &Path) -> Result<CtVolume> {
    parse_dicom_series_with(dir, &SeriesOptions::default())
}

pub fn parse_dicom_series_with(dir: &Path, opts: &SeriesOptions) -> Result<CtVolume> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    paths.sort();

    let mut slices = Vec::new();
    for path in paths.iter().filter(|p| p.is_file()) {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if !has_dicom_magic(&bytes) {
            continue;
        }
        slices.push(parse_dicom_bytes(&bytes, path)?);
    }
    if let Some(filter) = opts.series_filter.as_deref().filter(|f| !f.is_empty()) {
        let needle = filter.to_lowercase();
        slices.retain(|s| s.series_description.to_lowercase().contains(&needle));
    }
    if slices.is_empty() {
        return Err(Error::EmptySeries(dir.to_path_buf()));
    }
    assemble_series(slices)
}

/// Sorts slices along the stacking axis and stacks them into one volume.
pub fn assemble_series(mut slices: Vec<DicomSlice>) -> Result<CtVolume> {
    let first = &slices[0];
    let (rows, columns) = (first.rows, first.columns);
    let (slope, intercept) = (first.rescale_slope, first.rescale_intercept);
    for s in &slices {
        if s.rows != rows || s.columns != columns {
            return Err(Error::InconsistentSliceGeometry(format!(
                "{}x{} vs {}x{}",
                rows, columns, s.rows, s.columns
            )));
        }
        if s.rescale_slope != slope || s.rescale_intercept != intercept {
            return Err(Error::InconsistentSliceGeometry(
                "rescale parameters differ between slices".to_string(),
            ));
        }
    }

    let by_position = slices.iter().all(|s| s.image_position.is_some());
    let key = |s: &DicomSlice| -> Option<f64> {
        if by_position {
            s.image_position.map(|p| p[2])
        } else {
            s.instance_number.map(|n| n as f64)
        }
    };
    if slices.len() > 1 {
        if slices.iter().any(|s| key(s).is_none()) {
            return Err(Error::InconsistentSliceGeometry(
                "slices lack both ImagePositionPatient and InstanceNumber".to_string(),
            ));
        }
        let mut seen = HashSet::new();
        for s in &slices {
            let k = key(s).unwrap_or_default();
            if !seen.insert(k.to_bits()) {
                return Err(Error::DuplicateSlicePosition(k));
            }
        }
        slices.sort_by(|a, b| key(a).unwrap_or_default().total_cmp(&key(b).unwrap_or_default()));
    }

    let first = &slices[0];
    let (row_spacing, col_spacing) = first.pixel_spacing.unwrap_or((1.0, 1.0));
    let sz = match (by_position, slices.len()) {
        (true, n) if n > 1 => {
            let z0 = slices[0].image_position.unwrap_or_default()[2];
            let z1 = slices[1].image_position.unwrap_or_default()[2];
            (z1 - z0).abs()
        }
        _ => first.slice_thickness.unwrap_or(1.0),
    };
    let dims = Dims::new(columns, rows, slices.len());
    let spacing = Spacing::new(col_spacing, row_spacing, if sz > 0.0 { sz } else { 1.0 });
    let description = first.series_description.clone();

    let voxels: Vec<f64> = slices
        .iter()
        .flat_map(|s| s.pixels.iter().map(|p| *p as f64))
        .collect();
    let mut volume =
        CtVolume::new(dims, spacing, voxels, UnitState::RawStored)?.with_rescale(slope, intercept);
    volume.series_description = description;
    Ok(volume)
}
