//! PNG rendering of one axial slice with a lesion overlay.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, CtVolume, UnitState};

/// Overlay color blended over mask-positive pixels.
pub const OVERLAY_RGB: [u8; 3] = [255, 0, 0];
const OVERLAY_ALPHA: f64 = 0.5;

/// Display window in HU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub low: f64,
    pub high: f64,
}

impl Window {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low < high) {
            return Err(Error::InvalidConfig(format!(
                "window low {low} must be below high {high}"
            )));
        }
        Ok(Self { low, high })
    }

    /// Maps HU linearly onto `0..=255`, saturating outside the window.
    pub fn gray(&self, hu: f64) -> u8 {
        let t = (hu - self.low) / (self.high - self.low);
        (t.clamp(0.0, 1.0) * 255.0).round() as u8
    }
}

impl Default for Window {
    fn default() -> Self {
        // W1500 / L-600
        Self {
            low: -1350.0,
            high: 150.0,
        }
    }
}

fn tint(gray: u8) -> Rgb<u8> {
    let mix = |c: u8| (OVERLAY_ALPHA * c as f64 + (1.0 - OVERLAY_ALPHA) * gray as f64).round() as u8;
    Rgb([mix(OVERLAY_RGB[0]), mix(OVERLAY_RGB[1]), mix(OVERLAY_RGB[2])])
}

/// Renders axial slice `slice` of `volume` with `mask` tinted on top.
/// Raw stored volumes are rescaled to HU on the fly.
pub fn render_overlay(
    volume: &CtVolume,
    mask: &BinaryMask,
    slice: usize,
    window: Window,
) -> Result<RgbImage> {
    let dims = volume.dims();
    dims.ensure_same(mask.dims())?;
    if slice >= dims.nz {
        return Err(Error::SliceOutOfRange {
            index: slice,
            depth: dims.nz,
        });
    }
    let Window { low, high } = window;
    let window = Window::new(low, high)?;
    let (k, b) = match volume.unit_state() {
        UnitState::RawStored => (volume.rescale_slope, volume.rescale_intercept),
        _ => (1.0, 0.0),
    };
    let mut img = RgbImage::new(dims.nx as u32, dims.ny as u32);
    for y in 0..dims.ny {
        for x in 0..dims.nx {
            let g = window.gray(k * volume.get(x, y, slice) + b);
            let px = if mask.get(x, y, slice) {
                tint(g)
            } else {
                Rgb([g, g, g])
            };
            img.put_pixel(x as u32, y as u32, px);
        }
    }
    Ok(img)
}

pub fn write_overlay_image(
    volume: &CtVolume,
    mask: &BinaryMask,
    slice: usize,
    window: Window,
    path: &Path,
) -> Result<()> {
    let img = render_overlay(volume, mask, slice, window)?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::ImageEncode(other.to_string()),
        })
}
