//! Volume ingestion and output: DICOM subset reader, raw sidecar format,
//! PNG overlays.

pub mod dicom;
pub mod overlay;
pub mod sidecar;

pub use dicom::{parse_dicom_series, parse_dicom_series_with, SeriesOptions};
pub use overlay::{write_overlay_image, Window};
pub use sidecar::{read_raw_volume, write_raw_volume, RawVolume};
