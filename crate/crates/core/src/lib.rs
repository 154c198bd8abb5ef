//! CT lesion ensemble fusion, lesion-share scoring and rater-panel
//! evaluation.
//!
//! The crate reads CT series and model probability volumes, combines the
//! models voxel by voxel, measures lesion burden per lung, assigns CT
//! severity classes and compares the system against a panel of raters.
//! Every random choice is driven by a seeded ChaCha8 generator.

pub mod clinical;
pub mod cli;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod io;
pub mod labeling;
pub mod models;
pub mod preprocess;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{BinaryMask, CtVolume, Dims, ProbabilityVolume, Spacing, UnitState};
