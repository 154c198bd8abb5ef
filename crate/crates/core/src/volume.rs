//! Volume carriers shared by every stage of the pipeline.
//!
//! All volumes use x-fastest linear indexing: `x + nx * (y + ny * z)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Voxel counts along x, y and z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize, usize) {
        let x = index % self.nx;
        let rest = index / self.nx;
        (x, rest % self.ny, rest / self.ny)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::InvalidConfig(format!("dims must be positive: {self:?}")));
        }
        Ok(())
    }

    pub(crate) fn ensure_same(&self, other: Dims) -> Result<()> {
        if *self != other {
            return Err(Error::DimsMismatch(*self, other));
        }
        Ok(())
    }
}

/// Millimeters per voxel along x, y and z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl Spacing {
    pub const fn new(sx: f64, sy: f64, sz: f64) -> Self {
        Self { sx, sy, sz }
    }

    /// Voxel volume in milliliters.
    pub fn voxel_ml(&self) -> f64 {
        self.sx * self.sy * self.sz / 1000.0
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let ok = [self.sx, self.sy, self.sz]
            .iter()
            .all(|s| s.is_finite() && *s > 0.0);
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "spacing must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

impl Default for Spacing {
    fn default() -> Self {
        Self::new(1.0, 1.0, 1.0)
    }
}

/// Unit state of CT voxel values. Transitions only move forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UnitState {
    RawStored,
    Hounsfield,
    Normalized,
}

/// A CT scan: voxel values plus geometry and rescale parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CtVolume {
    dims: Dims,
    spacing: Spacing,
    voxels: Vec<f64>,
    pub rescale_slope: f64,
    pub rescale_intercept: f64,
    unit_state: UnitState,
    pub series_description: String,
}

impl CtVolume {
    pub fn new(
        dims: Dims,
        spacing: Spacing,
        voxels: Vec<f64>,
        unit_state: UnitState,
    ) -> Result<Self> {
        dims.validate()?;
        spacing.validate()?;
        if voxels.len() != dims.len() {
            return Err(Error::PayloadLengthMismatch {
                expected: dims.len(),
                found: voxels.len(),
            });
        }
        Ok(Self {
            dims,
            spacing,
            voxels,
            rescale_slope: 1.0,
            rescale_intercept: 0.0,
            unit_state,
            series_description: String::new(),
        })
    }

    pub fn with_rescale(mut self, slope: f64, intercept: f64) -> Self {
        self.rescale_slope = slope;
        self.rescale_intercept = intercept;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn voxels(&self) -> &[f64] {
        &self.voxels
    }

    pub fn unit_state(&self) -> UnitState {
        self.unit_state
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.voxels[self.dims.index(x, y, z)]
    }

    pub(crate) fn require_state(&self, expected: UnitState) -> Result<()> {
        if self.unit_state != expected {
            return Err(Error::WrongUnitState {
                expected,
                found: self.unit_state,
            });
        }
        Ok(())
    }

    /// Replaces voxel values and advances the unit state.
    pub(crate) fn advance(&self, voxels: Vec<f64>, next: UnitState) -> Self {
        debug_assert!(next > self.unit_state);
        debug_assert_eq!(voxels.len(), self.voxels.len());
        Self {
            voxels,
            unit_state: next,
            series_description: self.series_description.clone(),
            ..*self
        }
    }
}

/// One boolean per voxel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    dims: Dims,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: Dims, bits: Vec<bool>) -> Result<Self> {
        dims.validate()?;
        if bits.len() != dims.len() {
            return Err(Error::PayloadLengthMismatch {
                expected: dims.len(),
                found: bits.len(),
            });
        }
        Ok(Self { dims, bits })
    }

    pub fn empty(dims: Dims) -> Self {
        Self {
            dims,
            bits: vec![false; dims.len()],
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(dims.len());
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    bits.push(f(x, y, z));
                }
            }
        }
        Self { dims, bits }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.bits[self.dims.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = self.dims.index(x, y, z);
        self.bits[i] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> Result<usize> {
        self.dims.ensure_same(other.dims)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a && **b)
            .count())
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && b)
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        self.dims.ensure_same(other.dims)?;
        Ok(BinaryMask {
            dims: self.dims,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }
}

/// Per-voxel lesion probability, every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume {
    dims: Dims,
    probs: Vec<f32>,
}

impl ProbabilityVolume {
    pub fn new(dims: Dims, probs: Vec<f32>) -> Result<Self> {
        dims.validate()?;
        if probs.len() != dims.len() {
            return Err(Error::PayloadLengthMismatch {
                expected: dims.len(),
                found: probs.len(),
            });
        }
        if let Some((index, value)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::ProbabilityOutOfRange {
                index,
                value: *value,
            });
        }
        Ok(Self { dims, probs })
    }

    pub(crate) fn new_unchecked(dims: Dims, probs: Vec<f32>) -> Self {
        debug_assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
        Self { dims, probs }
    }

    pub fn from_mask(mask: &BinaryMask) -> Self {
        Self {
            dims: mask.dims,
            probs: mask.bits.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn probs(&self) -> &[f32] {
        &self.probs
    }

    /// Voxels strictly above `thr`.
    pub fn threshold(&self, thr: f32) -> BinaryMask {
        BinaryMask {
            dims: self.dims,
            bits: self.probs.iter().map(|p| *p > thr).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().map(|p| *p as f64).sum::<f64>() / self.probs.len() as f64
    }
}
