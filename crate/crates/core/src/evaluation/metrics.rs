use serde::{Deserialize, Serialize};

use crate::clinical::CtClass;
use crate::error::{Error, Result};
use crate::volume::BinaryMask;

/// Integer overlap counts of two masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Overlap {
    pub a: usize,
    pub b: usize,
    pub intersection: usize,
}

impl Overlap {
    pub fn of(a: &BinaryMask, b: &BinaryMask) -> Result<Self> {
        a.dims().ensure_same(b.dims())?;
        let (mut na, mut nb, mut both) = (0, 0, 0);
        for (x, y) in a.bits().iter().zip(b.bits()) {
            na += *x as usize;
            nb += *y as usize;
            both += (*x && *y) as usize;
        }
        Ok(Self {
            a: na,
            b: nb,
            intersection: both,
        })
    }

    pub fn union(&self) -> usize {
        self.a + self.b - self.intersection
    }

    /// DSC as `(numerator, denominator)`; `(1, 1)` when both are empty.
    pub fn dice_ratio(&self) -> (usize, usize) {
        if self.a + self.b == 0 {
            (1, 1)
        } else {
            (2 * self.intersection, self.a + self.b)
        }
    }

    /// IoU as `(numerator, denominator)`; `(1, 1)` when both are empty.
    pub fn iou_ratio(&self) -> (usize, usize) {
        if self.union() == 0 {
            (1, 1)
        } else {
            (self.intersection, self.union())
        }
    }
}

/// Dice similarity coefficient `2|a∩b| / (|a| + |b|)`, 1.0 for two empty masks.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let (n, d) = Overlap::of(a, b)?.dice_ratio();
    Ok(n as f64 / d as f64)
}

/// Intersection over union, 1.0 for two empty masks.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let (n, d) = Overlap::of(a, b)?.iou_ratio();
    Ok(n as f64 / d as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelConfig {
    pub quorum: usize,
    pub panel_size: usize,
}

impl Default for PanelConfig {
    fn default() -> Self {
        Self {
            quorum: 3,
            panel_size: 5,
        }
    }
}

impl PanelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.quorum < 1 || self.quorum > self.panel_size {
            return Err(Error::InvalidConfig(format!(
                "quorum {} for panel of {}",
                self.quorum, self.panel_size
            )));
        }
        Ok(())
    }
}

/// Consensus mask: a voxel is positive when at least `quorum` raters marked it.
pub fn panel_ground_truth(masks: &[&BinaryMask], cfg: &PanelConfig) -> Result<BinaryMask> {
    cfg.validate()?;
    if masks.len() != cfg.panel_size {
        return Err(Error::PanelSizeMismatch {
            expected: cfg.panel_size,
            found: masks.len(),
        });
    }
    let dims = masks[0].dims();
    for m in &masks[1..] {
        dims.ensure_same(m.dims())?;
    }
    let bits = (0..dims.len())
        .map(|i| masks.iter().filter(|m| m.bits()[i]).count() >= cfg.quorum)
        .collect();
    BinaryMask::new(dims, bits)
}

/// Mean of the panel's share estimates.
pub fn panel_share_truth(shares: &[f64]) -> Result<f64> {
    if shares.is_empty() {
        return Err(Error::EmptyPanel);
    }
    Ok(shares.iter().sum::<f64>() / shares.len() as f64)
}

/// Mean absolute error and mean signed error (prediction minus truth).
pub fn mae_me(pred: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    let n = pred.len() as f64;
    let (abs, signed) = pred
        .iter()
        .zip(truth)
        .fold((0.0, 0.0), |(a, s), (p, t)| (a + (p - t).abs(), s + (p - t)));
    Ok((abs / n, signed / n))
}

pub fn accuracy(pred: &[CtClass], truth: &[CtClass]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
