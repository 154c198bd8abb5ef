//! HU conversion, input normalization and 2-D projection handling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{CtVolume, Dims, ProbabilityVolume, UnitState};

/// Clamp bound applied after lung-window scaling.
pub const LUNG_WINDOW_CLAMP: f64 = 0.505;

/// Side length of lung-model input planes.
pub const LUNG_MODEL_SIZE: (usize, usize) = (128, 128);

/// Applies the rescale slope and intercept: `hu = k * p + b`.
pub fn to_hounsfield(volume: &CtVolume) -> Result<CtVolume> {
    volume.require_state(UnitState::RawStored)?;
    let (k, b) = (volume.rescale_slope, volume.rescale_intercept);
    let voxels = volume.voxels().iter().map(|p| k * p + b).collect();
    Ok(volume.advance(voxels, UnitState::Hounsfield))
}

/// Divides HU by the magnitude of the volume minimum and clamps to
/// `[-0.505, 0.505]`.
pub fn normalize_lung_window(volume: &CtVolume) -> Result<CtVolume> {
    volume.require_state(UnitState::Hounsfield)?;
    let min = volume
        .voxels()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let divisor = min.abs();
    if divisor == 0.0 || !divisor.is_finite() {
        return Err(Error::DegenerateMinimum);
    }
    let voxels = volume
        .voxels()
        .iter()
        .map(|p| (p / divisor).clamp(-LUNG_WINDOW_CLAMP, LUNG_WINDOW_CLAMP))
        .collect();
    Ok(volume.advance(voxels, UnitState::Normalized))
}

/// Mean and population standard deviation of raw stored values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZScoreStats {
    pub mu: f64,
    pub sigma: f64,
}

impl ZScoreStats {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !mu.is_finite() || !sigma.is_finite() {
            return Err(Error::InvalidConfig(format!("invalid z-score stats ({mu}, {sigma})")));
        }
        Ok(Self { mu, sigma })
    }
}

/// Population statistics over every voxel of every volume.
///
/// Integral inputs (the normal case for stored DICOM values) are accumulated
/// exactly in integers, so the result does not depend on volume order.
pub fn compute_zscore_stats(volumes: &[&CtVolume]) -> Result<ZScoreStats> {
    if volumes.is_empty() {
        return Err(Error::EmptyInput);
    }
    for v in volumes {
        v.require_state(UnitState::RawStored)?;
    }
    let n: usize = volumes.iter().map(|v| v.voxels().len()).sum();
    if n < 2 {
        return Err(Error::EmptyInput);
    }
    let all = || volumes.iter().flat_map(|v| v.voxels().iter().copied());
    let integral = all().all(|p| p.fract() == 0.0 && p.abs() < 2f64.powi(40));

    let (mu, var) = if integral {
        let (mut s, mut s2) = (0i128, 0i128);
        for p in all() {
            let p = p as i128;
            s += p;
            s2 += p * p;
        }
        let n = n as i128;
        // var = (n*s2 - s^2) / n^2, numerator exact
        let num = n * s2 - s * s;
        (s as f64 / n as f64, num as f64 / (n as f64 * n as f64))
    } else {
        let mean = all().sum::<f64>() / n as f64;
        let var = all().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n as f64;
        (mean, var)
    };
    if var <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(ZScoreStats {
        mu,
        sigma: var.sqrt(),
    })
}

pub fn normalize_zscore(volume: &CtVolume, stats: ZScoreStats) -> Result<CtVolume> {
    volume.require_state(UnitState::RawStored)?;
    let voxels = volume
        .voxels()
        .iter()
        .map(|p| (p - stats.mu) / stats.sigma)
        .collect();
    Ok(volume.advance(voxels, UnitState::Normalized))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Axial,
    Coronal,
    Sagittal,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Axial, Axis::Coronal, Axis::Sagittal];

    /// `(plane count, width, height)` of planes orthogonal to this axis.
    pub fn plane_shape(self, d: Dims) -> (usize, usize, usize) {
        match self {
            Axis::Axial => (d.nz, d.nx, d.ny),
            Axis::Coronal => (d.ny, d.nx, d.nz),
            Axis::Sagittal => (d.nx, d.ny, d.nz),
        }
    }

    /// Volume index of in-plane position `(u, v)` on plane `k`.
    #[inline]
    fn volume_index(self, d: Dims, k: usize, u: usize, v: usize) -> usize {
        match self {
            Axis::Axial => d.index(u, v, k),
            Axis::Coronal => d.index(u, k, v),
            Axis::Sagittal => d.index(k, u, v),
        }
    }
}

/// Coordinate channels attached to one plane: x ramp, y ramp, plane index.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordChannels {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub depth: Vec<f64>,
}

/// Ordered 2-D slabs of a volume, row-major with `u` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneStack {
    pub axis: Axis,
    pub width: usize,
    pub height: usize,
    pub planes: Vec<Vec<f64>>,
    pub coords: Option<Vec<CoordChannels>>,
}

impl PlaneStack {
    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    /// Inverse of [`extract_projection`]: stacks planes back into volume
    /// order. The stack must have the in-plane size implied by `dims`.
    pub fn to_volume_data(&self, dims: Dims) -> Result<Vec<f64>> {
        let (n, w, h) = self.axis.plane_shape(dims);
        if n != self.planes.len() || w != self.width || h != self.height {
            return Err(Error::DimsMismatch(
                dims,
                Dims::new(self.width, self.height, self.planes.len()),
            ));
        }
        let mut out = vec![0.0; dims.len()];
        for (k, plane) in self.planes.iter().enumerate() {
            for v in 0..h {
                for u in 0..w {
                    out[self.axis.volume_index(dims, k, u, v)] = plane[u + w * v];
                }
            }
        }
        Ok(out)
    }

    /// Reassembles per-plane probabilities into a volume.
    pub fn to_probability(&self, dims: Dims) -> Result<ProbabilityVolume> {
        let data = self.to_volume_data(dims)?;
        ProbabilityVolume::new(dims, data.into_iter().map(|p| p as f32).collect())
    }
}

fn projection_of(dims: Dims, data: &[f64], axis: Axis) -> PlaneStack {
    let (n, w, h) = axis.plane_shape(dims);
    let planes = (0..n)
        .map(|k| {
            let mut plane = Vec::with_capacity(w * h);
            for v in 0..h {
                for u in 0..w {
                    plane.push(data[axis.volume_index(dims, k, u, v)]);
                }
            }
            plane
        })
        .collect();
    PlaneStack {
        axis,
        width: w,
        height: h,
        planes,
        coords: None,
    }
}

/// Slabs of `volume` orthogonal to `axis`, in ascending index order.
pub fn extract_projection(volume: &CtVolume, axis: Axis) -> PlaneStack {
    projection_of(volume.dims(), volume.voxels(), axis)
}

pub fn extract_probability_projection(volume: &ProbabilityVolume, axis: Axis) -> PlaneStack {
    let data: Vec<f64> = volume.probs().iter().map(|p| *p as f64).collect();
    projection_of(volume.dims(), &data, axis)
}

/// Corner-aligned sample positions: output `i` maps to `i * (src-1)/(dst-1)`.
fn sample_positions(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|i| {
            if src == 1 || dst == 1 {
                return (0, 0, 0.0);
            }
            let pos = i as f64 * (src - 1) as f64 / (dst - 1) as f64;
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

fn bilinear(plane: &[f64], w: usize, h: usize, tw: usize, th: usize) -> Vec<f64> {
    if w == tw && h == th {
        return plane.to_vec();
    }
    let xs = sample_positions(w, tw);
    let ys = sample_positions(h, th);
    let mut out = Vec::with_capacity(tw * th);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let a = plane[x0 + w * y0];
            let b = plane[x1 + w * y0];
            let c = plane[x0 + w * y1];
            let d = plane[x1 + w * y1];
            let top = a + (b - a) * fx;
            let bottom = c + (d - c) * fx;
            out.push(top + (bottom - top) * fy);
        }
    }
    out
}

fn ramp(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

/// Bilinearly resamples each plane to `target` and attaches the three
/// coordinate channels.
pub fn resize_with_coords(stack: &PlaneStack, target: (usize, usize)) -> Result<PlaneStack> {
    let (tw, th) = target;
    if stack.is_empty() || stack.width == 0 || stack.height == 0 {
        return Err(Error::EmptyInput);
    }
    if tw == 0 || th == 0 {
        return Err(Error::InvalidConfig(format!("resize target {target:?}")));
    }
    let planes: Vec<Vec<f64>> = stack
        .planes
        .iter()
        .map(|p| bilinear(p, stack.width, stack.height, tw, th))
        .collect();
    let x: Vec<f64> = (0..th).flat_map(|_| (0..tw).map(|u| ramp(u, tw))).collect();
    let y: Vec<f64> = (0..th).flat_map(|v| std::iter::repeat_n(ramp(v, th), tw)).collect();
    let n = planes.len();
    let coords = (0..n)
        .map(|k| CoordChannels {
            x: x.clone(),
            y: y.clone(),
            depth: vec![ramp(k, n); tw * th],
        })
        .collect();
    Ok(PlaneStack {
        axis: stack.axis,
        width: tw,
        height: th,
        planes,
        coords: Some(coords),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Spacing;

    fn vol(values: Vec<f64>, state: UnitState) -> CtVolume {
        let n = values.len();
        CtVolume::new(Dims::new(n, 1, 1), Spacing::default(), values, state).unwrap()
    }

    #[test]
    fn hounsfield_arithmetic() {
        let v = vol(vec![0.0, 524.0], UnitState::RawStored).with_rescale(1.0, -1024.0);
        let hu = to_hounsfield(&v).unwrap();
        assert_eq!(hu.voxels(), &[-1024.0, -500.0]);
        assert_eq!(hu.unit_state(), UnitState::Hounsfield);
        assert_eq!(hu.rescale_intercept, -1024.0);

        let v = vol(vec![5.0], UnitState::RawStored).with_rescale(2.0, 10.0);
        assert_eq!(to_hounsfield(&v).unwrap().voxels(), &[20.0]);

        let v = vol(vec![-3.0, 7.0], UnitState::RawStored);
        assert_eq!(to_hounsfield(&v).unwrap().voxels(), &[-3.0, 7.0]);

        assert!(matches!(
            to_hounsfield(&to_hounsfield(&v).unwrap()),
            Err(Error::WrongUnitState { .. })
        ));
    }

    #[test]
    fn lung_window_examples() {
        let v = vol(vec![-1024.0, -500.0, 1024.0], UnitState::Hounsfield);
        let n = normalize_lung_window(&v).unwrap();
        assert_eq!(n.voxels(), &[-0.505, -0.48828125, 0.505]);

        let v = vol(vec![-1.0; 3], UnitState::Hounsfield);
        assert_eq!(normalize_lung_window(&v).unwrap().voxels(), &[-0.505; 3]);

        let v = vol(vec![0.0; 3], UnitState::Hounsfield);
        assert!(matches!(normalize_lung_window(&v), Err(Error::DegenerateMinimum)));
        let v = vol(vec![0.0; 3], UnitState::RawStored);
        assert!(matches!(normalize_lung_window(&v), Err(Error::WrongUnitState { .. })));
    }

    #[test]
    fn zscore_examples() {
        let a = vol(vec![1.0, 3.0], UnitState::RawStored);
        let s = compute_zscore_stats(&[&a]).unwrap();
        assert_eq!((s.mu, s.sigma), (2.0, 1.0));
        assert_eq!(normalize_zscore(&vol(vec![3.0], UnitState::RawStored), s).unwrap().voxels(), &[1.0]);

        let z = vol(vec![0.0; 4], UnitState::RawStored);
        assert!(matches!(compute_zscore_stats(&[&z]), Err(Error::ZeroVariance)));
        assert!(matches!(compute_zscore_stats(&[]), Err(Error::EmptyInput)));
        let one = vol(vec![4.0], UnitState::RawStored);
        assert!(matches!(compute_zscore_stats(&[&one]), Err(Error::EmptyInput)));

        let id = ZScoreStats::new(0.0, 1.0).unwrap();
        assert_eq!(normalize_zscore(&a, id).unwrap().voxels(), a.voxels());
    }

    #[test]
    fn zscore_is_order_independent() {
        let a = vol(vec![1.0, 9.0, -4.0], UnitState::RawStored);
        let b = vol(vec![100.0, 3.0], UnitState::RawStored);
        assert_eq!(
            compute_zscore_stats(&[&a, &b]).unwrap(),
            compute_zscore_stats(&[&b, &a]).unwrap()
        );
    }

    #[test]
    fn axial_projection_locates_voxel() {
        let dims = Dims::new(4, 3, 2);
        let mut data = vec![0.0; dims.len()];
        data[dims.index(2, 1, 1)] = 1.0;
        let v = CtVolume::new(dims, Spacing::default(), data, UnitState::Hounsfield).unwrap();
        let s = extract_projection(&v, Axis::Axial);
        assert_eq!((s.len(), s.width, s.height), (2, 4, 3));
        assert_eq!(s.planes[1][2 + 4], 1.0);
        assert_eq!(s.planes[0].iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn resize_properties() {
        let stack = PlaneStack {
            axis: Axis::Axial,
            width: 5,
            height: 3,
            planes: vec![vec![7.5; 15], vec![-2.0; 15]],
            coords: None,
        };
        let r = resize_with_coords(&stack, (128, 128)).unwrap();
        assert!(r.planes[0].iter().all(|v| *v == 7.5));
        assert!(r.planes[1].iter().all(|v| *v == -2.0));
        let c = r.coords.as_ref().unwrap();
        assert_eq!(c[0].x[0], 0.0);
        assert_eq!(c[0].x[127], 1.0);
        assert_eq!(c[0].y[0], 0.0);
        assert_eq!(c[0].y[127 * 128], 1.0);
        assert_eq!(c[0].depth[0], 0.0);
        assert_eq!(c[1].depth[0], 1.0);

        let plane: Vec<f64> = (0..128 * 128).map(|i| (i * 37 % 101) as f64).collect();
        let square = PlaneStack {
            axis: Axis::Coronal,
            width: 128,
            height: 128,
            planes: vec![plane.clone()],
            coords: None,
        };
        assert_eq!(resize_with_coords(&square, (128, 128)).unwrap().planes[0], plane);
    }

    #[test]
    fn bilinear_midpoint() {
        // 2x1 plane [0, 10] upsampled to 3x1 samples at 0, 0.5, 1.
        assert_eq!(bilinear(&[0.0, 10.0], 2, 1, 3, 1), vec![0.0, 5.0, 10.0]);
    }
}
