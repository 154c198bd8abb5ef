//! 26-connected component labeling of binary volumes.

use crate::volume::{BinaryMask, Dims};

/// Component labels (0 = background, components numbered from 1 in scan
/// order of their first voxel) and the voxel count of each component.
#[derive(Debug, Clone)]
pub struct Components {
    pub labels: Vec<u32>,
    /// `sizes[l - 1]` is the size of component `l`.
    pub sizes: Vec<usize>,
}

fn neighbor_offsets() -> Vec<(isize, isize, isize)> {
    let mut out = Vec::with_capacity(26);
    for dz in -1..=1 {
        for dy in -1..=1 {
            for dx in -1..=1 {
                if (dx, dy, dz) != (0, 0, 0) {
                    out.push((dx, dy, dz));
                }
            }
        }
    }
    out
}

pub fn label_components(mask: &BinaryMask) -> Components {
    let dims = mask.dims();
    let bits = mask.bits();
    let offsets = neighbor_offsets();
    let mut labels = vec![0u32; dims.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();

    for start in 0..dims.len() {
        if !bits[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        stack.push(start);
        let mut size = 0usize;
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y, z) = dims.coords(i);
            for &(dx, dy, dz) in &offsets {
                let Some(j) = step(dims, x, y, z, dx, dy, dz) else {
                    continue;
                };
                if bits[j] && labels[j] == 0 {
                    labels[j] = label;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }
    Components { labels, sizes }
}

#[inline]
fn step(d: Dims, x: usize, y: usize, z: usize, dx: isize, dy: isize, dz: isize) -> Option<usize> {
    let nx = x.checked_add_signed(dx).filter(|v| *v < d.nx)?;
    let ny = y.checked_add_signed(dy).filter(|v| *v < d.ny)?;
    let nz = z.checked_add_signed(dz).filter(|v| *v < d.nz)?;
    Some(d.index(nx, ny, nz))
}

/// Drops components with fewer than `min_voxels` voxels.
pub fn remove_small_components(mask: &BinaryMask, min_voxels: usize) -> BinaryMask {
    if min_voxels <= 1 {
        return mask.clone();
    }
    let comps = label_components(mask);
    let bits = comps
        .labels
        .iter()
        .map(|&l| l != 0 && comps.sizes[l as usize - 1] >= min_voxels)
        .collect();
    BinaryMask::new(mask.dims(), bits).expect("same dims")
}
