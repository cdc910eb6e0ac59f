//! Dice overlap and boundary distances between label maps.

use super::edt::squared_edt;
use crate::datakit::{Dims, Label, SegVolume, Spacing};
use crate::error::{invalid, Error, Result};

fn check_grid(a: &SegVolume, b: &SegVolume) -> Result<()> {
    if !a.same_grid(b) {
        return Err(Error::ShapeMismatch(format!(
            "volumes differ in grid: {:?}/{:?} vs {:?}/{:?}",
            a.dims(),
            a.spacing(),
            b.dims(),
            b.spacing()
        )));
    }
    Ok(())
}

/// `2|A ∩ B| / (|A| + |B|)`; 1 when both masks are empty.
pub fn dice(a: &SegVolume, b: &SegVolume, label: Label) -> Result<f64> {
    check_grid(a, b)?;
    let id = label.id();
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        let (ia, ib) = (x == id, y == id);
        na += ia as usize;
        nb += ib as usize;
        both += (ia && ib) as usize;
    }
    Ok(dice_from_counts(na, nb, both))
}

pub(crate) fn dice_from_counts(na: usize, nb: usize, both: usize) -> f64 {
    if na + nb == 0 {
        1.0
    } else {
        2.0 * both as f64 / (na + nb) as f64
    }
}

/// Mask voxels with at least one 6-neighbour outside the mask; the grid
/// edge counts as outside.
pub fn boundary(mask: &[bool], dims: Dims) -> Vec<bool> {
    let [nx, ny, nz] = dims;
    let mut out = vec![false; mask.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                if !mask[i] {
                    continue;
                }
                let inside = |dx: isize, dy: isize, dz: isize| {
                    let (xx, yy, zz) = (x as isize + dx, y as isize + dy, z as isize + dz);
                    if xx < 0
                        || yy < 0
                        || zz < 0
                        || xx >= nx as isize
                        || yy >= ny as isize
                        || zz >= nz as isize
                    {
                        return false;
                    }
                    mask[xx as usize + nx * (yy as usize + ny * zz as usize)]
                };
                out[i] = !(inside(-1, 0, 0)
                    && inside(1, 0, 0)
                    && inside(0, -1, 0)
                    && inside(0, 1, 0)
                    && inside(0, 0, -1)
                    && inside(0, 0, 1));
            }
        }
    }
    out
}

/// Hausdorff distance and ASSD (mm) between two boundary sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceDistances {
    pub hausdorff: f64,
    pub assd: f64,
}

/// Distances between the boundaries of two non-empty masks, or `None` if
/// either is empty.
pub fn surface_distances(
    a: &[bool],
    b: &[bool],
    dims: Dims,
    spacing: Spacing,
) -> Option<SurfaceDistances> {
    let ba = boundary(a, dims);
    let bb = boundary(b, dims);
    if !ba.contains(&true) || !bb.contains(&true) {
        return None;
    }
    let da = squared_edt(&ba, dims, spacing);
    let db = squared_edt(&bb, dims, spacing);
    let directed = |from: &[bool], to: &[f64]| {
        let (mut max, mut sum, mut n) = (0.0f64, 0.0, 0usize);
        for (i, _) in from.iter().enumerate().filter(|(_, &f)| f) {
            let d = to[i].sqrt();
            max = max.max(d);
            sum += d;
            n += 1;
        }
        (max, sum / n as f64)
    };
    let (max_ab, mean_ab) = directed(&ba, &db);
    let (max_ba, mean_ba) = directed(&bb, &da);
    Some(SurfaceDistances {
        hausdorff: max_ab.max(max_ba),
        assd: 0.5 * (mean_ab + mean_ba),
    })
}

fn distances(a: &SegVolume, b: &SegVolume, label: Label) -> Result<SurfaceDistances> {
    check_grid(a, b)?;
    surface_distances(&a.mask(label), &b.mask(label), a.dims(), a.spacing()).ok_or_else(|| {
        invalid!(
            "{} mask is empty; boundary distance is undefined",
            label.name()
        )
    })
}

/// Symmetric Hausdorff distance (mm) between the boundary voxel centres.
pub fn hausdorff(a: &SegVolume, b: &SegVolume, label: Label) -> Result<f64> {
    distances(a, b, label).map(|d| d.hausdorff)
}

/// Average symmetric surface distance (mm): the mean of the two directed
/// mean boundary distances.
pub fn assd(a: &SegVolume, b: &SegVolume, label: Label) -> Result<f64> {
    distances(a, b, label).map(|d| d.assd)
}
