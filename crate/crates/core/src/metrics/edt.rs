//! Exact squared Euclidean distance transform on an anisotropic grid, by
//! separable lower envelopes of parabolas along each axis.

use crate::datakit::{Dims, Spacing};

/// 1-D pass. `f` holds squared distances (or infinity) at sample positions
/// `i * w`; the result overwrites it.
fn transform_line(
    f: &mut [f64],
    w: f64,
    sites: &mut Vec<usize>,
    bounds: &mut Vec<f64>,
    out: &mut Vec<f64>,
) {
    let n = f.len();
    sites.clear();
    bounds.clear();
    let pos = |i: usize| i as f64 * w;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let Some(&v) = sites.last() else {
                sites.push(q);
                bounds.push(f64::NEG_INFINITY);
                break;
            };
            let s =
                ((f[q] + pos(q) * pos(q)) - (f[v] + pos(v) * pos(v))) / (2.0 * (pos(q) - pos(v)));
            if s <= *bounds.last().expect("paired with sites") {
                sites.pop();
                bounds.pop();
            } else {
                sites.push(q);
                bounds.push(s);
                break;
            }
        }
    }
    if sites.is_empty() {
        return;
    }
    out.clear();
    let mut k = 0;
    for q in 0..n {
        let x = pos(q);
        while k + 1 < sites.len() && bounds[k + 1] < x {
            k += 1;
        }
        let v = sites[k];
        let d = x - pos(v);
        out.push(d * d + f[v]);
    }
    f.copy_from_slice(out);
}

/// Squared distance in mm from every voxel centre to the nearest voxel with
/// `feature[i] == true`. All entries are infinite when there is no feature.
pub fn squared_edt(feature: &[bool], dims: Dims, spacing: Spacing) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    debug_assert_eq!(feature.len(), nx * ny * nz);
    let mut d: Vec<f64> = feature
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();
    let (mut sites, mut bounds, mut out) = (Vec::new(), Vec::new(), Vec::new());
    let mut line = Vec::new();
    // Axis x: contiguous lines.
    for row in d.chunks_mut(nx) {
        transform_line(row, spacing[0], &mut sites, &mut bounds, &mut out);
    }
    // Axis y.
    for z in 0..nz {
        for x in 0..nx {
            line.clear();
            line.extend((0..ny).map(|y| d[x + nx * (y + ny * z)]));
            transform_line(&mut line, spacing[1], &mut sites, &mut bounds, &mut out);
            for (y, v) in line.iter().enumerate() {
                d[x + nx * (y + ny * z)] = *v;
            }
        }
    }
    // Axis z.
    for y in 0..ny {
        for x in 0..nx {
            line.clear();
            line.extend((0..nz).map(|z| d[x + nx * (y + ny * z)]));
            transform_line(&mut line, spacing[2], &mut sites, &mut bounds, &mut out);
            for (z, v) in line.iter().enumerate() {
                d[x + nx * (y + ny * z)] = *v;
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(feature: &[bool], dims: Dims, sp: Spacing) -> Vec<f64> {
        let [nx, ny, nz] = dims;
        let pts: Vec<[f64; 3]> = (0..feature.len())
            .filter(|&i| feature[i])
            .map(|i| {
                let (x, y, z) = (i % nx, (i / nx) % ny, i / (nx * ny));
                [x as f64 * sp[0], y as f64 * sp[1], z as f64 * sp[2]]
            })
            .collect();
        (0..nx * ny * nz)
            .map(|i| {
                let (x, y, z) = (i % nx, (i / nx) % ny, i / (nx * ny));
                let p = [x as f64 * sp[0], y as f64 * sp[1], z as f64 * sp[2]];
                pts.iter()
                    .map(|q| (0..3).map(|a| (p[a] - q[a]).powi(2)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn empty_feature_is_infinite() {
        let d = squared_edt(&[false; 8], [2, 2, 2], [1.0; 3]);
        assert!(d.iter().all(|v| v.is_infinite()));
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            nx in 1usize..7, ny in 1usize..7, nz in 1usize..5,
            sx in 0.5f64..3.0, sy in 0.5f64..3.0, sz in 0.5f64..9.0,
            seed in any::<u64>(),
        ) {
            let n = nx * ny * nz;
            let feature: Vec<bool> = (0..n).map(|i| (seed.rotate_left(i as u32 % 64) ^ (i as u64 * 2654435761)) % 5 == 0).collect();
            let got = squared_edt(&feature, [nx, ny, nz], [sx, sy, sz]);
            let want = brute(&feature, [nx, ny, nz], [sx, sy, sz]);
            for (g, w) in got.iter().zip(&want) {
                if w.is_infinite() {
                    prop_assert!(g.is_infinite());
                } else {
                    prop_assert!((g - w).abs() <= 1e-9 * w.max(1.0));
                }
            }
        }
    }
}
