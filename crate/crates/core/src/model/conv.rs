//! Kernel-4 3-D convolution and its adjoint (transposed convolution).
//!
//! Feature maps are channel-first with x fastest inside each channel plane.
//! Both layers lower to a GEMM over an im2col matrix whose rows are indexed
//! by `(channel, kz, ky, kx)` and whose columns are the low-resolution voxels.

use rand::Rng;

use super::tensor::{gemm, Tensor};
use crate::datakit::Dims;

pub const KERNEL: usize = 4;
const KERNEL_VOLUME: usize = KERNEL * KERNEL * KERNEL;

/// Sampling geometry of one downsampling stage. `fine` is the
/// high-resolution grid (convolution input, transposed-convolution output)
/// and `coarse` the low-resolution one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub fine: Dims,
    pub coarse: Dims,
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl ConvGeometry {
    /// Halves every axis longer than one voxel (stride 2, padding 1) and keeps
    /// unit axes at size one (stride 1, padding 1 before and 2 after).
    /// Returns `None` if an axis is odd and longer than one.
    pub fn halving(fine: Dims) -> Option<Self> {
        let mut coarse = [0; 3];
        let mut stride = [0; 3];
        for a in 0..3 {
            match fine[a] {
                0 => return None,
                1 => {
                    coarse[a] = 1;
                    stride[a] = 1;
                }
                d if d % 2 == 0 => {
                    coarse[a] = d / 2;
                    stride[a] = 2;
                }
                _ => return None,
            }
        }
        Some(Self {
            fine,
            coarse,
            stride,
            pad: [1, 1, 1],
        })
    }

    pub fn fine_voxels(&self) -> usize {
        self.fine.iter().product()
    }

    pub fn coarse_voxels(&self) -> usize {
        self.coarse.iter().product()
    }

    /// For each axis and kernel tap, the contiguous range of coarse indices
    /// whose tap lands inside the fine grid, as `(first, count, fine index of
    /// first)`. Consecutive coarse indices step by the stride in the fine grid.
    fn taps(&self) -> [[(usize, usize, usize); KERNEL]; 3] {
        std::array::from_fn(|a| {
            std::array::from_fn(|k| {
                let fine_of = |o: usize| (o * self.stride[a] + k) as isize - self.pad[a] as isize;
                let valid: Vec<usize> = (0..self.coarse[a])
                    .filter(|&o| {
                        let i = fine_of(o);
                        i >= 0 && (i as usize) < self.fine[a]
                    })
                    .collect();
                match valid.first() {
                    Some(&o) => (o, valid.len(), fine_of(o) as usize),
                    None => (0, 0, 0),
                }
            })
        })
    }

    /// Gathers `[channels, fine]` into `[channels * 64, coarse]`.
    pub fn im2col(&self, x: &[f64], channels: usize) -> Vec<f64> {
        let nf = self.fine_voxels();
        let nc = self.coarse_voxels();
        debug_assert_eq!(x.len(), channels * nf);
        let mut cols = vec![0.0; channels * KERNEL_VOLUME * nc];
        self.for_each_run(channels, |row, c, src, dst, n, sx| {
            let plane = &x[c * nf..(c + 1) * nf];
            let out = &mut cols[row * nc..(row + 1) * nc];
            for j in 0..n {
                out[dst + j] = plane[src + j * sx];
            }
        });
        cols
    }

    /// Scatter-adds `[channels * 64, coarse]` into `[channels, fine]`; the
    /// adjoint of [`im2col`](Self::im2col).
    pub fn col2im(&self, cols: &[f64], channels: usize) -> Vec<f64> {
        let nf = self.fine_voxels();
        let nc = self.coarse_voxels();
        debug_assert_eq!(cols.len(), channels * KERNEL_VOLUME * nc);
        let mut x = vec![0.0; channels * nf];
        self.for_each_run(channels, |row, c, src, dst, n, sx| {
            let plane = &mut x[c * nf..(c + 1) * nf];
            let from = &cols[row * nc..(row + 1) * nc];
            for j in 0..n {
                plane[src + j * sx] += from[dst + j];
            }
        });
        x
    }

    /// Visits every x-run of the im2col mapping as
    /// `(row, channel, fine start, coarse start, length, fine stride)`.
    fn for_each_run(
        &self,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize, usize, usize, usize),
    ) {
        let [cx, cy, _] = self.coarse;
        let [fx, fy, _] = self.fine;
        let taps = self.taps();
        let [sx, sy, sz] = self.stride;
        for c in 0..channels {
            for kz in 0..KERNEL {
                let (oz0, nz, iz0) = taps[2][kz];
                for ky in 0..KERNEL {
                    let (oy0, ny, iy0) = taps[1][ky];
                    for kx in 0..KERNEL {
                        let (ox0, nx, ix0) = taps[0][kx];
                        if nx == 0 {
                            continue;
                        }
                        let row = c * KERNEL_VOLUME + (kz * KERNEL + ky) * KERNEL + kx;
                        for dz in 0..nz {
                            let (oz, iz) = (oz0 + dz, iz0 + dz * sz);
                            for dy in 0..ny {
                                let (oy, iy) = (oy0 + dy, iy0 + dy * sy);
                                let src = (iz * fy + iy) * fx + ix0;
                                let dst = (oz * cy + oy) * cx + ox0;
                                f(row, c, src, dst, nx, sx);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn kaiming_bound(fan_in: usize) -> f64 {
    // Gain for a leaky ReLU with slope 0.2.
    let gain = (2.0 / (1.0 + 0.04f64)).sqrt();
    gain * (3.0 / fan_in as f64).sqrt()
}

/// Downsampling convolution, weight `[out, in * 64]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d {
    pub weight: Tensor,
    pub bias: Tensor,
}

pub struct ConvCache {
    cols: Vec<f64>,
}

impl Conv3d {
    pub fn new(in_ch: usize, out_ch: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: Tensor::uniform(
                &[out_ch, in_ch * KERNEL_VOLUME],
                kaiming_bound(in_ch * KERNEL_VOLUME),
                rng,
            ),
            bias: Tensor::zeros(&[out_ch]),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape[1] / KERNEL_VOLUME
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&self, geom: &ConvGeometry, x: &[f64]) -> (Vec<f64>, ConvCache) {
        let cin = self.in_channels();
        let cout = self.out_channels();
        let p = geom.coarse_voxels();
        let cols = geom.im2col(x, cin);
        let mut y = vec![0.0; cout * p];
        for (c, row) in y.chunks_mut(p).enumerate() {
            row.fill(self.bias.data[c]);
        }
        gemm(
            cout,
            cin * KERNEL_VOLUME,
            p,
            &self.weight.data,
            false,
            &cols,
            false,
            1.0,
            &mut y,
        );
        (y, ConvCache { cols })
    }

    /// Accumulates parameter gradients into `grad` and returns the input
    /// gradient when `need_input` is set.
    pub fn backward(
        &self,
        geom: &ConvGeometry,
        cache: &ConvCache,
        dy: &[f64],
        grad: &mut Conv3d,
        need_input: bool,
    ) -> Option<Vec<f64>> {
        let cin = self.in_channels();
        let cout = self.out_channels();
        let k = cin * KERNEL_VOLUME;
        let p = geom.coarse_voxels();
        gemm(
            cout,
            p,
            k,
            dy,
            false,
            &cache.cols,
            true,
            1.0,
            &mut grad.weight.data,
        );
        for (c, row) in dy.chunks(p).enumerate() {
            grad.bias.data[c] += row.iter().sum::<f64>();
        }
        need_input.then(|| {
            let mut dcols = vec![0.0; k * p];
            gemm(
                k,
                cout,
                p,
                &self.weight.data,
                true,
                dy,
                false,
                0.0,
                &mut dcols,
            );
            geom.col2im(&dcols, cin)
        })
    }
}

/// Upsampling transposed convolution, weight `[in, out * 64]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose3d {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ConvTranspose3d {
    pub fn new(in_ch: usize, out_ch: usize, rng: &mut impl Rng) -> Self {
        // Each output voxel receives in_ch * 8 taps at stride 2.
        Self {
            weight: Tensor::uniform(
                &[in_ch, out_ch * KERNEL_VOLUME],
                kaiming_bound(in_ch * 8),
                rng,
            ),
            bias: Tensor::zeros(&[out_ch]),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape[1] / KERNEL_VOLUME
    }

    /// Maps `[in, coarse]` to `[out, fine]`.
    pub fn forward(&self, geom: &ConvGeometry, y: &[f64]) -> Vec<f64> {
        let cin = self.in_channels();
        let cout = self.out_channels();
        let p = geom.coarse_voxels();
        let k = cout * KERNEL_VOLUME;
        let mut cols = vec![0.0; k * p];
        gemm(k, cin, p, &self.weight.data, true, y, false, 0.0, &mut cols);
        let mut out = geom.col2im(&cols, cout);
        let q = geom.fine_voxels();
        for (c, plane) in out.chunks_mut(q).enumerate() {
            let b = self.bias.data[c];
            plane.iter_mut().for_each(|v| *v += b);
        }
        out
    }

    /// `y` is the forward input. Returns the gradient with respect to it.
    pub fn backward(
        &self,
        geom: &ConvGeometry,
        y: &[f64],
        dout: &[f64],
        grad: &mut ConvTranspose3d,
    ) -> Vec<f64> {
        let cin = self.in_channels();
        let cout = self.out_channels();
        let p = geom.coarse_voxels();
        let q = geom.fine_voxels();
        let k = cout * KERNEL_VOLUME;
        for (c, plane) in dout.chunks(q).enumerate() {
            grad.bias.data[c] += plane.iter().sum::<f64>();
        }
        let dcols = geom.im2col(dout, cout);
        gemm(
            cin,
            p,
            k,
            y,
            false,
            &dcols,
            true,
            1.0,
            &mut grad.weight.data,
        );
        let mut dy = vec![0.0; cin * p];
        gemm(
            cin,
            k,
            p,
            &self.weight.data,
            false,
            &dcols,
            false,
            0.0,
            &mut dy,
        );
        dy
    }
}
