//! PCA over flattened one-hot sequences, with completion from an observed
//! leading block of frames by least squares in the component subspace.
//!
//! Components are never materialized over the full sequence dimension.
//! Each one is kept as a linear combination of the centred training
//! samples, `u_k = sum_i A[k, i] (x_i - mean)`, which is what the Gram-matrix
//! eigen-decomposition yields directly.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::archive::{bytes_f64, f64_bytes, pack, read_file, unpack, write_file};
use crate::datakit::{
    decode_labels, AnatomySequence, Dims, SegVolume, Spacing, SubjectRecord, N_CLASSES,
};
use crate::error::{invalid, Error, Result};

pub const PCA_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_COMPONENTS: usize = 50;
const RIDGE: f64 = 1e-6;
/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PcaMeta {
    format_version: u32,
    dims: Dims,
    spacing: Spacing,
    t_frames: usize,
    frame_period_s: f64,
    n_train: usize,
    k: usize,
    requested_k: usize,
    eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    dims: Dims,
    spacing: Spacing,
    t_frames: usize,
    frame_period_s: f64,
    /// Training labels, subject-major then frame then voxel.
    train_labels: Vec<u8>,
    n_train: usize,
    /// Mean one-hot sequence, length `T * 4 * V`, frame-major and
    /// channel-first within a frame.
    mean: Vec<f64>,
    /// `k x n_train`, row-major.
    coeffs: Vec<f64>,
    k: usize,
    requested_k: usize,
    /// Eigenvalues of the centred Gram matrix, descending.
    eigenvalues: Vec<f64>,
}

impl PcaModel {
    fn voxels(&self) -> usize {
        self.dims.iter().product()
    }

    fn frame_len(&self) -> usize {
        N_CLASSES * self.voxels()
    }

    /// Dimension of the flattened sequence representation.
    pub fn dim(&self) -> usize {
        self.t_frames * self.frame_len()
    }

    /// Number of retained components (at most the rank of the centred data).
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn requested_k(&self) -> usize {
        self.requested_k
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn t_frames(&self) -> usize {
        self.t_frames
    }

    /// Variance explained by each retained component.
    pub fn explained_variance(&self) -> Vec<f64> {
        let denom = (self.n_train.max(2) - 1) as f64;
        self.eigenvalues[..self.k]
            .iter()
            .map(|l| l / denom)
            .collect()
    }

    fn label(&self, i: usize, t: usize, v: usize) -> u8 {
        let vox = self.voxels();
        self.train_labels[(i * self.t_frames + t) * vox + v]
    }

    /// Rows of the component matrix restricted to the first `frames`
    /// frames, as a `k x (frames * 4V)` matrix.
    fn component_block(&self, frames: usize) -> DMatrix<f64> {
        let vox = self.voxels();
        let fl = self.frame_len();
        let width = frames * fl;
        let mut u = DMatrix::<f64>::zeros(self.k, width);
        for kk in 0..self.k {
            let a = &self.coeffs[kk * self.n_train..(kk + 1) * self.n_train];
            let a_sum: f64 = a.iter().sum();
            let mut row = vec![0.0; width];
            for (i, &ai) in a.iter().enumerate() {
                for t in 0..frames {
                    for v in 0..vox {
                        row[t * fl + self.label(i, t, v) as usize * vox + v] += ai;
                    }
                }
            }
            for (j, r) in row.iter().enumerate() {
                u[(kk, j)] = r - a_sum * self.mean[j];
            }
        }
        u
    }

    /// Full-length component `k` (for inspection and tests).
    pub fn component(&self, k: usize) -> Vec<f64> {
        assert!(k < self.k, "component index out of range");
        let u = self.component_block(self.t_frames);
        u.row(k).iter().copied().collect()
    }

    /// Least-squares component weights given the one-hot encoding of the
    /// first `observed.len() / (4V)` frames.
    fn weights(&self, observed: &[f64]) -> Result<DVector<f64>> {
        if self.k == 0 {
            return Ok(DVector::zeros(0));
        }
        let frames = observed.len() / self.frame_len();
        let u = self.component_block(frames);
        let centred = DVector::from_iterator(
            observed.len(),
            observed.iter().zip(&self.mean).map(|(x, m)| x - m),
        );
        let normal = &u * u.transpose();
        let rhs = &u * centred;
        if let Some(ch) = normal.clone().cholesky() {
            return Ok(ch.solve(&rhs));
        }
        log::debug!("PCA normal equations singular; using ridge {RIDGE}");
        let ridged = normal + DMatrix::identity(self.k, self.k) * RIDGE;
        ridged.cholesky().map(|ch| ch.solve(&rhs)).ok_or_else(|| {
            invalid!("PCA normal equations are not positive definite even with ridge")
        })
    }

    /// Full flattened reconstruction `mean + U^T w`.
    fn reconstruct(&self, w: &DVector<f64>) -> Vec<f64> {
        let vox = self.voxels();
        let fl = self.frame_len();
        let beta: Vec<f64> = (0..self.n_train)
            .map(|i| {
                (0..self.k)
                    .map(|kk| w[kk] * self.coeffs[kk * self.n_train + i])
                    .sum()
            })
            .collect();
        let beta_sum: f64 = beta.iter().sum();
        let mut out: Vec<f64> = self.mean.iter().map(|m| m * (1.0 - beta_sum)).collect();
        for (i, &b) in beta.iter().enumerate() {
            for t in 0..self.t_frames {
                for v in 0..vox {
                    out[t * fl + self.label(i, t, v) as usize * vox + v] += b;
                }
            }
        }
        out
    }

    fn decode(&self, flat: &[f64]) -> Result<AnatomySequence> {
        let frames = flat
            .chunks(self.frame_len())
            .map(|f| decode_labels(f, self.dims, self.spacing))
            .collect::<Result<Vec<_>>>()?;
        AnatomySequence::new(frames, self.frame_period_s)
    }

    /// Projection of a full sequence onto the subspace, flattened.
    pub fn project(&self, seq: &AnatomySequence) -> Result<Vec<f64>> {
        self.check_grid(seq.frame(0))?;
        if seq.t_frames() != self.t_frames {
            return Err(Error::ShapeMismatch(format!(
                "sequence has {} frames, model {}",
                seq.t_frames(),
                self.t_frames
            )));
        }
        let w = self.weights(&flatten(seq.frames()))?;
        Ok(self.reconstruct(&w))
    }

    fn check_grid(&self, v: &SegVolume) -> Result<()> {
        if v.dims() != self.dims {
            return Err(Error::ShapeMismatch(format!(
                "volume dims {:?} do not match PCA model {:?}",
                v.dims(),
                self.dims
            )));
        }
        Ok(())
    }

    /// Completes a cycle from its first frame. Conditions are not used.
    pub fn complete(&self, x0: &SegVolume) -> Result<AnatomySequence> {
        self.check_grid(x0)?;
        let w = self.weights(&flatten(std::slice::from_ref(x0)))?;
        self.decode(&self.reconstruct(&w))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = PcaMeta {
            format_version: PCA_FORMAT_VERSION,
            dims: self.dims,
            spacing: self.spacing,
            t_frames: self.t_frames,
            frame_period_s: self.frame_period_s,
            n_train: self.n_train,
            k: self.k,
            requested_k: self.requested_k,
            eigenvalues: self.eigenvalues.clone(),
        };
        pack(&[
            ("pca.json".into(), serde_json::to_vec_pretty(&meta)?),
            ("mean.f64".into(), f64_bytes(&self.mean)),
            ("coeffs.f64".into(), f64_bytes(&self.coeffs)),
            ("train_labels.u8".into(), self.train_labels.clone()),
        ])
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let entries = unpack(path, bytes)?;
        let get = |name: &str| {
            entries
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, d)| d.as_slice())
                .ok_or_else(|| Error::format(path, format!("missing {name}")))
        };
        let meta: PcaMeta = serde_json::from_slice(get("pca.json")?)
            .map_err(|e| Error::format(path, format!("pca.json: {e}")))?;
        if meta.format_version != PCA_FORMAT_VERSION {
            return Err(Error::Version {
                found: meta.format_version,
                expected: PCA_FORMAT_VERSION,
            });
        }
        let model = PcaModel {
            dims: meta.dims,
            spacing: meta.spacing,
            t_frames: meta.t_frames,
            frame_period_s: meta.frame_period_s,
            train_labels: get("train_labels.u8")?.to_vec(),
            n_train: meta.n_train,
            mean: bytes_f64(path, "mean", get("mean.f64")?)?,
            coeffs: bytes_f64(path, "coeffs", get("coeffs.f64")?)?,
            k: meta.k,
            requested_k: meta.requested_k,
            eigenvalues: meta.eigenvalues,
        };
        let vox: usize = model.dims.iter().product();
        if model.mean.len() != model.dim()
            || model.coeffs.len() != model.k * model.n_train
            || model.train_labels.len() != model.n_train * model.t_frames * vox
        {
            return Err(Error::format(path, "array sizes do not match metadata"));
        }
        Ok(model)
    }
}

fn flatten(frames: &[SegVolume]) -> Vec<f64> {
    frames.iter().flat_map(crate::datakit::one_hot).collect()
}

/// Fits PCA on the given training records. Components with zero variance
/// are dropped, so the retained count may be below `k`.
pub fn pca_fit(train: &[&SubjectRecord], k: usize) -> Result<PcaModel> {
    let n = train.len();
    if n == 0 {
        return Err(invalid!("PCA needs at least one training sequence"));
    }
    let first = &train[0].sequence;
    let (dims, spacing, t_frames) = (first.dims(), first.spacing(), first.t_frames());
    for r in train {
        if r.sequence.dims() != dims || r.sequence.t_frames() != t_frames {
            return Err(Error::ShapeMismatch(format!(
                "subject {} does not share the training grid",
                r.subject_id
            )));
        }
    }
    let vox: usize = dims.iter().product();
    let d = t_frames * N_CLASSES * vox;
    if k > n.min(d) {
        return Err(invalid!("k = {k} exceeds min(n_train = {n}, D = {d})"));
    }
    let mut labels = Vec::with_capacity(n * t_frames * vox);
    for r in train {
        for f in r.sequence.frames() {
            labels.extend_from_slice(f.labels());
        }
    }
    let per = t_frames * vox;

    // Mean one-hot sequence.
    let mut mean = vec![0.0; d];
    let fl = N_CLASSES * vox;
    for i in 0..n {
        for t in 0..t_frames {
            for v in 0..vox {
                mean[t * fl + labels[i * per + t * vox + v] as usize * vox + v] += 1.0 / n as f64;
            }
        }
    }

    // Gram matrix of one-hot vectors = label agreement counts; centred exactly.
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let li = &labels[i * per..(i + 1) * per];
        for j in i..n {
            let lj = &labels[j * per..(j + 1) * per];
            let same = li.iter().zip(lj).filter(|(a, b)| a == b).count() as f64;
            gram[(i, j)] = same;
            gram[(j, i)] = same;
        }
    }
    let row_mean: Vec<f64> = (0..n).map(|i| gram.row(i).sum() / n as f64).collect();
    let all_mean = row_mean.iter().sum::<f64>() / n as f64;
    let centred = DMatrix::from_fn(n, n, |i, j| {
        gram[(i, j)] - row_mean[i] - row_mean[j] + all_mean
    });

    let eig = SymmetricEigen::new(centred);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let top = eigenvalues.first().copied().unwrap_or(0.0);
    let rank = eigenvalues
        .iter()
        .take_while(|&&l| l > RANK_TOL * top.max(1.0))
        .count();
    let kept = k.min(rank);
    if kept < k {
        log::info!("PCA: requested {k} components, data rank allows {kept}");
    }
    let mut coeffs = vec![0.0; kept * n];
    for (kk, &src) in order.iter().take(kept).enumerate() {
        let scale = 1.0 / eigenvalues[kk].sqrt();
        let vcol = eig.eigenvectors.column(src);
        // Deterministic sign: largest-magnitude entry positive.
        let pivot = (0..n)
            .max_by(|&a, &b| vcol[a].abs().total_cmp(&vcol[b].abs()))
            .unwrap_or(0);
        let sign = if vcol[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            coeffs[kk * n + i] = sign * scale * vcol[i];
        }
    }
    Ok(PcaModel {
        dims,
        spacing,
        t_frames,
        frame_period_s: first.frame_period_s(),
        train_labels: labels,
        n_train: n,
        mean,
        coeffs,
        k: kept,
        requested_k: k,
        eigenvalues,
    })
}

pub fn pca_complete(model: &PcaModel, x0: &SegVolume) -> Result<AnatomySequence> {
    model.complete(x0)
}

pub fn save_pca(model: &PcaModel, path: &Path) -> Result<()> {
    write_file(path, &model.to_bytes()?)
}

pub fn load_pca(path: &Path) -> Result<PcaModel> {
    PcaModel::from_bytes(path, &read_file(path)?)
}
