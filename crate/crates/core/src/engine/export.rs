//! Latent trajectory tables with an optional 2-D principal-component view.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::infer::{completion_trajectory, generate_from_latents, prior_draws, CompletionMode};
use crate::datakit::{ConditionProfile, SubjectRecord};
use crate::error::{invalid, Result};
use crate::model::{LatentTrajectory, ModelCheckpoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Projector {
    Pca2d,
    None,
}

impl std::str::FromStr for Projector {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pca2d" => Ok(Self::Pca2d),
            "none" => Ok(Self::None),
            other => Err(format!("unknown projector {other:?} (pca2d or none)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentRow {
    pub sample_id: String,
    pub t: usize,
    pub code: Vec<f64>,
    pub projection: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentTable {
    pub latent_dim: usize,
    pub rows: Vec<LatentRow>,
    /// Principal axes (unit vectors) and the mean they are centred on.
    pub axes: Option<([Vec<f64>; 2], Vec<f64>)>,
}

/// Posterior-mean trajectories of dataset subjects.
pub fn dataset_trajectories(
    ckpt: &ModelCheckpoint,
    records: &[&SubjectRecord],
) -> Result<Vec<(String, LatentTrajectory)>> {
    records
        .iter()
        .map(|r| {
            let traj = completion_trajectory(
                ckpt,
                r.sequence.frame(0),
                &r.profile,
                CompletionMode::PosteriorMean,
                0,
            )?;
            Ok((r.subject_id.clone(), traj))
        })
        .collect()
}

/// Trajectories of `n` generated samples for one profile.
pub fn generated_trajectories(
    ckpt: &ModelCheckpoint,
    profile: &ConditionProfile,
    n: usize,
    seed: u64,
) -> Result<Vec<(String, LatentTrajectory)>> {
    let z0s = prior_draws(ckpt, n, seed);
    Ok(generate_from_latents(ckpt, profile, &z0s)?
        .into_iter()
        .enumerate()
        .map(|(i, (traj, _))| (format!("gen_{i:04}"), traj))
        .collect())
}

/// Leading two principal axes of the rows of `x` (n x d), with signs fixed
/// so the largest-magnitude coordinate of each axis is positive.
pub fn principal_axes_2d(x: &[Vec<f64>]) -> Result<([Vec<f64>; 2], Vec<f64>)> {
    let n = x.len();
    let d = x.first().map_or(0, |r| r.len());
    if n == 0 || d < 2 {
        return Err(invalid!("projection needs at least one row of width >= 2"));
    }
    let mean: Vec<f64> = (0..d)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in x {
        for a in 0..d {
            let ca = r[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += ca * (r[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[(a, b)] = cov[(b, a)];
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let axis = |k: usize| {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx[k]).iter().copied().collect();
        let pivot = (0..d)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
            .unwrap_or(0);
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
        v
    };
    Ok(([axis(0), axis(1)], mean))
}

pub fn export_latent_trajectories(
    trajectories: &[(String, LatentTrajectory)],
    projector: Projector,
) -> Result<LatentTable> {
    let latent_dim = trajectories
        .first()
        .and_then(|(_, t)| t.codes.first())
        .map(|c| c.len())
        .ok_or_else(|| invalid!("no trajectories to export"))?;
    let mut rows: Vec<LatentRow> = trajectories
        .iter()
        .flat_map(|(id, traj)| {
            traj.codes.iter().enumerate().map(move |(t, c)| LatentRow {
                sample_id: id.clone(),
                t,
                code: c.clone(),
                projection: None,
            })
        })
        .collect();
    let axes = match projector {
        Projector::None => None,
        Projector::Pca2d => {
            let codes: Vec<Vec<f64>> = rows.iter().map(|r| r.code.clone()).collect();
            let (axes, mean) = principal_axes_2d(&codes)?;
            for r in &mut rows {
                let p = |a: &[f64]| {
                    r.code
                        .iter()
                        .zip(&mean)
                        .zip(a)
                        .map(|((c, m), u)| (c - m) * u)
                        .sum::<f64>()
                };
                r.projection = Some([p(&axes[0]), p(&axes[1])]);
            }
            Some((axes, mean))
        }
    };
    Ok(LatentTable {
        latent_dim,
        rows,
        axes,
    })
}

/// CSV with header `sample_id,t,z_00..z_{d-1}[,p0,p1]`.
pub fn write_latent_csv(table: &LatentTable, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    let mut header = vec!["sample_id".to_string(), "t".to_string()];
    header.extend((0..table.latent_dim).map(|i| format!("z_{i:02}")));
    let projected = table.axes.is_some();
    if projected {
        header.extend(["p0".to_string(), "p1".to_string()]);
    }
    writeln!(out, "{}", header.join(",")).expect("write to Vec");
    for r in &table.rows {
        let mut cells = vec![r.sample_id.clone(), r.t.to_string()];
        cells.extend(r.code.iter().map(|v| v.to_string()));
        if let Some([a, b]) = r.projection {
            cells.push(a.to_string());
            cells.push(b.to_string());
        }
        writeln!(out, "{}", cells.join(",")).expect("write to Vec");
    }
    crate::archive::write_file(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Vec<(String, LatentTrajectory)> {
        (0..5)
            .map(|i| {
                let codes = (0..3)
                    .map(|t| {
                        (0..4)
                            .map(|j| ((i * 7 + t * 3 + j) as f64 * 0.37).sin() * (j + 1) as f64)
                            .collect()
                    })
                    .collect();
                (format!("s{i}"), LatentTrajectory { codes })
            })
            .collect()
    }

    #[test]
    fn schema_without_projection() {
        let t = export_latent_trajectories(&toy(), Projector::None).unwrap();
        assert_eq!(t.rows.len(), 15);
        assert!(t
            .rows
            .iter()
            .all(|r| r.projection.is_none() && r.code.len() == 4));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.csv");
        write_latent_csv(&t, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, "sample_id,t,z_00,z_01,z_02,z_03");
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 6);
    }

    #[test]
    fn identical_codes_project_identically() {
        let mut data = toy();
        data.push(("dup".into(), data[0].1.clone()));
        let t = export_latent_trajectories(&data, Projector::Pca2d).unwrap();
        let first: Vec<_> = t
            .rows
            .iter()
            .filter(|r| r.sample_id == "s0")
            .map(|r| r.projection)
            .collect();
        let dup: Vec<_> = t
            .rows
            .iter()
            .filter(|r| r.sample_id == "dup")
            .map(|r| r.projection)
            .collect();
        assert_eq!(first, dup);
    }

    #[test]
    fn reconstruction_error_matches_singular_values() {
        let data = toy();
        let t = export_latent_trajectories(&data, Projector::Pca2d).unwrap();
        let (axes, mean) = t.axes.clone().unwrap();
        let mut err = 0.0;
        for r in &t.rows {
            let [a, b] = r.projection.unwrap();
            for j in 0..4 {
                let rec = mean[j] + a * axes[0][j] + b * axes[1][j];
                err += (r.code[j] - rec).powi(2);
            }
        }
        // Oracle: discarded squared singular values of the centred matrix.
        let n = t.rows.len();
        let m = DMatrix::from_fn(n, 4, |i, j| t.rows[i].code[j] - mean[j]);
        let mut sv: Vec<f64> = m
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let want: f64 = sv[2..].iter().map(|s| s * s).sum();
        assert!((err - want).abs() < 1e-8, "{err} vs {want}");
    }
}
