//! Checkpoint archive: `model.json` metadata plus one raw f64 array per named
//! parameter under `params/`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::{ModelConfig, Network};
use crate::archive::{bytes_f64, f64_bytes, pack, read_file, unpack, write_file};
use crate::datakit::{hex, Dims, NormalizationBounds, Spacing};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelMeta {
    format_version: u32,
    latent_dim_z0: usize,
    latent_dim_zc: usize,
    grid_dims: Dims,
    t_frames: usize,
    beta: f64,
    normalization_bounds: NormalizationBounds,
    spacing_mm: Spacing,
    frame_period_s: f64,
    embed_hidden: usize,
    channels: [usize; 4],
    params: Vec<ParamEntry>,
}

/// Trained parameters together with everything needed to use them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub network: Network,
    pub bounds: NormalizationBounds,
    /// Voxel spacing of the training data, used for generated volumes.
    pub spacing: Spacing,
    pub frame_period_s: f64,
}

impl ModelCheckpoint {
    pub fn config(&self) -> &ModelConfig {
        &self.network.config
    }

    /// Errors unless the checkpoint was built for `dims`.
    pub fn check_grid(&self, dims: Dims) -> Result<()> {
        if self.config().grid_dims != dims {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint grid {:?} does not match requested grid {:?}",
                self.config().grid_dims,
                dims
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let cfg = self.config();
        let params = self.network.params();
        let meta = ModelMeta {
            format_version: CHECKPOINT_VERSION,
            latent_dim_z0: cfg.latent_dim_z0,
            latent_dim_zc: cfg.latent_dim_zc,
            grid_dims: cfg.grid_dims,
            t_frames: cfg.t_frames,
            beta: cfg.beta,
            normalization_bounds: self.bounds,
            spacing_mm: self.spacing,
            frame_period_s: self.frame_period_s,
            embed_hidden: cfg.embed_hidden,
            channels: cfg.channels,
            params: params
                .iter()
                .map(|(n, t)| ParamEntry {
                    name: n.clone(),
                    shape: t.shape.clone(),
                })
                .collect(),
        };
        let mut entries = vec![("model.json".to_string(), serde_json::to_vec_pretty(&meta)?)];
        for (name, t) in params {
            entries.push((format!("params/{name}.f64"), f64_bytes(&t.data)));
        }
        pack(&entries)
    }

    /// `path` is only used in error messages.
    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let mut entries = unpack(path, bytes)?;
        let meta_idx = entries
            .iter()
            .position(|(n, _)| n == "model.json")
            .ok_or_else(|| Error::format(path, "missing model.json"))?;
        let (_, meta_bytes) = entries.remove(meta_idx);
        let meta: ModelMeta = serde_json::from_slice(&meta_bytes)
            .map_err(|e| Error::format(path, format!("model.json: {e}")))?;
        if meta.format_version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: meta.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        meta.normalization_bounds.validate()?;
        if !(meta.spacing_mm.iter().all(|s| s.is_finite() && *s > 0.0)
            && meta.frame_period_s.is_finite()
            && meta.frame_period_s > 0.0)
        {
            return Err(Error::format(
                path,
                "spacing and frame period must be positive",
            ));
        }
        let config = ModelConfig {
            grid_dims: meta.grid_dims,
            t_frames: meta.t_frames,
            latent_dim_z0: meta.latent_dim_z0,
            latent_dim_zc: meta.latent_dim_zc,
            embed_hidden: meta.embed_hidden,
            channels: meta.channels,
            beta: meta.beta,
        };
        let mut named = Vec::with_capacity(entries.len());
        for (entry, data) in entries {
            let Some(name) = entry
                .strip_prefix("params/")
                .and_then(|n| n.strip_suffix(".f64"))
            else {
                continue;
            };
            named.push((name.to_string(), bytes_f64(path, name, &data)?));
        }
        let network =
            Network::from_params(config, named).map_err(|e| Error::format(path, e.to_string()))?;
        for ((name, t), entry) in network.params().iter().zip(&meta.params) {
            if *name != entry.name || t.shape != entry.shape {
                return Err(Error::format(
                    path,
                    format!("parameter table mismatch at {name}"),
                ));
            }
        }
        Ok(Self {
            network,
            bounds: meta.normalization_bounds,
            spacing: meta.spacing_mm,
            frame_period_s: meta.frame_period_s,
        })
    }

    /// SHA-256 of the serialized archive.
    pub fn hash(&self) -> Result<String> {
        Ok(hex(&Sha256::digest(self.to_bytes()?)))
    }
}

pub fn save_checkpoint(ckpt: &ModelCheckpoint, path: &Path) -> Result<()> {
    write_file(path, &ckpt.to_bytes()?)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    ModelCheckpoint::from_bytes(path, &read_file(path)?)
}
