//! On-disk dataset layout:
//!
//! ```text
//! <root>/<split>/<subject_id>/frame_000.u8raw
//!                            ...
//!                            meta.json
//! ```
//!
//! Each frame file is the raw one-byte-per-voxel label payload in x-fastest
//! order. `meta.json` carries dims, spacing, frame count, frame period,
//! conditions and the format version.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::conditions::ConditionProfile;
use super::dataset::{Dataset, Split, SubjectRecord};
use super::volume::{n_voxels, AnatomySequence, Dims, SegVolume, Spacing, N_CLASSES};
use crate::error::{Error, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub format_version: u32,
    pub dims: Dims,
    pub spacing_mm: Spacing,
    pub t_frames: usize,
    pub frame_period_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditions: Option<ConditionProfile>,
}

pub fn frame_file_name(t: usize) -> String {
    format!("frame_{t:03}.u8raw")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes one sequence as a directory of raw frames plus `meta.json`.
pub fn write_sequence_dir(
    dir: &Path,
    sequence: &AnatomySequence,
    conditions: Option<&ConditionProfile>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (t, frame) in sequence.frames().iter().enumerate() {
        write_file(&dir.join(frame_file_name(t)), frame.labels())?;
    }
    let meta = SequenceMeta {
        format_version: DATASET_FORMAT_VERSION,
        dims: sequence.dims(),
        spacing_mm: sequence.spacing(),
        t_frames: sequence.t_frames(),
        frame_period_s: sequence.frame_period_s(),
        conditions: conditions.copied(),
    };
    let json = serde_json::to_vec_pretty(&meta)?;
    write_file(&dir.join(META_FILE), &json)
}

pub fn read_meta(dir: &Path) -> Result<SequenceMeta> {
    let path = dir.join(META_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let meta: SequenceMeta =
        serde_json::from_slice(&bytes).map_err(|e| Error::format(&path, e.to_string()))?;
    if meta.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Version {
            found: meta.format_version,
            expected: DATASET_FORMAT_VERSION,
        });
    }
    Ok(meta)
}

/// Reads a single frame file, checking its size against `dims`.
pub fn read_frame_file(path: &Path, dims: Dims, spacing: Spacing) -> Result<SegVolume> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = n_voxels(dims);
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "payload has {} bytes, header dims {dims:?} need {expected}",
                bytes.len()
            ),
        ));
    }
    if let Some(pos) = bytes.iter().position(|&l| l as usize >= N_CLASSES) {
        return Err(Error::format(
            path,
            format!("label {} at voxel {pos} outside 0..{N_CLASSES}", bytes[pos]),
        ));
    }
    SegVolume::new(dims, spacing, bytes)
}

pub fn read_sequence_dir(dir: &Path) -> Result<(AnatomySequence, Option<ConditionProfile>)> {
    let meta = read_meta(dir)?;
    let frames = (0..meta.t_frames)
        .map(|t| read_frame_file(&dir.join(frame_file_name(t)), meta.dims, meta.spacing_mm))
        .collect::<Result<Vec<_>>>()?;
    let seq = AnatomySequence::new(frames, meta.frame_period_s)
        .map_err(|e| Error::format(dir, e.to_string()))?;
    Ok((seq, meta.conditions))
}

pub fn save_dataset(dataset: &Dataset, root: &Path) -> Result<()> {
    for r in &dataset.records {
        let dir = root.join(r.split.name()).join(&r.subject_id);
        write_sequence_dir(&dir, &r.sequence, Some(&r.profile))?;
    }
    Ok(())
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry
            .file_type()
            .map_err(|e| Error::io(entry.path(), e))?
            .is_dir()
        {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

pub fn load_dataset(root: &Path) -> Result<Dataset> {
    if !root.is_dir() {
        return Err(Error::format(root, "dataset root is not a directory"));
    }
    let mut records = Vec::new();
    for split in Split::ALL {
        let split_dir = root.join(split.name());
        if !split_dir.is_dir() {
            continue;
        }
        for dir in sorted_subdirs(&split_dir)? {
            let (sequence, conditions) = read_sequence_dir(&dir)?;
            let profile = conditions
                .ok_or_else(|| Error::format(dir.join(META_FILE), "missing conditions"))?;
            profile
                .validate()
                .map_err(|e| Error::format(dir.join(META_FILE), e.to_string()))?;
            let subject_id = dir
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| Error::format(&dir, "subject directory name is not UTF-8"))?
                .to_string();
            records.push(SubjectRecord {
                subject_id,
                split,
                sequence,
                profile,
            });
        }
    }
    if records.is_empty() {
        return Err(Error::format(root, "no subjects found"));
    }
    Dataset::new(records)
}
