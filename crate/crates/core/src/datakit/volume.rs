//! Label volumes and sequences.
//!
//! Voxels are stored with `x` varying fastest, then `y`, then `z`
//! (`index = x + X * (y + Y * z)`). The same ordering is used for the raw
//! frame files on disk and for every channel plane handled by the network.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Number of segmentation classes: background, LV, Myo, RV.
pub const N_CLASSES: usize = 4;

/// Foreground structures, in the order reports list them.
pub const STRUCTURES: [Label; 3] = [Label::Lv, Label::Myo, Label::Rv];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Label {
    Background = 0,
    Lv = 1,
    Myo = 2,
    Rv = 3,
}

impl Label {
    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Background => "background",
            Label::Lv => "lv",
            Label::Myo => "myo",
            Label::Rv => "rv",
        }
    }
}

pub type Dims = [usize; 3];
pub type Spacing = [f64; 3];

pub fn n_voxels(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

pub(crate) fn check_spacing(spacing: Spacing) -> Result<()> {
    if spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
        Ok(())
    } else {
        Err(invalid!(
            "spacing must be positive and finite, got {spacing:?}"
        ))
    }
}

/// One 3-D segmentation frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SegVolume {
    dims: Dims,
    spacing: Spacing,
    labels: Vec<u8>,
}

impl SegVolume {
    pub fn new(dims: Dims, spacing: Spacing, labels: Vec<u8>) -> Result<Self> {
        check_spacing(spacing)?;
        if dims.iter().any(|&d| d == 0) {
            return Err(invalid!("grid dims must be nonzero, got {dims:?}"));
        }
        if labels.len() != n_voxels(dims) {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for grid {dims:?} ({} voxels)",
                labels.len(),
                n_voxels(dims)
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= N_CLASSES) {
            return Err(invalid!("label {bad} outside 0..{N_CLASSES}"));
        }
        Ok(Self {
            dims,
            spacing,
            labels,
        })
    }

    pub fn background(dims: Dims, spacing: Spacing) -> Result<Self> {
        Self::new(dims, spacing, vec![0; n_voxels(dims)])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u8> {
        self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.labels[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, label: Label) {
        let i = self.index(x, y, z);
        self.labels[i] = label.id();
    }

    /// Volume of a single voxel in millilitres.
    pub fn voxel_volume_ml(&self) -> f64 {
        self.spacing.iter().product::<f64>() / 1000.0
    }

    pub fn count(&self, label: Label) -> usize {
        let id = label.id();
        self.labels.iter().filter(|&&l| l == id).count()
    }

    pub fn mask(&self, label: Label) -> Vec<bool> {
        let id = label.id();
        self.labels.iter().map(|&l| l == id).collect()
    }

    pub fn same_grid(&self, other: &SegVolume) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }
}

/// One cardiac cycle. Frame 0 is end-diastole.
#[derive(Debug, Clone, PartialEq)]
pub struct AnatomySequence {
    frames: Vec<SegVolume>,
    frame_period_s: f64,
}

impl AnatomySequence {
    pub fn new(frames: Vec<SegVolume>, frame_period_s: f64) -> Result<Self> {
        if frames.len() < 2 {
            return Err(invalid!(
                "a sequence needs at least 2 frames, got {}",
                frames.len()
            ));
        }
        if !(frame_period_s.is_finite() && frame_period_s > 0.0) {
            return Err(invalid!(
                "frame period must be positive, got {frame_period_s}"
            ));
        }
        let first = &frames[0];
        if let Some((t, _)) = frames.iter().enumerate().find(|(_, f)| !f.same_grid(first)) {
            return Err(Error::ShapeMismatch(format!(
                "frame {t} grid differs from frame 0"
            )));
        }
        Ok(Self {
            frames,
            frame_period_s,
        })
    }

    pub fn frames(&self) -> &[SegVolume] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &SegVolume {
        &self.frames[t]
    }

    pub fn t_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn dims(&self) -> Dims {
        self.frames[0].dims()
    }

    pub fn spacing(&self) -> Spacing {
        self.frames[0].spacing()
    }

    pub fn frame_period_s(&self) -> f64 {
        self.frame_period_s
    }

    /// Per-frame voxel counts of one label.
    pub fn counts(&self, label: Label) -> Vec<usize> {
        self.frames.iter().map(|f| f.count(label)).collect()
    }
}

/// Channel-first one-hot encoding: `out[c * V + v] = 1` where voxel `v` has label `c`.
pub fn one_hot(volume: &SegVolume) -> Vec<f64> {
    let v = volume.len();
    let mut out = vec![0.0; N_CLASSES * v];
    for (i, &l) in volume.labels().iter().enumerate() {
        out[l as usize * v + i] = 1.0;
    }
    out
}

/// Per-voxel argmax over a channel-first probability (or logit) volume.
/// Ties go to the lowest class id.
pub fn decode_labels(probs: &[f64], dims: Dims, spacing: Spacing) -> Result<SegVolume> {
    let v = n_voxels(dims);
    if probs.len() != N_CLASSES * v {
        return Err(Error::ShapeMismatch(format!(
            "{} values for {N_CLASSES} channels over {v} voxels",
            probs.len()
        )));
    }
    let labels = (0..v)
        .map(|i| {
            let mut best = 0;
            let mut best_val = probs[i];
            for c in 1..N_CLASSES {
                let p = probs[c * v + i];
                if p > best_val {
                    best = c;
                    best_val = p;
                }
            }
            best as u8
        })
        .collect();
    SegVolume::new(dims, spacing, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DIMS: Dims = [3, 4, 2];
    const SP: Spacing = [5.0, 5.0, 8.0];

    #[test]
    fn rejects_bad_labels_and_spacing() {
        assert!(SegVolume::new(DIMS, SP, vec![4; 24]).is_err());
        assert!(SegVolume::new(DIMS, [5.0, 0.0, 8.0], vec![0; 24]).is_err());
        assert!(SegVolume::new(DIMS, [5.0, f64::NAN, 8.0], vec![0; 24]).is_err());
        assert!(SegVolume::new(DIMS, SP, vec![0; 23]).is_err());
    }

    #[test]
    fn sequence_needs_two_matching_frames() {
        let f = SegVolume::background(DIMS, SP).unwrap();
        assert!(AnatomySequence::new(vec![f.clone()], 0.045).is_err());
        let g = SegVolume::background(DIMS, [1.0, 1.0, 1.0]).unwrap();
        assert!(AnatomySequence::new(vec![f.clone(), g], 0.045).is_err());
        assert!(AnatomySequence::new(vec![f.clone(), f], 0.045).is_ok());
    }

    #[test]
    fn decode_tie_break_and_argmax() {
        let dims = [1, 1, 1];
        let v = decode_labels(&[0.25, 0.25, 0.25, 0.25], dims, SP).unwrap();
        assert_eq!(v.labels(), &[0]);
        let v = decode_labels(&[0.1, 0.2, 0.3, 0.4], dims, SP).unwrap();
        assert_eq!(v.labels(), &[3]);
        let v = decode_labels(&[0.1, 0.4, 0.1, 0.4], dims, SP).unwrap();
        assert_eq!(v.labels(), &[1]);
    }

    proptest! {
        #[test]
        fn one_hot_decode_is_identity(labels in proptest::collection::vec(0u8..4, 24)) {
            let vol = SegVolume::new(DIMS, SP, labels).unwrap();
            let back = decode_labels(&one_hot(&vol), DIMS, SP).unwrap();
            prop_assert_eq!(back, vol);
        }
    }
}
