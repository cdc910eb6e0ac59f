//! Clinical volume and mass measures derived from a segmented cycle.

use serde::{Deserialize, Serialize};

use crate::datakit::{AnatomySequence, Label};
use crate::error::{invalid, Result};

/// Myocardial tissue density in g/mL.
pub const MYOCARDIAL_DENSITY: f64 = 1.05;

pub const PHENOTYPE_NAMES: [&str; 5] = ["lvm_g", "lvedv_ml", "lvesv_ml", "rvedv_ml", "rvesv_ml"];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhenotypeRecord {
    pub lvm_g: f64,
    pub lvedv_ml: f64,
    pub lvesv_ml: f64,
    pub rvedv_ml: f64,
    pub rvesv_ml: f64,
}

impl PhenotypeRecord {
    /// Values in [`PHENOTYPE_NAMES`] order.
    pub fn values(&self) -> [f64; 5] {
        [
            self.lvm_g,
            self.lvedv_ml,
            self.lvesv_ml,
            self.rvedv_ml,
            self.rvesv_ml,
        ]
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        Self {
            lvm_g: v[0],
            lvedv_ml: v[1],
            lvesv_ml: v[2],
            rvedv_ml: v[3],
            rvesv_ml: v[4],
        }
    }
}

/// Index of the frame with the fewest voxels of `label` (first on ties).
pub fn min_volume_frame(seq: &AnatomySequence, label: Label) -> usize {
    let counts = seq.counts(label);
    let mut best = 0;
    for (t, &c) in counts.iter().enumerate() {
        if c < counts[best] {
            best = t;
        }
    }
    best
}

/// ED is frame 0. End-systolic volumes are taken at each ventricle's own
/// minimum-volume frame, so ESV never exceeds EDV.
pub fn phenotypes(seq: &AnatomySequence) -> Result<PhenotypeRecord> {
    let ml = seq.frame(0).voxel_volume_ml();
    let ed = seq.frame(0);
    if ed.count(Label::Lv) == 0 {
        return Err(invalid!("no LV voxels in the end-diastolic frame"));
    }
    let lv = seq.counts(Label::Lv);
    let rv = seq.counts(Label::Rv);
    Ok(PhenotypeRecord {
        lvm_g: ed.count(Label::Myo) as f64 * ml * MYOCARDIAL_DENSITY,
        lvedv_ml: lv[0] as f64 * ml,
        lvesv_ml: lv[min_volume_frame(seq, Label::Lv)] as f64 * ml,
        rvedv_ml: rv[0] as f64 * ml,
        rvesv_ml: rv[min_volume_frame(seq, Label::Rv)] as f64 * ml,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhenotypeDiff {
    pub mean: PhenotypeRecord,
    pub best: PhenotypeRecord,
}

/// Mean and minimum absolute difference between a real record and each
/// synthetic record, per phenotype.
pub fn phenotype_diff(real: &PhenotypeRecord, synth: &[PhenotypeRecord]) -> Result<PhenotypeDiff> {
    if synth.is_empty() {
        return Err(invalid!(
            "phenotype_diff needs at least one synthetic record"
        ));
    }
    let r = real.values();
    let mut mean = [0.0; 5];
    let mut best = [f64::INFINITY; 5];
    for s in synth {
        for (k, v) in s.values().iter().enumerate() {
            let d = (r[k] - v).abs();
            mean[k] += d / synth.len() as f64;
            best[k] = best[k].min(d);
        }
    }
    Ok(PhenotypeDiff {
        mean: PhenotypeRecord::from_values(mean),
        best: PhenotypeRecord::from_values(best),
    })
}
