use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::conditions::{ConditionProfile, Gender};
use super::phantom::{make_phantom, PhantomParams};
use super::volume::AnatomySequence;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub split: Split,
    pub sequence: AnatomySequence,
    pub profile: ConditionProfile,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<SubjectRecord>,
}

impl Dataset {
    pub fn new(records: Vec<SubjectRecord>) -> Result<Self> {
        let mut ids: Vec<&str> = records.iter().map(|r| r.subject_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid!("duplicate subject id {}", w[0]));
        }
        Ok(Self { records })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SubjectRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// SHA-256 over a canonical serialization of every record.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        let mut records: Vec<&SubjectRecord> = self.records.iter().collect();
        records.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
        for r in records {
            h.update(r.subject_id.as_bytes());
            h.update([r.split as u8]);
            h.update(serde_json::to_vec(&r.profile).expect("profile serializes"));
            h.update(r.sequence.frame_period_s().to_le_bytes());
            for f in r.sequence.frames() {
                for d in f.dims() {
                    h.update((d as u64).to_le_bytes());
                }
                for s in f.spacing() {
                    h.update(s.to_le_bytes());
                }
                h.update(f.labels());
            }
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Population model the dataset generator draws profiles from. Ranges
/// default to the demographic ranges of a healthy adult cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSampler {
    pub age_years: (u32, u32),
    pub female_fraction: f64,
    pub weight_kg: (f64, f64),
    pub height_cm: (f64, f64),
    pub sbp_mmhg: (f64, f64),
}

impl Default for ConditionSampler {
    fn default() -> Self {
        Self {
            age_years: (18, 73),
            female_fraction: 775.0 / 1383.0,
            weight_kg: (33.0, 131.0),
            height_cm: (142.0, 195.0),
            sbp_mmhg: (79.0, 183.0),
        }
    }
}

impl ConditionSampler {
    /// Age is uniform; height is gender-specific normal; weight follows a
    /// BMI-style normal around height; SBP rises with age. Every continuous
    /// factor is clamped to its configured range.
    pub fn sample(&self, rng: &mut impl Rng) -> ConditionProfile {
        let age = rng.random_range(self.age_years.0..=self.age_years.1);
        let gender = if rng.random::<f64>() < self.female_fraction {
            Gender::Female
        } else {
            Gender::Male
        };
        let std = Normal::new(0.0f64, 1.0).expect("unit normal");
        let mean_height: f64 = match gender {
            Gender::Female => 163.0,
            Gender::Male => 177.0,
        };
        let height =
            (mean_height + 7.0 * std.sample(rng)).clamp(self.height_cm.0, self.height_cm.1);
        let bmi = 24.5 + 3.5 * std.sample(rng);
        let weight = (bmi * (height / 100.0).powi(2)).clamp(self.weight_kg.0, self.weight_kg.1);
        let sbp = (122.0 + 0.4 * (age as f64 - 45.0) + 14.0 * std.sample(rng))
            .clamp(self.sbp_mmhg.0, self.sbp_mmhg.1);
        ConditionProfile {
            age_years: age.clamp(10, 79),
            gender,
            weight_kg: weight,
            height_cm: height,
            sbp_mmhg: sbp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    /// Subject counts per split, each at least one.
    pub fn sizes(&self, n: usize) -> Result<[usize; 3]> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid!("split fractions must be positive, got {f:?}"));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid!("split fractions must sum to 1, got {f:?}"));
        }
        if n < 3 {
            return Err(invalid!(
                "need at least 3 subjects to populate all splits, got {n}"
            ));
        }
        let mut train = ((f[0] * n as f64).round() as usize).max(1);
        let mut val = ((f[1] * n as f64).round() as usize).max(1);
        while train + val > n - 1 {
            if train >= val {
                train -= 1;
            } else {
                val -= 1;
            }
        }
        Ok([train, val, n - train - val])
    }
}

/// Per-subject seed derived from the dataset seed.
pub fn subject_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64)
}

pub fn make_dataset(
    params: &PhantomParams,
    n_subjects: usize,
    sampler: &ConditionSampler,
    seed: u64,
    fractions: SplitFractions,
) -> Result<Dataset> {
    params.validate()?;
    let sizes = fractions.sizes(n_subjects)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profiles: Vec<ConditionProfile> =
        (0..n_subjects).map(|_| sampler.sample(&mut rng)).collect();
    let mut order: Vec<usize> = (0..n_subjects).collect();
    order.shuffle(&mut rng);
    let mut split_of = vec![Split::Train; n_subjects];
    for (rank, &i) in order.iter().enumerate() {
        split_of[i] = if rank < sizes[0] {
            Split::Train
        } else if rank < sizes[0] + sizes[1] {
            Split::Val
        } else {
            Split::Test
        };
    }
    let records = profiles
        .par_iter()
        .enumerate()
        .map(|(i, profile)| {
            // Phantom jitter uses a stream independent of the profile draws.
            let jitter_seed = subject_seed(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15), i);
            Ok(SubjectRecord {
                subject_id: format!("subj_{i:04}"),
                split: split_of[i],
                sequence: make_phantom(params, profile, jitter_seed)?,
                profile: *profile,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(records)
}
