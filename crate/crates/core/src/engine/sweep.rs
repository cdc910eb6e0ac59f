//! Condition manipulation: vary one clinical factor, keep everything else.

use serde::{Deserialize, Serialize};

use super::infer::{generate_from_latents, prior_draws};
use crate::datakit::{subject_seed, AnatomySequence, ConditionProfile, Gender};
use crate::error::{invalid, Result};
use crate::metrics::{mean_ci95, phenotypes, PhenotypeRecord};
use crate::model::ModelCheckpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepFactor {
    Age,
    Gender,
    Weight,
    Height,
    Sbp,
}

impl std::str::FromStr for SweepFactor {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "age" => Ok(Self::Age),
            "gender" => Ok(Self::Gender),
            "weight" => Ok(Self::Weight),
            "height" => Ok(Self::Height),
            "sbp" => Ok(Self::Sbp),
            other => Err(format!(
                "unknown factor {other:?} (age, gender, weight, height, sbp)"
            )),
        }
    }
}

impl SweepFactor {
    /// Sets the factor on a copy of `base`. Gender takes 0 (female) or 1
    /// (male); age must be a whole number of years.
    pub fn apply(self, base: &ConditionProfile, value: f64) -> Result<ConditionProfile> {
        if !value.is_finite() {
            return Err(invalid!("sweep value must be finite"));
        }
        let mut p = *base;
        match self {
            SweepFactor::Age => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(invalid!("age must be a whole number of years, got {value}"));
                }
                p.age_years = value as u32;
            }
            SweepFactor::Gender => {
                p.gender = match value {
                    v if v == 0.0 => Gender::Female,
                    v if v == 1.0 => Gender::Male,
                    v => return Err(invalid!("gender value must be 0 or 1, got {v}")),
                }
            }
            SweepFactor::Weight => p.weight_kg = value,
            SweepFactor::Height => p.height_cm = value,
            SweepFactor::Sbp => p.sbp_mmhg = value,
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub value: f64,
    pub profile: ConditionProfile,
    pub phenotypes: Vec<PhenotypeRecord>,
    pub mean: PhenotypeRecord,
    /// Half-width of the 95% interval, `1.96 * sd / sqrt(n)`.
    pub ci95: PhenotypeRecord,
    /// Samples without LV at end-diastole, excluded from the statistics.
    pub invalid_samples: usize,
    #[serde(skip)]
    pub sequences: Vec<AnatomySequence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub factor: SweepFactor,
    pub values: Vec<f64>,
    pub n: usize,
    pub fix_latent: bool,
    pub entries: Vec<SweepEntry>,
}

/// With `fix_latent` the same `n` prior draws are reused for every value;
/// otherwise value `j` gets its own draws seeded by `subject_seed(seed, j + 1)`.
pub fn condition_sweep(
    ckpt: &ModelCheckpoint,
    base: &ConditionProfile,
    factor: SweepFactor,
    values: &[f64],
    n: usize,
    seed: u64,
    fix_latent: bool,
) -> Result<SweepResult> {
    if values.is_empty() || n == 0 {
        return Err(invalid!("a sweep needs at least one value and one sample"));
    }
    let profiles = values
        .iter()
        .map(|&v| factor.apply(base, v))
        .collect::<Result<Vec<_>>>()?;
    let shared = fix_latent.then(|| prior_draws(ckpt, n, seed));
    let mut entries = Vec::with_capacity(values.len());
    for (j, (&value, profile)) in values.iter().zip(&profiles).enumerate() {
        let z0s = match &shared {
            Some(z) => z.clone(),
            None => prior_draws(ckpt, n, subject_seed(seed, j + 1)),
        };
        let sequences: Vec<AnatomySequence> = generate_from_latents(ckpt, profile, &z0s)?
            .into_iter()
            .map(|(_, s)| s)
            .collect();
        let ph: Vec<PhenotypeRecord> = sequences
            .iter()
            .filter_map(|s| phenotypes(s).ok())
            .collect();
        let mut mean = [f64::NAN; 5];
        let mut ci = [f64::NAN; 5];
        for k in 0..5 {
            let col: Vec<f64> = ph.iter().map(|p| p.values()[k]).collect();
            (mean[k], ci[k]) = mean_ci95(&col);
        }
        entries.push(SweepEntry {
            value,
            profile: *profile,
            invalid_samples: n - ph.len(),
            phenotypes: ph,
            mean: PhenotypeRecord::from_values(mean),
            ci95: PhenotypeRecord::from_values(ci),
            sequences,
        });
    }
    Ok(SweepResult {
        factor,
        values: values.to_vec(),
        n,
        fix_latent,
        entries,
    })
}
