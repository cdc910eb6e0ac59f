//! Clinical conditions and their numeric encoding.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Seven age groups of ten years each, starting at 10.
pub const N_AGE_GROUPS: usize = 7;
/// One-hot age group + gender + weight, height, SBP.
pub const CONDITION_DIM: usize = N_AGE_GROUPS + 1 + 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn as_f64(self) -> f64 {
        match self {
            Gender::Female => 0.0,
            Gender::Male => 1.0,
        }
    }
}

impl std::str::FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "female" | "f" => Ok(Gender::Female),
            "male" | "m" => Ok(Gender::Male),
            other => Err(format!(
                "unknown gender {other:?} (expected female or male)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionProfile {
    pub age_years: u32,
    pub gender: Gender,
    pub weight_kg: f64,
    pub height_cm: f64,
    pub sbp_mmhg: f64,
}

impl ConditionProfile {
    pub fn new(
        age_years: u32,
        gender: Gender,
        weight_kg: f64,
        height_cm: f64,
        sbp_mmhg: f64,
    ) -> Result<Self> {
        let p = Self {
            age_years,
            gender,
            weight_kg,
            height_cm,
            sbp_mmhg,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks the strict profile invariants: age in [10, 80) and positive
    /// finite measurements.
    pub fn validate(&self) -> Result<()> {
        if !(10..80).contains(&self.age_years) {
            return Err(invalid!("age {} outside [10, 80)", self.age_years));
        }
        for (name, v) in [
            ("weight_kg", self.weight_kg),
            ("height_cm", self.height_cm),
            ("sbp_mmhg", self.sbp_mmhg),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid!("{name} must be positive and finite, got {v}"));
            }
        }
        Ok(())
    }

    pub fn age_group(&self) -> usize {
        age_group(self.age_years)
    }
}

/// Age group index `floor((age - 10) / 10)` clamped to `[0, 6]`.
pub fn age_group(age_years: u32) -> usize {
    (age_years.saturating_sub(10) / 10).min(N_AGE_GROUPS as u32 - 1) as usize
}

/// Population ranges used for min-max scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationBounds {
    pub weight_kg: (f64, f64),
    pub height_cm: (f64, f64),
    pub sbp_mmhg: (f64, f64),
}

impl Default for NormalizationBounds {
    fn default() -> Self {
        Self {
            weight_kg: (33.0, 131.0),
            height_cm: (142.0, 195.0),
            sbp_mmhg: (79.0, 183.0),
        }
    }
}

impl NormalizationBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("weight_kg", self.weight_kg),
            ("height_cm", self.height_cm),
            ("sbp_mmhg", self.sbp_mmhg),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid!(
                    "bounds for {name} must satisfy min < max, got ({lo}, {hi})"
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionVector(pub [f64; CONDITION_DIM]);

impl ConditionVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn scale(v: f64, (lo, hi): (f64, f64)) -> f64 {
    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// Encodes a profile as one-hot age group, binary gender and min-max scaled
/// weight, height and SBP. Out-of-range values are clamped, so any finite
/// profile yields a valid vector.
pub fn encode_conditions(
    profile: &ConditionProfile,
    bounds: &NormalizationBounds,
) -> Result<ConditionVector> {
    bounds.validate()?;
    for (name, v) in [
        ("weight_kg", profile.weight_kg),
        ("height_cm", profile.height_cm),
        ("sbp_mmhg", profile.sbp_mmhg),
    ] {
        if !v.is_finite() {
            return Err(invalid!("{name} is not finite"));
        }
    }
    let mut out = [0.0; CONDITION_DIM];
    out[profile.age_group()] = 1.0;
    out[N_AGE_GROUPS] = profile.gender.as_f64();
    out[N_AGE_GROUPS + 1] = scale(profile.weight_kg, bounds.weight_kg);
    out[N_AGE_GROUPS + 2] = scale(profile.height_cm, bounds.height_cm);
    out[N_AGE_GROUPS + 3] = scale(profile.sbp_mmhg, bounds.sbp_mmhg);
    Ok(ConditionVector(out))
}
