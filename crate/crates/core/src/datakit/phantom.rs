//! Procedural 4-D cardiac phantoms.
//!
//! The LV blood pool is a half prolate ellipsoid truncated at a basal plane,
//! wrapped by an ellipsoidal myocardial shell of constant volume. The RV is a
//! second half ellipsoid offset to one side with the epicardium carved out,
//! leaving a crescent. Chamber sizes, wall thickness and ejection fraction
//! depend on the clinical profile through log-linear sensitivities, plus
//! seeded per-subject Gaussian jitter.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::conditions::{ConditionProfile, Gender};
use super::volume::{check_spacing, n_voxels, AnatomySequence, Dims, Label, SegVolume, Spacing};
use crate::error::{invalid, Error, Result};

/// Reference subject the sensitivities are expressed relative to.
pub const REFERENCE_AGE: f64 = 45.0;
pub const REFERENCE_HEIGHT_CM: f64 = 170.0;
pub const REFERENCE_WEIGHT_KG: f64 = 75.0;
pub const REFERENCE_SBP_MMHG: f64 = 120.0;

/// Jitter draws are clamped at this many standard deviations.
const JITTER_CLAMP: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RvParams {
    /// Distance between the LV and RV ellipsoid centres.
    pub offset_mm: f64,
    /// Semi-axis along the LV-to-RV direction.
    pub radius_along_mm: f64,
    /// In-plane semi-axis perpendicular to the offset.
    pub radius_across_mm: f64,
    /// Semi-axis from the basal plane towards the apex.
    pub length_mm: f64,
    /// Direction of the RV centre around the LV axis, measured from -x.
    pub angle_deg: f64,
}

/// Log-linear effect of each clinical factor. Volume terms act on the
/// log of chamber volume, wall terms on the log of wall thickness and
/// ejection-fraction terms additively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionSensitivity {
    pub volume_per_10cm_height: f64,
    pub volume_per_10kg_weight: f64,
    pub volume_male: f64,
    pub volume_per_decade_age: f64,
    pub wall_per_decade_age: f64,
    pub wall_per_10mmhg_sbp: f64,
    pub wall_male: f64,
    pub ef_per_decade_age: f64,
    pub rv_ef_per_decade_age: f64,
}

impl Default for ConditionSensitivity {
    fn default() -> Self {
        Self {
            volume_per_10cm_height: 0.07,
            volume_per_10kg_weight: 0.03,
            volume_male: 0.12,
            volume_per_decade_age: -0.06,
            wall_per_decade_age: 0.08,
            wall_per_10mmhg_sbp: 0.04,
            wall_male: 0.06,
            ef_per_decade_age: -0.015,
            rv_ef_per_decade_age: -0.01,
        }
    }
}

/// Standard deviations of the per-subject jitter, all scaled by `amplitude`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterParams {
    pub amplitude: f64,
    pub shift_mm: f64,
    pub rv_angle_deg: f64,
    pub log_volume: f64,
    pub log_wall: f64,
    pub ef: f64,
}

impl Default for JitterParams {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            shift_mm: 3.0,
            rv_angle_deg: 8.0,
            log_volume: 0.04,
            log_wall: 0.05,
            ef: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomParams {
    pub dims: Dims,
    pub spacing_mm: Spacing,
    pub t_frames: usize,
    pub frame_period_s: f64,
    /// End-diastolic endocardial short-axis semi-axis of the reference subject.
    pub lv_radius_mm: f64,
    /// End-diastolic endocardial long semi-axis (basal plane to apex).
    pub lv_length_mm: f64,
    pub wall_mm: f64,
    pub rv: RvParams,
    pub ejection_fraction: f64,
    pub rv_ejection_fraction: f64,
    /// End-systole occurs at frame `round(systolic_fraction * T)`.
    pub systolic_fraction: f64,
    /// Bounds on the total log-volume scale so extreme profiles stay in the grid.
    pub log_volume_range: (f64, f64),
    pub sensitivity: ConditionSensitivity,
    pub jitter: JitterParams,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            dims: [32, 32, 16],
            spacing_mm: [5.0, 5.0, 8.0],
            t_frames: 8,
            frame_period_s: 0.045,
            lv_radius_mm: 27.0,
            lv_length_mm: 62.0,
            wall_mm: 8.5,
            rv: RvParams {
                offset_mm: 26.0,
                radius_along_mm: 32.0,
                radius_across_mm: 42.0,
                length_mm: 58.0,
                angle_deg: 0.0,
            },
            ejection_fraction: 0.6,
            rv_ejection_fraction: 0.55,
            systolic_fraction: 0.375,
            log_volume_range: (-0.6, 0.55),
            sensitivity: ConditionSensitivity::default(),
            jitter: JitterParams::default(),
        }
    }
}

impl PhantomParams {
    pub fn validate(&self) -> Result<()> {
        check_spacing(self.spacing_mm)?;
        if self.dims.iter().any(|&d| d < 3) {
            return Err(invalid!(
                "grid dims must be at least 3, got {:?}",
                self.dims
            ));
        }
        if self.t_frames < 2 {
            return Err(invalid!("t_frames must be at least 2"));
        }
        let positive = [
            ("frame_period_s", self.frame_period_s),
            ("lv_radius_mm", self.lv_radius_mm),
            ("lv_length_mm", self.lv_length_mm),
            ("wall_mm", self.wall_mm),
            ("rv.offset_mm", self.rv.offset_mm),
            ("rv.radius_along_mm", self.rv.radius_along_mm),
            ("rv.radius_across_mm", self.rv.radius_across_mm),
            ("rv.length_mm", self.rv.length_mm),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("ejection_fraction", self.ejection_fraction),
            ("rv_ejection_fraction", self.rv_ejection_fraction),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(invalid!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if !(self.systolic_fraction > 0.0 && self.systolic_fraction < 1.0) {
            return Err(invalid!("systolic_fraction must lie in (0, 1)"));
        }
        if !(self.jitter.amplitude >= 0.0) {
            return Err(invalid!("jitter amplitude must be non-negative"));
        }
        let (lo, hi) = self.log_volume_range;
        if !(lo < hi) {
            return Err(invalid!("log_volume_range must satisfy min < max"));
        }
        Ok(())
    }

    /// Frame index of end-systole.
    pub fn systolic_frame(&self) -> usize {
        let t = self.t_frames;
        ((self.systolic_fraction * t as f64).round() as usize).clamp(1, t - 1)
    }

    /// Contraction level in [0, 1] at frame `t`: 0 at end-diastole, 1 at
    /// end-systole, cosine-shaped on both limbs and periodic in `T`.
    pub fn contraction(&self, t: usize) -> f64 {
        let ts = self.systolic_frame() as f64;
        let total = self.t_frames as f64;
        let t = t as f64;
        if t <= ts {
            0.5 * (1.0 - (PI * t / ts).cos())
        } else {
            0.5 * (1.0 + (PI * (t - ts) / (total - ts)).cos())
        }
    }

    /// Deterministic subject geometry for a profile and jitter seed.
    pub fn geometry(&self, profile: &ConditionProfile, seed: u64) -> Result<PhantomGeometry> {
        self.validate()?;
        profile.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amp = self.jitter.amplitude;
        let mut draw = || -> f64 {
            let n: f64 = StandardNormal.sample(&mut rng);
            amp * n.clamp(-JITTER_CLAMP, JITTER_CLAMP)
        };
        let shift = [draw() * self.jitter.shift_mm, draw() * self.jitter.shift_mm];
        let rv_angle = draw() * self.jitter.rv_angle_deg;
        let size_jitter = draw() * self.jitter.log_volume;
        let wall_jitter = draw() * self.jitter.log_wall;
        let ef_jitter = draw() * self.jitter.ef;
        let rv_ef_jitter = draw() * self.jitter.ef;

        let s = &self.sensitivity;
        let male = if profile.gender == Gender::Male {
            1.0
        } else {
            0.0
        };
        let decades = (profile.age_years as f64 - REFERENCE_AGE) / 10.0;
        let log_volume = s.volume_per_10cm_height * (profile.height_cm - REFERENCE_HEIGHT_CM)
            / 10.0
            + s.volume_per_10kg_weight * (profile.weight_kg - REFERENCE_WEIGHT_KG) / 10.0
            + s.volume_male * male
            + s.volume_per_decade_age * decades
            + size_jitter;
        let log_volume = log_volume.clamp(self.log_volume_range.0, self.log_volume_range.1);
        let linear = (log_volume / 3.0).exp();
        let log_wall = s.wall_per_decade_age * decades
            + s.wall_per_10mmhg_sbp * (profile.sbp_mmhg - REFERENCE_SBP_MMHG) / 10.0
            + s.wall_male * male
            + wall_jitter;

        let ef =
            (self.ejection_fraction + s.ef_per_decade_age * decades + ef_jitter).clamp(0.2, 0.85);
        let rv_ef = (self.rv_ejection_fraction + s.rv_ef_per_decade_age * decades + rv_ef_jitter)
            .clamp(0.2, 0.85);

        let [sx, sy, sz] = self.spacing_mm;
        let [nx, ny, nz] = self.dims;
        let center = [
            0.56 * nx as f64 * sx + shift[0],
            0.5 * ny as f64 * sy + shift[1],
        ];
        let geometry = PhantomGeometry {
            dims: self.dims,
            spacing: self.spacing_mm,
            t_frames: self.t_frames,
            frame_period_s: self.frame_period_s,
            contraction: (0..self.t_frames).map(|t| self.contraction(t)).collect(),
            center,
            base_z_mm: (nz - 1) as f64 * sz,
            endo: [self.lv_radius_mm * linear, self.lv_length_mm * linear],
            wall_mm: self.wall_mm * linear * log_wall.exp(),
            rv_radii: [
                self.rv.radius_along_mm * linear,
                self.rv.radius_across_mm * linear,
                self.rv.length_mm * linear,
            ],
            rv_offset_mm: self.rv.offset_mm * linear,
            rv_angle_rad: (self.rv.angle_deg + rv_angle).to_radians(),
            ejection_fraction: ef,
            rv_ejection_fraction: rv_ef,
        };
        geometry.check_fits()?;
        debug_assert_eq!(n_voxels([nx, ny, nz]), nx * ny * nz);
        Ok(geometry)
    }
}

/// Fully resolved geometry of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomGeometry {
    dims: Dims,
    spacing: Spacing,
    t_frames: usize,
    frame_period_s: f64,
    contraction: Vec<f64>,
    center: [f64; 2],
    base_z_mm: f64,
    /// End-diastolic endocardial (short, long) semi-axes.
    endo: [f64; 2],
    wall_mm: f64,
    rv_radii: [f64; 3],
    rv_offset_mm: f64,
    rv_angle_rad: f64,
    ejection_fraction: f64,
    rv_ejection_fraction: f64,
}

fn half_ellipsoid_ml(a: f64, b: f64, c: f64) -> f64 {
    2.0 / 3.0 * PI * a * b * c / 1000.0
}

impl PhantomGeometry {
    pub fn ejection_fraction(&self) -> f64 {
        self.ejection_fraction
    }

    pub fn wall_mm(&self) -> f64 {
        self.wall_mm
    }

    fn endo_radii(&self, t: usize) -> [f64; 2] {
        let r = (1.0 - self.ejection_fraction * self.contraction[t]).cbrt();
        [self.endo[0] * r, self.endo[1] * r]
    }

    fn epi_ed(&self) -> [f64; 2] {
        [self.endo[0] + self.wall_mm, self.endo[1] + self.wall_mm]
    }

    fn epi_radii(&self, t: usize) -> [f64; 2] {
        let [ea, ec] = self.epi_ed();
        let v_epi_ed = half_ellipsoid_ml(ea, ea, ec);
        let k = ((self.analytic_lv_ml(t) + self.analytic_myo_ml()) / v_epi_ed).cbrt();
        [ea * k, ec * k]
    }

    fn rv_frame_radii(&self, t: usize) -> [f64; 3] {
        let r = (1.0 - self.rv_ejection_fraction * self.contraction[t]).cbrt();
        self.rv_radii.map(|v| v * r)
    }

    fn rv_center(&self) -> [f64; 2] {
        let (s, c) = self.rv_angle_rad.sin_cos();
        [
            self.center[0] - self.rv_offset_mm * c,
            self.center[1] + self.rv_offset_mm * s,
        ]
    }

    /// Exact LV cavity volume at frame `t` in mL.
    pub fn analytic_lv_ml(&self, t: usize) -> f64 {
        let [a, c] = self.endo_radii(t);
        half_ellipsoid_ml(a, a, c)
    }

    /// Exact myocardial volume in mL (constant over the cycle).
    pub fn analytic_myo_ml(&self) -> f64 {
        let [ea, ec] = self.epi_ed();
        half_ellipsoid_ml(ea, ea, ec) - half_ellipsoid_ml(self.endo[0], self.endo[0], self.endo[1])
    }

    /// Checks that every structure stays at least one voxel away from the grid
    /// boundary at end-diastole, where all structures are largest.
    fn check_fits(&self) -> Result<()> {
        let [sx, sy, sz] = self.spacing;
        let limits = [
            (sx, (self.dims[0] - 1) as f64 * sx),
            (sy, (self.dims[1] - 1) as f64 * sy),
        ];
        let [ea, ec] = self.epi_ed();
        let rc = self.rv_center();
        let (s, c) = self.rv_angle_rad.sin_cos();
        let [ru, rv, rz] = self.rv_radii;
        let rv_half = [
            ((ru * c).powi(2) + (rv * s).powi(2)).sqrt(),
            ((ru * s).powi(2) + (rv * c).powi(2)).sqrt(),
        ];
        for axis in 0..2 {
            let (lo, hi) = limits[axis];
            let boxes = [
                (self.center[axis] - ea, self.center[axis] + ea),
                (rc[axis] - rv_half[axis], rc[axis] + rv_half[axis]),
            ];
            for (a, b) in boxes {
                if a < lo || b > hi {
                    return Err(Error::GeometryExceedsGrid(format!(
                        "axis {axis}: structure spans [{a:.1}, {b:.1}] mm, allowed [{lo:.1}, {hi:.1}]"
                    )));
                }
            }
        }
        let apex = self.base_z_mm - ec.max(rz);
        if apex < sz {
            return Err(Error::GeometryExceedsGrid(format!(
                "apex at {apex:.1} mm, allowed >= {sz:.1}"
            )));
        }
        Ok(())
    }

    pub fn render_frame(&self, t: usize) -> Result<SegVolume> {
        let [nx, ny, nz] = self.dims;
        let [sx, sy, sz] = self.spacing;
        let [a, c] = self.endo_radii(t);
        let [ea, ec] = self.epi_radii(t);
        let [ru, rv, rz] = self.rv_frame_radii(t);
        let rc = self.rv_center();
        let (sn, cs) = self.rv_angle_rad.sin_cos();
        // Unit vector from the LV towards the RV centre, and its in-plane normal.
        let along = [-cs, sn];
        let across = [sn, cs];

        let mut labels = vec![0u8; nx * ny * nz];
        for k in 0..nz {
            let pz = (k as f64 + 0.5) * sz;
            if pz >= self.base_z_mm {
                continue;
            }
            let dz = pz - self.base_z_mm;
            for j in 0..ny {
                let py = (j as f64 + 0.5) * sy;
                for i in 0..nx {
                    let px = (i as f64 + 0.5) * sx;
                    let qx = px - self.center[0];
                    let qy = py - self.center[1];
                    let r2 = qx * qx + qy * qy;
                    let label = if r2 / (a * a) + dz * dz / (c * c) <= 1.0 {
                        Label::Lv
                    } else if r2 / (ea * ea) + dz * dz / (ec * ec) <= 1.0 {
                        Label::Myo
                    } else {
                        let ux = px - rc[0];
                        let uy = py - rc[1];
                        let u = ux * along[0] + uy * along[1];
                        let v = ux * across[0] + uy * across[1];
                        if (u / ru).powi(2) + (v / rv).powi(2) + (dz / rz).powi(2) <= 1.0 {
                            Label::Rv
                        } else {
                            Label::Background
                        }
                    };
                    labels[i + nx * (j + ny * k)] = label.id();
                }
            }
        }
        SegVolume::new(self.dims, self.spacing, labels)
    }

    pub fn render(&self) -> Result<AnatomySequence> {
        let frames = (0..self.t_frames)
            .map(|t| self.render_frame(t))
            .collect::<Result<Vec<_>>>()?;
        AnatomySequence::new(frames, self.frame_period_s)
    }
}

/// Builds one phantom cardiac cycle for a profile. Identical arguments give
/// identical sequences.
pub fn make_phantom(
    params: &PhantomParams,
    profile: &ConditionProfile,
    seed: u64,
) -> Result<AnatomySequence> {
    params.geometry(profile, seed)?.render()
}
