//! Sequence completion and conditional generation with a trained model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datakit::{
    decode_labels, encode_conditions, one_hot, AnatomySequence, ConditionProfile, SegVolume,
};
use crate::error::{invalid, Result};
use crate::model::{reparameterize, LatentTrajectory, ModelCheckpoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionMode {
    /// `z0` is the posterior mean.
    #[default]
    PosteriorMean,
    /// `z0` is drawn from the posterior.
    Sample,
}

impl std::str::FromStr for CompletionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "posterior_mean" => Ok(Self::PosteriorMean),
            "sample" => Ok(Self::Sample),
            other => Err(format!(
                "unknown completion mode {other:?} (expected posterior_mean or sample)"
            )),
        }
    }
}

/// Condition embedding for a profile under the checkpoint's bounds.
pub fn condition_latent(ckpt: &ModelCheckpoint, profile: &ConditionProfile) -> Result<Vec<f64>> {
    profile.validate()?;
    let cvec = encode_conditions(profile, &ckpt.bounds)?;
    ckpt.network.embed(&cvec.0)
}

/// Decodes every code of a trajectory to a label map.
pub fn decode_trajectory(
    ckpt: &ModelCheckpoint,
    traj: &LatentTrajectory,
) -> Result<AnatomySequence> {
    let dims = ckpt.config().grid_dims;
    let frames = traj
        .codes
        .iter()
        .map(|z| decode_labels(&ckpt.network.decode(z)?, dims, ckpt.spacing))
        .collect::<Result<Vec<_>>>()?;
    AnatomySequence::new(frames, ckpt.frame_period_s)
}

/// Latent trajectory used by [`complete_sequence`].
pub fn completion_trajectory(
    ckpt: &ModelCheckpoint,
    x0: &SegVolume,
    profile: &ConditionProfile,
    mode: CompletionMode,
    seed: u64,
) -> Result<LatentTrajectory> {
    ckpt.check_grid(x0.dims())?;
    let zc = condition_latent(ckpt, profile)?;
    let post = ckpt.network.encode(&one_hot(x0), &zc)?;
    let z0 = match mode {
        CompletionMode::PosteriorMean => post.mu.clone(),
        CompletionMode::Sample => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let eps: Vec<f64> = (0..post.dim())
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            reparameterize(&post, &eps)?
        }
    };
    ckpt.network.rollout(&z0, &zc, ckpt.config().t_frames)
}

/// Encodes `x0` with its conditions, rolls the latent forward and decodes
/// all frames; frame 0 of the result is the model's reconstruction of `x0`.
pub fn complete_sequence(
    ckpt: &ModelCheckpoint,
    x0: &SegVolume,
    profile: &ConditionProfile,
    mode: CompletionMode,
    seed: u64,
) -> Result<AnatomySequence> {
    let traj = completion_trajectory(ckpt, x0, profile, mode, seed)?;
    let mut seq = decode_trajectory(ckpt, &traj)?;
    if x0.spacing() != ckpt.spacing {
        let frames = seq
            .frames()
            .iter()
            .map(|f| SegVolume::new(f.dims(), x0.spacing(), f.labels().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        seq = AnatomySequence::new(frames, ckpt.frame_period_s)?;
    }
    Ok(seq)
}

/// `n` standard-normal `z0` draws from a seeded stream.
pub fn prior_draws(ckpt: &ModelCheckpoint, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nz = ckpt.config().latent_dim_z0;
    (0..n)
        .map(|_| (0..nz).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

/// Rolls out and decodes one sequence per given `z0` under shared conditions.
pub fn generate_from_latents(
    ckpt: &ModelCheckpoint,
    profile: &ConditionProfile,
    z0s: &[Vec<f64>],
) -> Result<Vec<(LatentTrajectory, AnatomySequence)>> {
    let zc = condition_latent(ckpt, profile)?;
    let t = ckpt.config().t_frames;
    z0s.par_iter()
        .map(|z0| {
            let traj = ckpt.network.rollout(z0, &zc, t)?;
            let seq = decode_trajectory(ckpt, &traj)?;
            Ok((traj, seq))
        })
        .collect()
}

/// `n` sequences from independent prior draws sharing the condition latent.
pub fn generate_sequences(
    ckpt: &ModelCheckpoint,
    profile: &ConditionProfile,
    n: usize,
    seed: u64,
) -> Result<Vec<AnatomySequence>> {
    if n == 0 {
        return Err(invalid!("number of samples must be at least 1"));
    }
    let z0s = prior_draws(ckpt, n, seed);
    Ok(generate_from_latents(ckpt, profile, &z0s)?
        .into_iter()
        .map(|(_, s)| s)
        .collect())
}
