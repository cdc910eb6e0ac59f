//! β-VAE sequence objective: per-frame voxel-mean cross-entropy summed over
//! the cycle plus β times the closed-form Gaussian KL to the standard normal
//! prior. A single frame (T = 1) gives the static objective.

use serde::{Deserialize, Serialize};

use crate::datakit::N_CLASSES;
use crate::error::{Error, Result};

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

/// Diagonal Gaussian posterior over `z0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorParams {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl PosteriorParams {
    /// Builds a posterior, clamping `log_var` into `[-10, 10]`.
    pub fn new(mu: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mu.len() != log_var.len() {
            return Err(Error::ShapeMismatch(format!(
                "mu has {} entries, log_var {}",
                mu.len(),
                log_var.len()
            )));
        }
        if mu.iter().chain(&log_var).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("posterior parameters".into()));
        }
        let log_var = log_var
            .into_iter()
            .map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX))
            .collect();
        Ok(Self { mu, log_var })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// `z0 = mu + exp(log_var / 2) * eps`.
pub fn reparameterize(post: &PosteriorParams, eps: &[f64]) -> Result<Vec<f64>> {
    if eps.len() != post.dim() {
        return Err(Error::ShapeMismatch(format!(
            "eps has {} entries, posterior {}",
            eps.len(),
            post.dim()
        )));
    }
    if eps.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eps".into()));
    }
    Ok(post
        .mu
        .iter()
        .zip(&post.log_var)
        .zip(eps)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect())
}

/// `KL(N(mu, exp(log_var)) || N(0, I)) = 1/2 * sum(mu^2 + exp(log_var) - 1 - log_var)`.
pub fn kl_gaussian_standard(mu: &[f64], log_var: &[f64]) -> f64 {
    mu.iter()
        .zip(log_var)
        .map(|(m, lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub recon: Vec<f64>,
    pub recon_sum: f64,
    pub kl: f64,
    pub beta: f64,
}

impl LossBreakdown {
    pub fn new(recon: Vec<f64>, kl: f64, beta: f64) -> Result<Self> {
        let recon_sum: f64 = recon.iter().sum();
        let total = recon_sum + beta * kl;
        if !total.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss (recon {recon_sum}, kl {kl})"
            )));
        }
        Ok(Self {
            total,
            recon,
            recon_sum,
            kl,
            beta,
        })
    }

    /// Element-wise mean of several breakdowns (all with the same length).
    pub fn mean(items: &[LossBreakdown]) -> Option<LossBreakdown> {
        let first = items.first()?;
        let n = items.len() as f64;
        let mut recon = vec![0.0; first.recon.len()];
        let mut kl = 0.0;
        for it in items {
            for (a, b) in recon.iter_mut().zip(&it.recon) {
                *a += b / n;
            }
            kl += it.kl / n;
        }
        let recon_sum = recon.iter().sum();
        let total = items.iter().map(|i| i.total).sum::<f64>() / n;
        Some(LossBreakdown {
            total,
            recon,
            recon_sum,
            kl,
            beta: first.beta,
        })
    }
}

/// Voxel-mean cross-entropy of channel-first logits against a channel-first
/// one-hot (or soft) target. When `grad` is given, writes
/// `scale * dCE/dlogits` into it.
pub fn frame_cross_entropy(
    logits: &[f64],
    target: &[f64],
    grad: Option<(&mut [f64], f64)>,
) -> Result<f64> {
    if logits.len() != target.len() || logits.len() % N_CLASSES != 0 {
        return Err(Error::ShapeMismatch(format!(
            "logits {} vs target {}",
            logits.len(),
            target.len()
        )));
    }
    let v = logits.len() / N_CLASSES;
    let mut total = 0.0;
    let mut grad = grad;
    for i in 0..v {
        let mut m = f64::NEG_INFINITY;
        for c in 0..N_CLASSES {
            m = m.max(logits[c * v + i]);
        }
        let mut z = 0.0;
        for c in 0..N_CLASSES {
            z += (logits[c * v + i] - m).exp();
        }
        let log_z = m + z.ln();
        for c in 0..N_CLASSES {
            let t = target[c * v + i];
            total -= t * (logits[c * v + i] - log_z);
        }
        if let Some((g, scale)) = grad.as_mut() {
            let tsum: f64 = (0..N_CLASSES).map(|c| target[c * v + i]).sum();
            for c in 0..N_CLASSES {
                let p = (logits[c * v + i] - log_z).exp();
                g[c * v + i] = *scale * (p * tsum - target[c * v + i]) / v as f64;
            }
        }
    }
    Ok(total / v as f64)
}

/// Channel softmax of a channel-first logit volume.
pub fn softmax_channels(logits: &[f64]) -> Vec<f64> {
    let v = logits.len() / N_CLASSES;
    let mut out = vec![0.0; logits.len()];
    for i in 0..v {
        let m = (0..N_CLASSES)
            .map(|c| logits[c * v + i])
            .fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..N_CLASSES).map(|c| (logits[c * v + i] - m).exp()).sum();
        for c in 0..N_CLASSES {
            out[c * v + i] = (logits[c * v + i] - m).exp() / z;
        }
    }
    out
}

/// Sequence objective over `T` predicted logit volumes and one-hot targets.
pub fn sequence_loss(
    pred_logits: &[Vec<f64>],
    targets: &[Vec<f64>],
    post: &PosteriorParams,
    beta: f64,
) -> Result<LossBreakdown> {
    if pred_logits.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predicted frames vs {} target frames",
            pred_logits.len(),
            targets.len()
        )));
    }
    let recon = pred_logits
        .iter()
        .zip(targets)
        .map(|(p, t)| frame_cross_entropy(p, t, None))
        .collect::<Result<Vec<_>>>()?;
    LossBreakdown::new(recon, kl_gaussian_standard(&post.mu, &post.log_var), beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_closed_form_cases() {
        assert_eq!(kl_gaussian_standard(&[0.0; 32], &[0.0; 32]), 0.0);
        assert!((kl_gaussian_standard(&[1.0; 32], &[0.0; 32]) - 16.0).abs() < 1e-12);
        let l4 = 4f64.ln();
        let want = 0.5 * (4.0 - 1.0 - l4);
        assert!((kl_gaussian_standard(&[0.0], &[l4]) - want).abs() < 1e-12);
    }

    #[test]
    fn reparameterize_cases() {
        let post = PosteriorParams::new(vec![1.0, -2.0], vec![0.7, -0.3]).unwrap();
        assert_eq!(reparameterize(&post, &[0.0, 0.0]).unwrap(), vec![1.0, -2.0]);
        let unit = PosteriorParams::new(vec![1.0, -2.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(
            reparameterize(&unit, &[0.5, 0.25]).unwrap(),
            vec![1.5, -1.75]
        );
        assert!(reparameterize(&unit, &[0.5]).is_err());
    }

    #[test]
    fn log_var_is_clamped() {
        let post = PosteriorParams::new(vec![0.0, 0.0], vec![-50.0, 50.0]).unwrap();
        assert_eq!(post.log_var, vec![-10.0, 10.0]);
        assert!(PosteriorParams::new(vec![f64::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn softmax_sums_to_one() {
        let logits: Vec<f64> = (0..4 * 10).map(|i| (i as f64 * 1.3).sin() * 7.0).collect();
        let p = softmax_channels(&logits);
        for i in 0..10 {
            let s: f64 = (0..4).map(|c| p[c * 10 + i]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_prediction_drives_loss_to_zero() {
        let target = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let post = PosteriorParams::new(vec![0.0; 4], vec![0.0; 4]).unwrap();
        let mut last = f64::INFINITY;
        for scale in [1.0, 5.0, 20.0, 60.0] {
            let logits: Vec<f64> = target.iter().map(|t| t * scale).collect();
            let loss = sequence_loss(
                &[logits.clone(), logits],
                &[target.clone(), target.clone()],
                &post,
                0.001,
            )
            .unwrap();
            assert!(loss.total < last);
            last = loss.total;
        }
        assert!(last < 1e-20);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let logits: Vec<f64> = (0..12).map(|i| (i as f64 * 0.77).cos()).collect();
        let target = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let mut g = vec![0.0; 12];
        frame_cross_entropy(&logits, &target, Some((&mut g, 1.0))).unwrap();
        for j in 0..12 {
            let mut p = logits.clone();
            p[j] += 1e-6;
            let mut m = logits.clone();
            m[j] -= 1e-6;
            let fd = (frame_cross_entropy(&p, &target, None).unwrap()
                - frame_cross_entropy(&m, &target, None).unwrap())
                / 2e-6;
            assert!((fd - g[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn mismatched_frames_error() {
        let post = PosteriorParams::new(vec![0.0], vec![0.0]).unwrap();
        assert!(sequence_loss(&[vec![0.0; 4]], &[], &post, 0.1).is_err());
    }
}
