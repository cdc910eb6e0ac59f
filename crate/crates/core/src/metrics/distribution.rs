//! Similarity between two empirical 1-D distributions.

use crate::error::{invalid, Result};

pub const DEFAULT_BINS: usize = 50;
const SMOOTHING: f64 = 1e-9;

fn check(p: &[f64], q: &[f64]) -> Result<()> {
    if p.is_empty() || q.is_empty() {
        return Err(invalid!("distribution comparison needs non-empty samples"));
    }
    if p.iter().chain(q).any(|v| !v.is_finite()) {
        return Err(invalid!("samples must be finite"));
    }
    Ok(())
}

/// `KL(P || Q)` between histograms of the two samples over their common
/// range, with `n_bins` equal-width bins and additive smoothing.
pub fn kl_divergence_hist(p: &[f64], q: &[f64], n_bins: usize) -> Result<f64> {
    check(p, q)?;
    if n_bins == 0 {
        return Err(invalid!("n_bins must be positive"));
    }
    let lo = p.iter().chain(q).copied().fold(f64::INFINITY, f64::min);
    let hi = p.iter().chain(q).copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;
    let hist = |s: &[f64]| {
        let mut h = vec![SMOOTHING; n_bins];
        for &v in s {
            let b = if width > 0.0 {
                (((v - lo) / width) as usize).min(n_bins - 1)
            } else {
                0
            };
            h[b] += 1.0;
        }
        let total: f64 = h.iter().sum();
        h.iter_mut().for_each(|x| *x /= total);
        h
    };
    let (hp, hq) = (hist(p), hist(q));
    let kl: f64 = hp.iter().zip(&hq).map(|(a, b)| a * (a / b).ln()).sum();
    Ok(kl.max(0.0))
}

/// Exact 1-Wasserstein distance between two empirical distributions: the
/// integral of `|F_p - F_q|` over the merged support.
pub fn wasserstein_1d(p: &[f64], q: &[f64]) -> Result<f64> {
    check(p, q)?;
    let mut a = p.to_vec();
    let mut b = q.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut x = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => break,
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - x);
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
        x = next;
    }
    Ok(total)
}
