use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Result};

/// Two-sided paired Student's t-test on `a - b`. A zero-variance difference
/// gives `(0, 1)`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(invalid!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        ));
    }
    let n = a.len();
    if n < 2 {
        return Err(invalid!("paired t-test needs at least 2 pairs, got {n}"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Ok((0.0, 1.0));
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let dist =
        StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| invalid!("t distribution: {e}"))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok((t, p.clamp(0.0, 1.0)))
}

/// Ranks starting at 1, tied values sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut s = 0;
    while s < idx.len() {
        let mut e = s;
        while e + 1 < idx.len() && v[idx[e + 1]] == v[idx[s]] {
            e += 1;
        }
        let r = (s + e) as f64 / 2.0 + 1.0;
        for &i in &idx[s..=e] {
            ranks[i] = r;
        }
        s = e + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation; `None` when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid!(
            "spearman needs two equal-length samples of size >= 2"
        ));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// Mean and 95% normal-approximation half-width `1.96 * sd / sqrt(n)`
/// (zero for a single value).
pub fn mean_ci95(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    (mean, 1.96 * sd / (n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_test_by_hand() {
        let a = [2.0, 2.0, 2.0, 0.0];
        let b = [1.0, 1.0, 1.0, 1.0];
        let (t, p) = paired_t_test(&a, &b).unwrap();
        assert!((t - 1.0).abs() < 1e-12);
        // Two-sided p for t = 1 with 3 degrees of freedom.
        assert!((p - 0.391_002_2).abs() < 1e-6, "{p}");
        let (t2, p2) = paired_t_test(&b, &a).unwrap();
        assert_eq!((t2, p2), (-t, p));
        assert_eq!(paired_t_test(&a, &a).unwrap(), (0.0, 1.0));
        assert!(paired_t_test(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn spearman_cases() {
        assert_eq!(
            spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(),
            Some(1.0)
        );
        assert_eq!(
            spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 0.0]).unwrap(),
            Some(-1.0)
        );
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).unwrap(), None);
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    #[test]
    fn ci_half_width() {
        let (m, h) = mean_ci95(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((h - 1.96 * sd / 2.0).abs() < 1e-12);
        assert_eq!(mean_ci95(&[7.0]), (7.0, 0.0));
    }
}
