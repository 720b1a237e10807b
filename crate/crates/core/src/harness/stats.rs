//! Rank statistics for trend checks.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

/// Average ranks (1-based), ties sharing their mean rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidParam(format!("need two equal series of at least 3 points, got {} and {}", x.len(), y.len())));
    }
    Ok(pearson(&ranks(x), &ranks(y)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trend {
    pub rho: f64,
    /// One-sided p-value for a decreasing relationship.
    pub p_decreasing: f64,
}

/// Spearman's rho with a one-sided p-value for `rho < 0`, using the
/// Student-t approximation with `n − 2` degrees of freedom.
pub fn decreasing_trend(x: &[f64], y: &[f64]) -> Result<Trend> {
    let rho = spearman(x, y)?;
    let n = x.len() as f64;
    let p = if rho <= -1.0 {
        0.0
    } else if rho >= 1.0 {
        1.0
    } else {
        let t = rho * ((n - 2.0) / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, n - 2.0).map_err(|e| Error::Internal(e.to_string()))?;
        dist.cdf(t)
    };
    Ok(Trend { rho, p_decreasing: p })
}
