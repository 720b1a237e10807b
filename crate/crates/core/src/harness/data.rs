//! Synthetic Gaussian-cluster classification task.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffnet::Tensor;
use crate::splitmodel::argmax;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub input_dim: usize,
    pub classes: usize,
    /// Distance of each class centre from the origin, in noise standard
    /// deviations.
    pub separation: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { samples: 10_000, input_dim: 64, classes: 10, separation: 3.85, test_fraction: 0.2, seed: 7 }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.classes < 2 || self.input_dim < self.classes {
            return bad(format!("need 2 <= classes <= input_dim, got {} and {}", self.classes, self.input_dim));
        }
        if self.samples == 0 || self.samples % self.classes != 0 {
            return bad(format!("{} samples cannot be split evenly over {} classes", self.samples, self.classes));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return bad(format!("separation {} must be positive", self.separation));
        }
        let per_class = self.samples / self.classes;
        let test = self.test_per_class();
        if !(0.0..1.0).contains(&self.test_fraction) || test == 0 || test == per_class {
            return bad(format!("test fraction {} leaves an empty partition", self.test_fraction));
        }
        Ok(())
    }

    fn test_per_class(&self) -> usize {
        ((self.samples / self.classes) as f64 * self.test_fraction).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub spec: SyntheticSpec,
    pub centers: Vec<Vec<f64>>,
    pub train_x: Tensor,
    pub train_y: Vec<usize>,
    pub test_x: Tensor,
    pub test_y: Vec<usize>,
}

/// Orthonormal directions by Gram-Schmidt on Gaussian vectors.
fn orthonormal(k: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    while out.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for u in &out {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            out.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    out
}

/// Class `k` is `N(ρ·u_k, I)` with orthonormal `u_k`; each class contributes
/// the same number of rows to train and to test.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.input_dim;
    let centers: Vec<Vec<f64>> = orthonormal(spec.classes, d, &mut rng)
        .into_iter()
        .map(|u| u.into_iter().map(|a| a * spec.separation).collect())
        .collect();
    let per_class = spec.samples / spec.classes;
    let test_n = spec.test_per_class();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for i in 0..per_class {
            let row: Vec<f64> = center.iter().map(|m| m + Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
            if i < test_n { test.push((row, c)) } else { train.push((row, c)) }
        }
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    let to_tensor = |rows: &[(Vec<f64>, usize)]| {
        Tensor::matrix(rows.len(), d, rows.iter().flat_map(|(r, _)| r.iter().copied()).collect())
    };
    Ok(SyntheticDataset {
        spec: spec.clone(),
        train_x: to_tensor(&train)?,
        train_y: train.iter().map(|(_, c)| *c).collect(),
        test_x: to_tensor(&test)?,
        test_y: test.iter().map(|(_, c)| *c).collect(),
        centers,
    })
}

impl SyntheticDataset {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.display().to_string()),
            _ => Error::Io(e),
        })?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Linear reference classifier: assigns the class with the closest mean.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestCentroid {
    pub centroids: Vec<Vec<f64>>,
}

impl NearestCentroid {
    pub fn fit(x: &Tensor, y: &[usize], classes: usize) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Shape(format!("{} rows but {} labels", x.rows(), y.len())));
        }
        let mut sums = vec![vec![0.0; x.cols()]; classes];
        let mut counts = vec![0usize; classes];
        for (r, &c) in y.iter().enumerate() {
            if c >= classes {
                return Err(Error::InvalidParam(format!("label {c} with {classes} classes")));
            }
            counts[c] += 1;
            sums[c].iter_mut().zip(x.row(r)).for_each(|(s, v)| *s += v);
        }
        if counts.contains(&0) {
            return Err(Error::Degenerate("a class has no samples".into()));
        }
        let centroids = sums.into_iter().zip(counts).map(|(s, n)| s.into_iter().map(|v| v / n as f64).collect()).collect();
        Ok(Self { centroids })
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        let neg_dist: Vec<f64> =
            self.centroids.iter().map(|c| -c.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).collect();
        argmax(&neg_dist)
    }

    pub fn accuracy(&self, x: &Tensor, y: &[usize]) -> f64 {
        let hits = (0..x.rows()).filter(|&r| self.predict(x.row(r)) == y[r]).count();
        hits as f64 / y.len().max(1) as f64
    }
}
