//! Classification and distillation losses and their gradients with respect
//! to the student logits.

use serde::{Deserialize, Serialize};

use crate::diffnet::Tensor;
use crate::{Error, Result};

pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight of the label term; `1 - lambda` goes to distillation.
    pub lambda: f64,
    pub temperature: f64,
    /// l1 weight on the scaling vectors.
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda: 0.5, temperature: 4.0, gamma: 1e-3 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParam(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidParam(format!("temperature {} must be positive", self.temperature)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParam(format!("gamma {} must be non-negative", self.gamma)));
        }
        Ok(())
    }
}

/// `softmax(z / t)` with max subtraction.
pub fn tempered_softmax(z: &[f64], t: f64) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| ((v - m) / t).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    tempered_softmax(z, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CeLoss {
    pub value: f64,
    /// Set when some probability had to be floored away from 0 or 1.
    pub clamped: bool,
}

/// Per-class binary cross-entropy `−Σ c log p + (1−c) log(1−p)`.
pub fn ce_loss(c: &[f64], p: &[f64]) -> Result<CeLoss> {
    if c.len() != p.len() {
        return Err(Error::Shape(format!("target of {} vs {} probabilities", c.len(), p.len())));
    }
    let mut clamped = false;
    let mut value = 0.0;
    for (&cj, &pj) in c.iter().zip(p) {
        let q = pj.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        clamped |= q != pj;
        value -= cj * q.ln() + (1.0 - cj) * (1.0 - q).ln();
    }
    Ok(CeLoss { value, clamped })
}

/// `T²·KL(p‖q)` between the tempered teacher and student distributions.
pub fn kd_loss(z_teacher: &[f64], z_student: &[f64], t: f64) -> Result<f64> {
    if z_teacher.len() != z_student.len() {
        return Err(Error::Shape(format!("{} teacher vs {} student logits", z_teacher.len(), z_student.len())));
    }
    let p = tempered_softmax(z_teacher, t);
    let q = tempered_softmax(z_student, t);
    let kl: f64 = p
        .iter()
        .zip(&q)
        .filter(|(&pj, _)| pj > 0.0)
        .map(|(&pj, &qj)| pj * (pj / qj.max(PROB_FLOOR)).ln())
        .sum();
    Ok(t * t * kl.max(0.0))
}

fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    let mut c = vec![0.0; classes];
    c[label] = 1.0;
    c
}

pub fn sll(c: &[f64], z_student: &[f64], z_teacher: &[f64], w: &LossWeights) -> Result<f64> {
    let ce = ce_loss(c, &softmax(z_student))?.value;
    let kd = kd_loss(z_teacher, z_student, w.temperature)?;
    Ok(w.lambda * ce + (1.0 - w.lambda) * kd)
}

/// Gradient of [`sll`] with respect to the student logits.
pub fn sll_grad(c: &[f64], z_student: &[f64], z_teacher: &[f64], w: &LossWeights) -> Result<Vec<f64>> {
    if c.len() != z_student.len() || z_teacher.len() != z_student.len() {
        return Err(Error::Shape("target, student and teacher lengths differ".into()));
    }
    let t = w.temperature;
    let p = softmax(z_student);
    let g: Vec<f64> = c
        .iter()
        .zip(&p)
        .map(|(&cj, &pj)| {
            let pj = pj.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            -cj / pj + (1.0 - cj) / (1.0 - pj)
        })
        .collect();
    let gp: f64 = g.iter().zip(&p).map(|(a, b)| a * b).sum();
    let pt = tempered_softmax(z_teacher, t);
    let qt = tempered_softmax(z_student, t);
    Ok((0..p.len())
        .map(|k| w.lambda * p[k] * (g[k] - gp) + (1.0 - w.lambda) * t * (qt[k] - pt[k]))
        .collect())
}

/// Mean loss over a batch and its gradient with respect to each row of
/// student logits. `teacher` may be omitted when `lambda = 1`.
pub fn sll_batch(
    labels: &[usize],
    student: &Tensor,
    teacher: Option<&Tensor>,
    w: &LossWeights,
) -> Result<(f64, Tensor)> {
    let n = student.rows();
    let l = student.cols();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    if teacher.is_none() && w.lambda < 1.0 {
        return Err(Error::InvalidParam("distillation weight set but no teacher logits".into()));
    }
    if let Some(t) = teacher {
        if t.shape() != student.shape() {
            return Err(Error::Shape(format!("teacher {:?} vs student {:?}", t.shape(), student.shape())));
        }
    }
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(n * l);
    for (r, &label) in labels.iter().enumerate() {
        if label >= l {
            return Err(Error::InvalidParam(format!("label {label} with {l} classes")));
        }
        let c = one_hot(label, l);
        let zs = student.row(r);
        let zt = teacher.map(|t| t.row(r)).unwrap_or(zs);
        total += sll(&c, zs, zt, w)?;
        grad.extend(sll_grad(&c, zs, zt, w)?.into_iter().map(|g| g / n as f64));
    }
    let grad = Tensor::new(student.shape().to_vec(), grad)?;
    if !total.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok((total / n as f64, grad))
}
