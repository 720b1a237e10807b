//! Structured pruning with a per-channel scaling vector.
//!
//! Channel `k` of a feature block is multiplied by `δ[k]`; an l1 penalty on
//! `δ` pushes unneeded channels toward zero and channels with `δ[k] < η`
//! are dropped from transmission.

use serde::{Deserialize, Serialize};

use crate::diffnet::Tensor;
use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingVector {
    pub scales: Vec<f64>,
    pub threshold: f64,
}

impl ScalingVector {
    /// Identity scaling over `channels` channels.
    pub fn ones(channels: usize, threshold: f64) -> Self {
        Self { scales: vec![1.0; channels], threshold }
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }
}

/// Which feature channels survive transmission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMask {
    keep: Vec<bool>,
}

impl ChannelMask {
    pub fn all(channels: usize) -> Self {
        Self { keep: vec![true; channels] }
    }

    pub fn from_keep(keep: Vec<bool>) -> Self {
        Self { keep }
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn is_kept(&self, channel: usize) -> bool {
        self.keep[channel]
    }

    /// `z′`, the number of surviving channels.
    pub fn surviving_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn surviving_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i)
    }

    /// 16-bit FNV-1a digest of the packed mask, carried in frame headers so
    /// the receiver can check it holds the same mask.
    pub fn id(&self) -> u16 {
        let mut h: u32 = 0x811c_9dc5;
        let mut feed = |b: u8| {
            h ^= b as u32;
            h = h.wrapping_mul(0x0100_0193);
        };
        for b in (self.keep.len() as u32).to_be_bytes() {
            feed(b);
        }
        for chunk in self.keep.chunks(8) {
            let byte = chunk.iter().enumerate().fold(0u8, |acc, (i, &k)| acc | ((k as u8) << (7 - i)));
            feed(byte);
        }
        ((h >> 16) ^ (h & 0xffff)) as u16
    }

    /// Zeroes the dropped channels of every row.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.keep.len() {
            return Err(Error::Shape(format!("{} channels vs mask of {}", x.cols(), self.keep.len())));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (v, &k) in out.row_mut(r).iter_mut().zip(&self.keep) {
                if !k {
                    *v = 0.0;
                }
            }
        }
        Ok(out)
    }
}

/// Multiplies channel `k` of every row by `δ[k]`.
pub fn apply_scaling(x: &Tensor, sv: &ScalingVector) -> Result<Tensor> {
    if x.cols() != sv.scales.len() {
        return Err(Error::Shape(format!("{} channels vs {} scales", x.cols(), sv.scales.len())));
    }
    let mut out = x.clone();
    for r in 0..out.rows() {
        for (v, s) in out.row_mut(r).iter_mut().zip(&sv.scales) {
            *v *= s;
        }
    }
    Ok(out)
}

/// Keeps channel `k` iff `δ[k] ≥ η`.
pub fn mask_from(sv: &ScalingVector) -> ChannelMask {
    ChannelMask { keep: sv.scales.iter().map(|&d| d >= sv.threshold).collect() }
}

pub fn l1_loss(sv: &ScalingVector) -> f64 {
    sv.scales.iter().map(|d| d.abs()).sum()
}

/// `sign(δ[k])`, choosing 0 at `δ[k] = 0`.
pub fn l1_subgradient(sv: &ScalingVector) -> Vec<f64> {
    sv.scales
        .iter()
        .map(|&d| if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 })
        .collect()
}

/// Proximal step of `step · ||δ||_1`: shrinks each scale towards zero by
/// `step` without crossing it.
pub fn l1_prox(sv: &mut ScalingVector, step: f64) {
    for d in &mut sv.scales {
        *d = d.signum() * (d.abs() - step).max(0.0);
    }
}
