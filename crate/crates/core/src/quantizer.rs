//! Learned non-linear quantizer.
//!
//! The ideal quantizer is a staircase built from unit steps placed at the
//! levels `θ[1..]`:
//!
//! ```text
//! Q_ideal(x) = θ[0] + Σ_{i≥1} (θ[i] − θ[i−1]) · μ(x − θ[i])
//! ```
//!
//! Training replaces each step by a sigmoid of sharpness `T`, which makes the
//! map and its derivatives with respect to `x` and every level exact and
//! smooth. Transmission uses a separate hard codec that sends the index of
//! the nearest level (midpoint partition) as a `q`-bit word. Note that the
//! staircase switches at `θ[i]` while the codec switches at midpoints; both
//! are kept exactly as defined.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAX_BITS: u8 = 8;

/// Logistic function `1 / (1 + e^{−x})`, evaluated without overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Ascending quantization levels plus the relaxation temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerParams {
    levels: Vec<f64>,
    bits: u8,
    temperature: f64,
}

impl QuantizerParams {
    pub fn new(levels: Vec<f64>, bits: u8, temperature: f64) -> Result<Self> {
        let qp = Self { levels, bits, temperature };
        qp.validate()?;
        Ok(qp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 || self.bits > MAX_BITS {
            return Err(Error::InvalidParam(format!("q = {} outside 1..=8", self.bits)));
        }
        if self.levels.len() != 1usize << self.bits {
            return Err(Error::InvalidParam(format!(
                "{} levels for q = {} (need {})",
                self.levels.len(),
                self.bits,
                1usize << self.bits
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidParam(format!("temperature {} must be > 0", self.temperature)));
        }
        if self.levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("quantization level".into()));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParam(format!("levels {:?} not strictly ascending", self.levels)));
        }
        Ok(())
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn set_temperature(&mut self, temperature: f64) -> Result<()> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidParam(format!("temperature {temperature} must be > 0")));
        }
        self.temperature = temperature;
        Ok(())
    }

    /// Applies `θ ← θ − lr·grad`, then restores strict ascent.
    pub fn descend(&mut self, grad: &[f64], lr: f64) -> Result<()> {
        if grad.len() != self.levels.len() {
            return Err(Error::Shape(format!("{} level gradients for {} levels", grad.len(), self.levels.len())));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("level gradient".into()));
        }
        for (t, g) in self.levels.iter_mut().zip(grad) {
            *t -= lr * g;
        }
        self.restore_order();
        Ok(())
    }

    /// Sorts the levels and nudges ties apart so they are strictly ascending.
    pub fn restore_order(&mut self) {
        self.levels.sort_by(f64::total_cmp);
        make_strictly_ascending(&mut self.levels);
    }

    /// Decision thresholds of the hard codec: `(θ[i] + θ[i+1]) / 2`.
    pub fn midpoints(&self) -> Vec<f64> {
        self.levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Index of the level the hard codec sends for `x`: the number of
    /// midpoints strictly below `x`.
    pub fn level_index(&self, x: f64) -> usize {
        // midpoints ascend because the levels do
        let l = &self.levels;
        let (mut lo, mut hi) = (0usize, l.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if 0.5 * (l[mid] + l[mid + 1]) < x {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Staircase value for one element.
    pub fn ideal_scalar(&self, x: f64) -> f64 {
        let steps = self.levels[1..].iter().filter(|&&t| x >= t).count();
        self.levels[steps]
    }

    /// Relaxed staircase value for one element.
    pub fn soft_scalar(&self, x: f64) -> f64 {
        let t = self.temperature;
        let l = &self.levels;
        let mut out = l[0];
        for i in 1..l.len() {
            out += (l[i] - l[i - 1]) * sigmoid(t * (x - l[i]));
        }
        out
    }

    /// Relaxed value and `∂/∂x` for one element; adds `upstream·∂Q/∂θ[i]`
    /// into `d_levels`.
    pub fn soft_scalar_backward(&self, x: f64, upstream: f64, d_levels: &mut [f64]) -> (f64, f64) {
        let t = self.temperature;
        let l = &self.levels;
        let last = l.len() - 1;
        let mut out = l[0];
        let mut dx = 0.0;
        for i in 1..=last {
            let s = sigmoid(t * (x - l[i]));
            let gap = l[i] - l[i - 1];
            let slope = t * gap * s * (1.0 - s);
            out += gap * s;
            dx += slope;
            // θ[i] appears in term i (as scale and bias) and in term i+1
            // (as the negative scale); the i+1 part is added next iteration
            d_levels[i] += upstream * (s - slope);
            if i == 1 {
                d_levels[0] += upstream * (1.0 - s);
            } else {
                d_levels[i - 1] -= upstream * s;
            }
        }
        (out, dx)
    }
}

fn make_strictly_ascending(levels: &mut [f64]) {
    let lo = levels.first().copied().unwrap_or(0.0);
    let hi = levels.last().copied().unwrap_or(0.0);
    let eps = 1e-6 * (hi - lo).abs().max(1.0);
    for i in 1..levels.len() {
        if levels[i] <= levels[i - 1] {
            levels[i] = levels[i - 1] + eps;
        }
    }
}

fn check_finite(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(p) => Err(Error::NonFinite(format!("feature element {p} is {}", x[p]))),
        None => Ok(()),
    }
}

/// Staircase quantizer with unit steps at `θ[1..]` (`μ(0) = 1`).
pub fn quantize_ideal(x: &[f64], qp: &QuantizerParams) -> Result<Vec<f64>> {
    qp.validate()?;
    check_finite(x)?;
    Ok(x.iter().map(|&v| qp.ideal_scalar(v)).collect())
}

/// Sigmoid relaxation of [`quantize_ideal`] at temperature `qp.temperature()`.
pub fn quantize_soft(x: &[f64], qp: &QuantizerParams) -> Result<Vec<f64>> {
    qp.validate()?;
    check_finite(x)?;
    Ok(x.iter().map(|&v| qp.soft_scalar(v)).collect())
}

/// Elementwise derivatives of the relaxed quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantGrads {
    /// `∂Q(x_e)/∂x_e` per element.
    pub d_input: Vec<f64>,
    /// `d_levels[i][e] = ∂Q(x_e)/∂θ[i]`.
    pub d_levels: Vec<Vec<f64>>,
}

/// Analytic derivatives of [`quantize_soft`] with respect to the input and
/// to every level, covering the first, interior and last level cases.
pub fn quant_grads(x: &[f64], qp: &QuantizerParams) -> Result<QuantGrads> {
    qp.validate()?;
    check_finite(x)?;
    let t = qp.temperature;
    let l = &qp.levels;
    let last = l.len() - 1;
    let mut d_input = Vec::with_capacity(x.len());
    let mut d_levels = vec![Vec::with_capacity(x.len()); l.len()];
    for &v in x {
        let sig: Vec<f64> = (0..=last).map(|i| if i == 0 { 0.0 } else { sigmoid(t * (v - l[i])) }).collect();
        let slope = |i: usize| t * (l[i] - l[i - 1]) * sig[i] * (1.0 - sig[i]);
        d_input.push((1..=last).map(slope).sum());
        for (i, dl) in d_levels.iter_mut().enumerate() {
            let g = if i == 0 {
                1.0 - sig[1]
            } else if i < last {
                -slope(i) + sig[i] - sig[i + 1]
            } else {
                -slope(i) + sig[i]
            };
            dl.push(g);
        }
    }
    Ok(QuantGrads { d_input, d_levels })
}

/// Conventional uniform quantizer over the block's own range:
/// `round(q_w·(x − min))/q_w + min` with `q_w = (2^q − 1)/(max − min)`.
pub fn quantize_linear(x: &[f64], bits: u8) -> Result<Vec<f64>> {
    if bits == 0 || bits > MAX_BITS {
        return Err(Error::InvalidParam(format!("q = {bits} outside 1..=8")));
    }
    check_finite(x)?;
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if x.is_empty() || hi <= lo {
        return Err(Error::Degenerate("linear quantization of a constant block".into()));
    }
    let qw = ((1u32 << bits) - 1) as f64 / (hi - lo);
    Ok(x.iter().map(|&v| (qw * (v - lo)).round() / qw + lo).collect())
}

/// A `q`-bit codeword, most significant bit first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitWord {
    value: u8,
    len: u8,
}

impl BitWord {
    pub fn new(value: u8, len: u8) -> Result<Self> {
        if len == 0 || len > MAX_BITS || (len < 8 && value >> len != 0) {
            return Err(Error::Codec(format!("value {value} does not fit in {len} bits")));
        }
        Ok(Self { value, len })
    }

    /// Parses a string of `0`/`1` characters.
    pub fn parse(s: &str) -> Result<Self> {
        if s.is_empty() || s.len() > MAX_BITS as usize {
            return Err(Error::Codec(format!("bad word length in {s:?}")));
        }
        let mut value = 0u8;
        for c in s.chars() {
            value = (value << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    _ => return Err(Error::Codec(format!("bad bit {c:?} in {s:?}"))),
                };
        }
        Self::new(value, s.len() as u8)
    }

    pub fn value(self) -> u8 {
        self.value
    }

    pub fn len(self) -> u8 {
        self.len
    }

    pub fn is_empty(self) -> bool {
        self.len == 0
    }

    /// Bit `k` counted from the most significant end.
    pub fn bit(self, k: u8) -> bool {
        (self.value >> (self.len - 1 - k)) & 1 == 1
    }

    pub fn bits(self) -> impl Iterator<Item = bool> {
        (0..self.len).map(move |k| self.bit(k))
    }
}

impl fmt::Display for BitWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Hard codec: each element becomes the `q`-bit index of its nearest level
/// under the midpoint partition (ties go to the lower level).
pub fn encode_bits(x: &[f64], qp: &QuantizerParams) -> Result<Vec<BitWord>> {
    qp.validate()?;
    check_finite(x)?;
    x.iter().map(|&v| BitWord::new(qp.level_index(v) as u8, qp.bits)).collect()
}

/// Maps each received word back to its level.
pub fn decode_bits(words: &[BitWord], qp: &QuantizerParams) -> Result<Vec<f64>> {
    qp.validate()?;
    words
        .iter()
        .map(|w| {
            if w.len != qp.bits {
                Err(Error::Codec(format!("{}-bit word for a {}-bit quantizer", w.len, qp.bits)))
            } else {
                Ok(qp.levels[w.value as usize])
            }
        })
        .collect()
}

/// Sharpness schedule: `ceil(epoch/10)` up to epoch 100, then `epoch`.
pub fn temperature_for_epoch(epoch: u32) -> Result<f64> {
    match epoch {
        0 => Err(Error::InvalidParam("epochs are numbered from 1".into())),
        1..=100 => Ok(epoch.div_ceil(10) as f64),
        _ => Ok(epoch as f64),
    }
}

/// Initial levels at the empirical quantiles `(i + 0.5)/2^q` of `sample`
/// (inverted-CDF quantiles, no interpolation). Ties are separated by
/// `1e-6·range`.
pub fn init_levels(sample: &[f64], bits: u8) -> Result<QuantizerParams> {
    if bits == 0 || bits > MAX_BITS {
        return Err(Error::InvalidParam(format!("q = {bits} outside 1..=8")));
    }
    check_finite(sample)?;
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = match (sorted.first(), sorted.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        _ => return Err(Error::Degenerate("cannot initialize levels from a constant sample".into())),
    };
    let n = sorted.len();
    let k = 1usize << bits;
    let mut levels: Vec<f64> = (0..k)
        .map(|i| {
            let p = (i as f64 + 0.5) / k as f64;
            let idx = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
            sorted[idx]
        })
        .collect();
    let eps = 1e-6 * (hi - lo);
    for i in 1..k {
        if levels[i] <= levels[i - 1] {
            levels[i] = levels[i - 1] + eps;
        }
    }
    QuantizerParams::new(levels, bits, 1.0)
}

/// Mean squared error of the hard codec reconstruction against `x`.
pub fn codec_mse(x: &[f64], qp: &QuantizerParams) -> Result<f64> {
    let rec = decode_bits(&encode_bits(x, qp)?, qp)?;
    Ok(mse(x, &rec))
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len().max(1) as f64
}

/// Fits levels to a feature sample by gradient descent on the relaxed
/// reconstruction error `mean((Q_soft(x) − x)²)`, sharpening `T` with
/// [`temperature_for_epoch`]. Starts from [`init_levels`].
pub fn train_levels_mse(sample: &[f64], bits: u8, epochs: u32, lr: f64) -> Result<QuantizerParams> {
    let mut qp = init_levels(sample, bits)?;
    let n = sample.len() as f64;
    let mut grad = vec![0.0; qp.num_levels()];
    for epoch in 1..=epochs {
        qp.set_temperature(temperature_for_epoch(epoch)?)?;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for &x in sample {
            // upstream of the squared error, evaluated at the current output
            let out = qp.soft_scalar(x);
            qp.soft_scalar_backward(x, 2.0 * (out - x) / n, &mut grad);
        }
        qp.descend(&grad, lr)?;
    }
    Ok(qp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn qp4(t: f64) -> QuantizerParams {
        QuantizerParams::new(vec![-1.5, -0.5, 0.5, 1.5], 2, t).unwrap()
    }

    #[test]
    fn ideal_examples() {
        let qp = qp4(1.0);
        assert_eq!(quantize_ideal(&[0.7], &qp).unwrap(), vec![0.5]);
        assert_eq!(quantize_ideal(&[-11.5], &qp).unwrap(), vec![-1.5]);
        assert_eq!(quantize_ideal(&[11.5], &qp).unwrap(), vec![1.5]);
        // the step fires at θ[i] itself
        assert_eq!(quantize_ideal(&[0.5], &qp).unwrap(), vec![0.5]);
        assert!(quantize_ideal(&[f64::NAN], &qp).is_err());
    }

    #[test]
    fn soft_examples() {
        let one_bit = |t| QuantizerParams::new(vec![0.0, 1.0], 1, t).unwrap();
        for t in [0.1, 1.0, 37.0] {
            assert!((quantize_soft(&[1.0], &one_bit(t)).unwrap()[0] - 0.5).abs() < 1e-15);
        }
        assert!(quantize_soft(&[0.6], &one_bit(1000.0)).unwrap()[0].abs() < 1e-6);
        // scalar sigmoid oracle
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let expected = -1.5 + s(0.5) + s(-0.5) + s(-1.5);
        let got = quantize_soft(&[0.0], &qp4(1.0)).unwrap()[0];
        assert!((got - expected).abs() < 1e-12);
        assert!((got - (-0.3176)).abs() < 1e-4);
    }

    #[test]
    fn grad_examples() {
        let qp = QuantizerParams::new(vec![0.0, 1.0], 1, 1.0).unwrap();
        let g = quant_grads(&[1.0], &qp).unwrap();
        assert!((g.d_input[0] - 0.25).abs() < 1e-15);
        let g = quant_grads(&[-40.0], &qp).unwrap();
        assert!((g.d_levels[0][0] - 1.0).abs() < 1e-12);
    }

    fn random_case(rng: &mut ChaCha8Rng) -> (f64, QuantizerParams) {
        let bits = rng.random_range(1..=3u8);
        let mut levels: Vec<f64> = (0..1usize << bits).map(|_| rng.random_range(-3.0..3.0)).collect();
        levels.sort_by(f64::total_cmp);
        for i in 1..levels.len() {
            if levels[i] - levels[i - 1] < 0.05 {
                levels[i] = levels[i - 1] + 0.05;
            }
        }
        let t = rng.random_range(0.1..10.0);
        (rng.random_range(-4.0..4.0), QuantizerParams::new(levels, bits, t).unwrap())
    }

    #[test]
    fn grads_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = 1e-6;
        for _ in 0..300 {
            let (x, qp) = random_case(&mut rng);
            let g = quant_grads(&[x], &qp).unwrap();
            let num_x = (qp.soft_scalar(x + h) - qp.soft_scalar(x - h)) / (2.0 * h);
            let scale = |a: f64, b: f64| a.abs().max(b.abs()).max(1e-3);
            assert!((g.d_input[0] - num_x).abs() / scale(g.d_input[0], num_x) < 1e-4);
            for i in 0..qp.num_levels() {
                let mut p = qp.clone();
                p.levels[i] += h;
                let mut m = qp.clone();
                m.levels[i] -= h;
                let num = (p.soft_scalar(x) - m.soft_scalar(x)) / (2.0 * h);
                let a = g.d_levels[i][0];
                assert!((a - num).abs() / scale(a, num) < 1e-4, "level {i}: {a} vs {num}");
            }
        }
    }

    #[test]
    fn fused_backward_agrees_with_quant_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let (x, qp) = random_case(&mut rng);
            let up = rng.random_range(-2.0..2.0);
            let mut dl = vec![0.0; qp.num_levels()];
            let (out, dx) = qp.soft_scalar_backward(x, up, &mut dl);
            let g = quant_grads(&[x], &qp).unwrap();
            assert!((out - qp.soft_scalar(x)).abs() < 1e-12);
            assert!((dx - g.d_input[0]).abs() < 1e-12);
            for i in 0..qp.num_levels() {
                assert!((dl[i] - up * g.d_levels[i][0]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_examples() {
        assert_eq!(quantize_linear(&[0.0, 1.0, 2.0, 3.0], 2).unwrap(), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(quantize_linear(&[0.0, 0.6, 1.0], 1).unwrap(), vec![0.0, 1.0, 1.0]);
        assert_eq!(quantize_linear(&[-2.0, 2.0], 1).unwrap(), vec![-2.0, 2.0]);
        assert!(matches!(quantize_linear(&[3.0, 3.0], 2), Err(Error::Degenerate(_))));
    }

    #[test]
    fn codec_examples() {
        let qp = qp4(1.0);
        let word = |x: f64| encode_bits(&[x], &qp).unwrap()[0].to_string();
        assert_eq!(word(1.2), "11");
        assert_eq!(word(0.3), "10");
        assert_eq!(word(-9.0), "00");
        // boundaries belong to the lower interval
        assert_eq!(word(1.0), "10");
        assert_eq!(word(-1.0), "00");
        let dec = |s: &str| decode_bits(&[BitWord::parse(s).unwrap()], &qp).unwrap()[0];
        assert_eq!(dec("10"), 0.5);
        assert_eq!(dec("00"), -1.5);
        assert_eq!(decode_bits(&encode_bits(&[0.7], &qp).unwrap(), &qp).unwrap(), vec![0.5]);
        let three = BitWord::parse("101").unwrap();
        assert!(matches!(decode_bits(&[three], &qp), Err(Error::Codec(_))));
    }

    #[test]
    fn temperature_schedule() {
        assert_eq!(temperature_for_epoch(5).unwrap(), 1.0);
        assert_eq!(temperature_for_epoch(10).unwrap(), 1.0);
        assert_eq!(temperature_for_epoch(11).unwrap(), 2.0);
        assert_eq!(temperature_for_epoch(100).unwrap(), 10.0);
        assert_eq!(temperature_for_epoch(101).unwrap(), 101.0);
        assert_eq!(temperature_for_epoch(150).unwrap(), 150.0);
        assert!(temperature_for_epoch(0).is_err());
    }

    #[test]
    fn init_level_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let uniform: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
        let qp = init_levels(&uniform, 1).unwrap();
        assert!((qp.levels()[0] - 0.25).abs() < 0.01 && (qp.levels()[1] - 0.75).abs() < 0.01);

        let half: Vec<f64> = (0..5_001).map(|_| rng.random_range(-2.0..2.0)).collect();
        let symmetric: Vec<f64> = half.iter().copied().chain(half.iter().map(|v| -v)).collect();
        let qp = init_levels(&symmetric, 2).unwrap();
        let l = qp.levels();
        for i in 0..4 {
            assert!((l[i] + l[3 - i]).abs() < 1e-12, "{l:?}");
        }

        let two_point = [0.0, 1.0, 0.0, 1.0];
        assert_eq!(init_levels(&two_point, 1).unwrap().levels(), &[0.0, 1.0]);
        // more levels than distinct values: ties separated
        let qp = init_levels(&two_point, 2).unwrap();
        assert!(qp.levels().windows(2).all(|w| w[0] < w[1]));
        assert!(matches!(init_levels(&[2.0, 2.0], 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn descend_restores_order() {
        let mut qp = qp4(1.0);
        qp.descend(&[-5.0, 0.0, 0.0, 5.0], 1.0).unwrap();
        assert_eq!(qp.levels(), &[-3.5, -0.5, 0.5, 3.5]);
        qp.descend(&[0.0, 0.0, 1.0, 0.0], 1.0).unwrap();
        assert!(qp.validate().is_ok());
    }

    #[test]
    fn convergence_bound_tightens_with_temperature() {
        let d = 0.05;
        let xs: Vec<f64> = (0..4000)
            .map(|k| -3.0 + 6.0 * k as f64 / 3999.0)
            .filter(|x| [-1.5f64, -0.5, 0.5, 1.5].iter().all(|t| (x - t).abs() >= d))
            .collect();
        let mut prev = f64::INFINITY;
        for t in [1.0, 10.0, 100.0, 1000.0] {
            let qp = qp4(t);
            let gap = xs
                .iter()
                .map(|&x| (qp.soft_scalar(x) - qp.ideal_scalar(x)).abs())
                .fold(0.0, f64::max);
            assert!(gap <= 3.0 * sigmoid(-t * d) + 1e-15);
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn trained_levels_beat_uniform_on_peaked_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x: Vec<f64> = (0..4000)
            .map(|_| {
                let u: f64 = rng.random_range(-0.5..0.5);
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            })
            .collect();
        let qp = train_levels_mse(&x, 2, 40, 0.5).unwrap();
        let lin = mse(&x, &quantize_linear(&x, 2).unwrap());
        assert!(codec_mse(&x, &qp).unwrap() < lin);
    }

    proptest! {
        #[test]
        fn soft_is_monotone(a in -5.0f64..5.0, b in -5.0f64..5.0, t in 0.1f64..50.0) {
            let qp = qp4(t);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(qp.soft_scalar(lo) <= qp.soft_scalar(hi) + 1e-12);
            let v = qp.soft_scalar(a);
            prop_assert!(v > -1.5 - 1e-12 && v < 1.5 + 1e-12);
        }

        #[test]
        fn codec_is_idempotent_and_nearest(x in -10.0f64..10.0, raw in proptest::collection::vec(-4.0f64..4.0, 4)) {
            let mut levels = raw;
            levels.sort_by(f64::total_cmp);
            make_strictly_ascending(&mut levels);
            let qp = QuantizerParams::new(levels, 2, 1.0).unwrap();
            let w = encode_bits(&[x], &qp).unwrap();
            let y = decode_bits(&w, &qp).unwrap();
            prop_assert_eq!(encode_bits(&y, &qp).unwrap(), w.clone());
            prop_assert!(qp.levels().contains(&y[0]));
            let best = qp.levels().iter().map(|l| (x - l).abs()).fold(f64::INFINITY, f64::min);
            prop_assert!((x - y[0]).abs() <= best);
        }
    }
}
