use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Dense,
    Relu,
    /// `y = x + W2·relu(W1·x + b1) + b2`
    ResidualDenseBlock,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LayerSpec {
    pub fn dense(in_dim: usize, out_dim: usize) -> Self {
        Self { kind: LayerKind::Dense, in_dim, out_dim }
    }

    pub fn relu(dim: usize) -> Self {
        Self { kind: LayerKind::Relu, in_dim: dim, out_dim: dim }
    }

    pub fn residual(dim: usize) -> Self {
        Self { kind: LayerKind::ResidualDenseBlock, in_dim: dim, out_dim: dim }
    }

    pub fn softmax(dim: usize) -> Self {
        Self { kind: LayerKind::Softmax, in_dim: dim, out_dim: dim }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::Shape(format!("{self:?}: dimensions must be >= 1")));
        }
        if self.kind != LayerKind::Dense && self.in_dim != self.out_dim {
            return Err(Error::Shape(format!("{self:?}: in_dim must equal out_dim")));
        }
        Ok(())
    }

    /// FLOPs for one feature vector: a dense map costs `2·in·out`, relu
    /// costs `in`, the residual block costs its two dense maps plus one
    /// relu and the skip addition, softmax costs `3·in` (exp, sum, divide).
    pub fn flops(&self) -> u64 {
        let (i, o) = (self.in_dim as u64, self.out_dim as u64);
        match self.kind {
            LayerKind::Dense => 2 * i * o,
            LayerKind::Relu => i,
            LayerKind::ResidualDenseBlock => 2 * (2 * i * i) + i + i,
            LayerKind::Softmax => 3 * i,
        }
    }
}

/// Checks each spec and that consecutive layers chain.
pub fn validate_chain(specs: &[LayerSpec]) -> Result<()> {
    for s in specs {
        s.validate()?;
    }
    for (k, pair) in specs.windows(2).enumerate() {
        if pair[0].out_dim != pair[1].in_dim {
            return Err(Error::Shape(format!(
                "layer {k} outputs {} but layer {} expects {}",
                pair[0].out_dim,
                k + 1,
                pair[1].in_dim
            )));
        }
    }
    Ok(())
}

/// Total FLOPs of a layer stack for a single input vector.
pub fn flops_estimate(specs: &[LayerSpec]) -> u64 {
    specs.iter().map(LayerSpec::flops).sum()
}

/// Affine map with a row-major `(out_dim, in_dim)` weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weight: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim] }
    }

    fn random(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let std = 1.0 / (in_dim as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("std is positive and finite");
        let weight = (0..in_dim * out_dim).map(|_| normal.sample(rng)).collect();
        Self { in_dim, out_dim, weight, bias: vec![0.0; out_dim] }
    }

    fn scaled(mut self, k: f64) -> Self {
        self.weight.iter_mut().for_each(|w| *w *= k);
        self
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(self.bias.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerParams {
    Dense(Dense),
    Residual { inner: Dense, outer: Dense },
    Stateless,
}

impl LayerParams {
    fn zeros_for(spec: &LayerSpec) -> Self {
        match spec.kind {
            LayerKind::Dense => LayerParams::Dense(Dense::zeros(spec.in_dim, spec.out_dim)),
            LayerKind::ResidualDenseBlock => LayerParams::Residual {
                inner: Dense::zeros(spec.in_dim, spec.in_dim),
                outer: Dense::zeros(spec.in_dim, spec.in_dim),
            },
            LayerKind::Relu | LayerKind::Softmax => LayerParams::Stateless,
        }
    }

    pub fn values(&self) -> Box<dyn Iterator<Item = &f64> + '_> {
        match self {
            LayerParams::Dense(d) => Box::new(d.values()),
            LayerParams::Residual { inner, outer } => Box::new(inner.values().chain(outer.values())),
            LayerParams::Stateless => Box::new(std::iter::empty()),
        }
    }

    pub fn values_mut(&mut self) -> Box<dyn Iterator<Item = &mut f64> + '_> {
        match self {
            LayerParams::Dense(d) => Box::new(d.values_mut()),
            LayerParams::Residual { inner, outer } => {
                Box::new(inner.values_mut().chain(outer.values_mut()))
            }
            LayerParams::Stateless => Box::new(std::iter::empty()),
        }
    }
}

/// Parameters of a layer stack together with the specs they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub(crate) specs: Vec<LayerSpec>,
    pub(crate) layers: Vec<LayerParams>,
    pub(crate) seed: u64,
    /// Bumped on every update so tapes from older parameters are rejected.
    pub(crate) generation: u64,
}

impl NetParams {
    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    /// Mutable layer access. Bumps the generation, invalidating live tapes.
    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn in_dim(&self) -> usize {
        self.specs.first().map_or(0, |s| s.in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.specs.last().map_or(0, |s| s.out_dim)
    }

    pub fn num_values(&self) -> usize {
        self.values().count()
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(LayerParams::values)
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// Zero-valued gradient buffer with this network's structure.
    pub fn zero_gradients(&self) -> Gradients {
        Gradients { layers: self.specs.iter().map(LayerParams::zeros_for).collect() }
    }

    /// Multiplies every weight of layer `layer` by `factor`.
    pub fn scale_layer(&mut self, layer: usize, factor: f64) {
        for v in self.layers_mut()[layer].values_mut() {
            *v *= factor;
        }
    }
}

/// `∂loss/∂param` with the same layout as [`NetParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub(crate) layers: Vec<LayerParams>,
}

impl Gradients {
    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(LayerParams::values)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(LayerParams::values_mut)
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|&v| v == 0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values_mut() {
            *v *= factor;
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Shape("gradient layer counts differ".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            let mut bs = b.values();
            for av in a.values_mut() {
                *av += *bs.next().ok_or_else(|| Error::Shape("gradient sizes differ".into()))?;
            }
            if bs.next().is_some() {
                return Err(Error::Shape("gradient sizes differ".into()));
            }
        }
        Ok(())
    }

    pub fn l2_norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Draws weights from `N(0, 1/fan_in)` and zeroes biases. Deterministic in
/// `seed`.
pub fn init_params(specs: &[LayerSpec], seed: u64) -> Result<NetParams> {
    validate_chain(specs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = specs.iter().filter(|s| s.kind == LayerKind::ResidualDenseBlock).count().max(1);
    let layers = specs
        .iter()
        .map(|spec| match spec.kind {
            LayerKind::Dense => LayerParams::Dense(Dense::random(spec.in_dim, spec.out_dim, &mut rng)),
            LayerKind::ResidualDenseBlock => LayerParams::Residual {
                inner: Dense::random(spec.in_dim, spec.in_dim, &mut rng),
                outer: Dense::random(spec.in_dim, spec.in_dim, &mut rng).scaled(1.0 / (blocks as f64).sqrt()),
            },
            LayerKind::Relu | LayerKind::Softmax => LayerParams::Stateless,
        })
        .collect();
    Ok(NetParams { specs: specs.to_vec(), layers, seed, generation: 0 })
}

/// Builds parameters from explicit layer values; mainly for tests and
/// hand-constructed networks.
pub fn params_from_layers(specs: &[LayerSpec], layers: Vec<LayerParams>) -> Result<NetParams> {
    validate_chain(specs)?;
    if specs.len() != layers.len() {
        return Err(Error::Shape("one parameter entry per layer spec required".into()));
    }
    for (spec, layer) in specs.iter().zip(&layers) {
        let ok = match (spec.kind, layer) {
            (LayerKind::Dense, LayerParams::Dense(d)) => {
                d.in_dim == spec.in_dim
                    && d.out_dim == spec.out_dim
                    && d.weight.len() == d.in_dim * d.out_dim
                    && d.bias.len() == d.out_dim
            }
            (LayerKind::ResidualDenseBlock, LayerParams::Residual { inner, outer }) => [inner, outer]
                .iter()
                .all(|d| d.in_dim == spec.in_dim && d.out_dim == spec.in_dim && d.weight.len() == d.in_dim * d.in_dim && d.bias.len() == d.in_dim),
            (LayerKind::Relu | LayerKind::Softmax, LayerParams::Stateless) => true,
            _ => false,
        };
        if !ok {
            return Err(Error::Shape(format!("parameters do not match {spec:?}")));
        }
    }
    Ok(NetParams { specs: specs.to_vec(), layers, seed: 0, generation: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let spec = [LayerSpec::dense(4, 2)];
        let a = init_params(&spec, 7).unwrap();
        let b = init_params(&spec, 7).unwrap();
        let bits = |p: &NetParams| p.values().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&init_params(&spec, 8).unwrap()));
    }

    #[test]
    fn init_bias_is_zero() {
        let p = init_params(&[LayerSpec::dense(4, 2)], 7).unwrap();
        match &p.layers()[0] {
            LayerParams::Dense(d) => assert_eq!(d.bias, vec![0.0, 0.0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn init_variance_matches_fan_in() {
        let p = init_params(&[LayerSpec::dense(1000, 1000)], 1).unwrap();
        let LayerParams::Dense(d) = &p.layers()[0] else { unreachable!() };
        let n = d.weight.len() as f64;
        let mean = d.weight.iter().sum::<f64>() / n;
        let var = d.weight.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 1e-3).abs() < 0.2e-3, "variance {var}");
    }

    #[test]
    fn chain_mismatch_is_rejected() {
        let err = init_params(&[LayerSpec::dense(4, 3), LayerSpec::dense(2, 1)], 0);
        assert!(matches!(err, Err(Error::Shape(_))));
        assert!(init_params(&[LayerSpec { kind: LayerKind::Relu, in_dim: 3, out_dim: 2 }], 0).is_err());
        assert!(init_params(&[LayerSpec::dense(0, 2)], 0).is_err());
    }

    #[test]
    fn flops_examples() {
        assert_eq!(flops_estimate(&[LayerSpec::dense(4, 2)]), 16);
        assert_eq!(flops_estimate(&[]), 0);
        let stack = [LayerSpec::dense(4, 2), LayerSpec::relu(2), LayerSpec::dense(2, 3)];
        assert_eq!(flops_estimate(&stack), 16 + 2 + 12);
    }

    #[test]
    fn flops_prefix_monotone() {
        let mut stack = vec![LayerSpec::dense(8, 4), LayerSpec::relu(4)];
        stack.extend(std::iter::repeat(LayerSpec::residual(4)).take(5));
        stack.push(LayerSpec::dense(4, 3));
        stack.push(LayerSpec::softmax(3));
        let total = flops_estimate(&stack);
        let mut last = 0;
        for k in 0..=stack.len() {
            let f = flops_estimate(&stack[..k]);
            assert!(f >= last && f <= total);
            last = f;
        }
    }
}
