use std::ops::Range;

use super::layer::{Dense, Gradients, LayerKind, LayerParams, NetParams};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Activations recorded by [`forward`] so [`backward`] can replay the pass.
#[derive(Debug, Clone)]
pub struct Tape {
    range: Range<usize>,
    generation: u64,
    seed: u64,
    records: Vec<Record>,
}

impl Tape {
    pub fn layer_range(&self) -> Range<usize> {
        self.range.clone()
    }
}

#[derive(Debug, Clone)]
enum Record {
    Dense { input: Tensor },
    Relu { input: Tensor },
    Residual { input: Tensor, hidden_pre: Vec<f64> },
    Softmax { output: Tensor },
}

fn affine(x: &[f64], rows: usize, d: &Dense) -> Vec<f64> {
    let mut y = Vec::with_capacity(rows * d.out_dim);
    for r in 0..rows {
        let xr = &x[r * d.in_dim..(r + 1) * d.in_dim];
        for o in 0..d.out_dim {
            let w = &d.weight[o * d.in_dim..(o + 1) * d.in_dim];
            let dot: f64 = w.iter().zip(xr).map(|(a, b)| a * b).sum();
            y.push(dot + d.bias[o]);
        }
    }
    y
}

/// Accumulates `dW`, `db` into `grad` and returns `dX`.
fn affine_backward(x: &[f64], rows: usize, d: &Dense, dy: &[f64], grad: &mut Dense) -> Vec<f64> {
    let mut dx = vec![0.0; rows * d.in_dim];
    for r in 0..rows {
        let xr = &x[r * d.in_dim..(r + 1) * d.in_dim];
        let dyr = &dy[r * d.out_dim..(r + 1) * d.out_dim];
        let dxr = &mut dx[r * d.in_dim..(r + 1) * d.in_dim];
        for (o, &g) in dyr.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let w = &d.weight[o * d.in_dim..(o + 1) * d.in_dim];
            let gw = &mut grad.weight[o * d.in_dim..(o + 1) * d.in_dim];
            for i in 0..d.in_dim {
                gw[i] += g * xr[i];
                dxr[i] += g * w[i];
            }
        }
    }
    dx
}

fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn softmax_rows(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(cols) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut sum = 0.0;
        for &v in row {
            let e = (v - m).exp();
            sum += e;
            out.push(e);
        }
        for e in &mut out[start..] {
            *e /= sum;
        }
    }
    out
}

fn check_input(params: &NetParams, range: &Range<usize>, x: &Tensor) -> Result<()> {
    if range.start > range.end || range.end > params.specs.len() {
        return Err(Error::Shape(format!(
            "layer range {range:?} outside a {}-layer network",
            params.specs.len()
        )));
    }
    if let Some(first) = params.specs.get(range.start) {
        if range.start < range.end && x.cols() != first.in_dim {
            return Err(Error::Shape(format!(
                "input width {} but layer {} expects {}",
                x.cols(),
                range.start,
                first.in_dim
            )));
        }
    }
    Ok(())
}

fn run(params: &NetParams, range: Range<usize>, x: &Tensor, mut tape: Option<&mut Vec<Record>>) -> Result<Tensor> {
    check_input(params, &range, x)?;
    let mut cur = x.clone();
    for idx in range {
        let spec = params.specs[idx];
        let rows = cur.rows();
        let next = match (&params.layers[idx], spec.kind) {
            (LayerParams::Dense(d), LayerKind::Dense) => cur.with_cols(d.out_dim, affine(cur.data(), rows, d)),
            (LayerParams::Stateless, LayerKind::Relu) => {
                let mut v = cur.data().to_vec();
                relu_in_place(&mut v);
                cur.with_cols(spec.out_dim, v)
            }
            (LayerParams::Residual { inner, outer }, LayerKind::ResidualDenseBlock) => {
                let hidden_pre = affine(cur.data(), rows, inner);
                let mut hidden = hidden_pre.clone();
                relu_in_place(&mut hidden);
                let mut y = affine(&hidden, rows, outer);
                for (yi, xi) in y.iter_mut().zip(cur.data()) {
                    *yi += xi;
                }
                let out = cur.with_cols(spec.out_dim, y);
                if let Some(t) = tape.as_deref_mut() {
                    t.push(Record::Residual { input: cur, hidden_pre });
                }
                cur = out;
                continue;
            }
            (LayerParams::Stateless, LayerKind::Softmax) => {
                let out = cur.with_cols(spec.out_dim, softmax_rows(cur.data(), spec.in_dim));
                if let Some(t) = tape.as_deref_mut() {
                    t.push(Record::Softmax { output: out.clone() });
                }
                cur = out;
                continue;
            }
            _ => return Err(Error::Shape(format!("layer {idx} parameters do not match its spec"))),
        };
        if let Some(t) = tape.as_deref_mut() {
            t.push(match spec.kind {
                LayerKind::Dense => Record::Dense { input: cur },
                _ => Record::Relu { input: cur },
            });
        }
        cur = next;
    }
    Ok(cur)
}

/// Runs the whole network, recording a tape for [`backward`].
pub fn forward(params: &NetParams, x: &Tensor) -> Result<(Tensor, Tape)> {
    forward_range(params, 0..params.specs.len(), x)
}

/// Runs layers `range` only. Split models use this to evaluate the encoder
/// prefix and decoder suffix of one parameter set.
pub fn forward_range(params: &NetParams, range: Range<usize>, x: &Tensor) -> Result<(Tensor, Tape)> {
    let mut records = Vec::with_capacity(range.len());
    let y = run(params, range.clone(), x, Some(&mut records))?;
    Ok((
        y,
        Tape { range, generation: params.generation, seed: params.seed, records },
    ))
}

/// Forward pass without recording activations.
pub fn infer_range(params: &NetParams, range: Range<usize>, x: &Tensor) -> Result<Tensor> {
    run(params, range, x, None)
}

pub fn infer(params: &NetParams, x: &Tensor) -> Result<Tensor> {
    infer_range(params, 0..params.specs.len(), x)
}

/// Back-propagates `d_out` through the taped layers. Returns gradients for
/// every layer of `params` (zero outside the tape's range) and `∂loss/∂x`.
pub fn backward(params: &NetParams, tape: &Tape, d_out: &Tensor) -> Result<(Gradients, Tensor)> {
    let mut grads = params.zero_gradients();
    let dx = backward_into(params, tape, d_out, &mut grads)?;
    Ok((grads, dx))
}

/// Like [`backward`] but accumulates into an existing gradient buffer.
pub fn backward_into(params: &NetParams, tape: &Tape, d_out: &Tensor, grads: &mut Gradients) -> Result<Tensor> {
    if tape.generation != params.generation
        || tape.seed != params.seed
        || tape.range.end > params.specs.len()
        || tape.records.len() != tape.range.len()
    {
        return Err(Error::StaleTape);
    }
    if grads.layers.len() != params.layers.len() {
        return Err(Error::Shape("gradient buffer does not match the network".into()));
    }
    if let Some(last) = tape.range.clone().last() {
        if d_out.cols() != params.specs[last].out_dim {
            return Err(Error::Shape(format!(
                "upstream gradient width {} but layer {last} outputs {}",
                d_out.cols(),
                params.specs[last].out_dim
            )));
        }
    }
    let mut g = d_out.clone();
    for (idx, record) in tape.range.clone().zip(&tape.records).rev() {
        let spec = params.specs[idx];
        let rows = g.rows();
        g = match (record, &params.layers[idx], &mut grads.layers[idx]) {
            (Record::Dense { input }, LayerParams::Dense(d), LayerParams::Dense(gd)) => {
                if input.rows() != rows {
                    return Err(Error::StaleTape);
                }
                input.with_cols(spec.in_dim, affine_backward(input.data(), rows, d, g.data(), gd))
            }
            (Record::Relu { input }, LayerParams::Stateless, LayerParams::Stateless) => {
                let v = g.data().iter().zip(input.data()).map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 }).collect();
                input.with_cols(spec.in_dim, v)
            }
            (
                Record::Residual { input, hidden_pre },
                LayerParams::Residual { inner, outer },
                LayerParams::Residual { inner: g_inner, outer: g_outer },
            ) => {
                let mut hidden = hidden_pre.clone();
                relu_in_place(&mut hidden);
                let mut d_hidden = affine_backward(&hidden, rows, outer, g.data(), g_outer);
                for (dh, &pre) in d_hidden.iter_mut().zip(hidden_pre) {
                    if pre <= 0.0 {
                        *dh = 0.0;
                    }
                }
                let mut dx = affine_backward(input.data(), rows, inner, &d_hidden, g_inner);
                for (d, skip) in dx.iter_mut().zip(g.data()) {
                    *d += skip;
                }
                input.with_cols(spec.in_dim, dx)
            }
            (Record::Softmax { output }, LayerParams::Stateless, LayerParams::Stateless) => {
                let cols = spec.in_dim;
                let mut dx = Vec::with_capacity(output.len());
                for (p, gy) in output.data().chunks(cols).zip(g.data().chunks(cols)) {
                    let dot: f64 = p.iter().zip(gy).map(|(a, b)| a * b).sum();
                    dx.extend(p.iter().zip(gy).map(|(pi, gi)| pi * (gi - dot)));
                }
                output.with_cols(cols, dx)
            }
            _ => return Err(Error::StaleTape),
        };
    }
    Ok(g)
}

/// Returns `params − lr·grads`.
pub fn sgd_step(params: &NetParams, grads: &Gradients, lr: f64) -> Result<NetParams> {
    let mut next = params.clone();
    apply_sgd(&mut next, grads, lr)?;
    Ok(next)
}

/// In-place form of [`sgd_step`].
pub fn apply_sgd(params: &mut NetParams, grads: &Gradients, lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::InvalidParam(format!("learning rate {lr} must be finite and >= 0")));
    }
    if !grads.all_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    if grads.layers.len() != params.layers.len() {
        return Err(Error::Shape("gradients do not match parameters".into()));
    }
    for (p, g) in params.layers_mut().iter_mut().zip(&grads.layers) {
        for (pv, gv) in p.values_mut().zip(g.values()) {
            *pv -= lr * gv;
        }
    }
    Ok(())
}

/// Heavy-ball momentum: `v ← μ·v + g`, `p ← p − lr·v`.
#[derive(Debug, Clone)]
pub struct Momentum {
    mu: f64,
    velocity: Gradients,
}

impl Momentum {
    pub fn new(params: &NetParams, mu: f64) -> Self {
        Self { mu, velocity: params.zero_gradients() }
    }

    pub fn step(&mut self, params: &mut NetParams, grads: &Gradients, lr: f64) -> Result<()> {
        if self.mu == 0.0 {
            return apply_sgd(params, grads, lr);
        }
        if !grads.all_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        for (v, g) in self.velocity.values_mut().zip(grads.values()) {
            *v = self.mu * *v + g;
        }
        apply_sgd(params, &self.velocity, lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::layer::{init_params, params_from_layers, LayerSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_dense(n: usize) -> NetParams {
        let mut weight = vec![0.0; n * n];
        for i in 0..n {
            weight[i * n + i] = 1.0;
        }
        params_from_layers(
            &[LayerSpec::dense(n, n)],
            vec![LayerParams::Dense(Dense { in_dim: n, out_dim: n, weight, bias: vec![0.0; n] })],
        )
        .unwrap()
    }

    #[test]
    fn identity_dense_passes_through() {
        let p = identity_dense(2);
        let (y, _) = forward(&p, &Tensor::vector(vec![1.0, 2.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn relu_clips_negatives() {
        let p = init_params(&[LayerSpec::relu(2)], 0).unwrap();
        let (y, _) = forward(&p, &Tensor::vector(vec![-1.0, 3.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[0.0, 3.0]);
    }

    #[test]
    fn dense_matches_hand_matrix_product() {
        let p = init_params(&[LayerSpec::dense(3, 3)], 11).unwrap();
        let LayerParams::Dense(d) = &p.layers()[0] else { unreachable!() };
        let x = [0.3, -1.2, 2.0];
        let (y, _) = forward(&p, &Tensor::vector(x.to_vec()).unwrap()).unwrap();
        for o in 0..3 {
            let mut acc = d.bias[o];
            for i in 0..3 {
                acc += d.weight[o * 3 + i] * x[i];
            }
            assert!((y.data()[o] - acc).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = init_params(&[LayerSpec::dense(3, 2)], 0).unwrap();
        assert!(matches!(forward(&p, &Tensor::vector(vec![1.0; 4]).unwrap()), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = init_params(&[LayerSpec::dense(3, 4), LayerSpec::relu(4), LayerSpec::residual(4)], 3).unwrap();
        let x = Tensor::matrix(2, 3, vec![0.1, 0.2, -0.3, 1.0, -1.0, 0.5]).unwrap();
        let (y, tape) = forward(&p, &x).unwrap();
        let (g, dx) = backward(&p, &tape, &Tensor::zeros(y.shape().to_vec())).unwrap();
        assert!(g.is_zero());
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut p = init_params(&[LayerSpec::dense(2, 1)], 3).unwrap();
        let x = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let (y, tape) = forward(&p, &x).unwrap();
        p.scale_layer(0, 0.5);
        assert!(matches!(backward(&p, &tape, &y), Err(Error::StaleTape)));
        let other = init_params(&[LayerSpec::dense(2, 1)], 4).unwrap();
        assert!(matches!(backward(&other, &tape, &y), Err(Error::StaleTape)));
    }

    /// Central finite differences on `loss = Σ c ⊙ f(x)` for a random
    /// weighting `c`.
    fn fd_check(specs: &[LayerSpec], x: Tensor, seed: u64, tol: f64) {
        let mut p = init_params(specs, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        // zero biases put relu inputs exactly on the kink for all-zero rows
        for layer in p.layers_mut() {
            let bias: Vec<&mut Vec<f64>> = match layer {
                LayerParams::Dense(d) => vec![&mut d.bias],
                LayerParams::Residual { inner, outer } => vec![&mut inner.bias, &mut outer.bias],
                LayerParams::Stateless => vec![],
            };
            for b in bias {
                b.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
            }
        }
        let (y, tape) = forward(&p, &x).unwrap();
        let c: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |q: &NetParams, xin: &Tensor| -> f64 {
            let y = infer(q, xin).unwrap();
            y.data().iter().zip(&c).map(|(a, b)| a * b).sum()
        };
        let (g, dx) = backward(&p, &tape, &Tensor::new(y.shape().to_vec(), c.clone()).unwrap()).unwrap();
        let h = 1e-5;
        let rel = |a: f64, n: f64| (a - n).abs() / (a.abs().max(n.abs()).max(1e-6));
        let analytic: Vec<f64> = g.values().copied().collect();
        for (k, &a) in analytic.iter().enumerate() {
            let mut plus = p.clone();
            *plus.layers_mut().iter_mut().flat_map(|l| l.values_mut()).nth(k).unwrap() += h;
            let mut minus = p.clone();
            *minus.layers_mut().iter_mut().flat_map(|l| l.values_mut()).nth(k).unwrap() -= h;
            let num = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * h);
            assert!(rel(a, num) < tol, "param {k}: analytic {a} numeric {num}");
        }
        for k in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[k] += h;
            let mut xm = x.clone();
            xm.data_mut()[k] -= h;
            let num = (loss(&p, &xp) - loss(&p, &xm)) / (2.0 * h);
            assert!(rel(dx.data()[k], num) < tol, "input {k}: analytic {} numeric {num}", dx.data()[k]);
        }
    }

    #[test]
    fn dense_gradient_matches_finite_differences() {
        fd_check(&[LayerSpec::dense(2, 1)], Tensor::vector(vec![0.7, -0.4]).unwrap(), 5, 1e-5);
    }

    #[test]
    fn every_layer_kind_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for case in 0..100u64 {
            let specs = [
                LayerSpec::dense(3, 4),
                LayerSpec::relu(4),
                LayerSpec::residual(4),
                LayerSpec::dense(4, 3),
                LayerSpec::softmax(3),
            ];
            // inputs away from relu kinks are overwhelmingly likely with
            // continuous random draws
            let x = Tensor::matrix(2, 3, (0..6).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
            fd_check(&specs, x, case, 1e-4);
        }
    }

    #[test]
    fn residual_skip_carries_gradient_through_dead_units() {
        let specs = [LayerSpec::residual(2)];
        let mut p = init_params(&specs, 1).unwrap();
        // force every hidden unit dead: large negative inner bias
        if let LayerParams::Residual { inner, .. } = &mut p.layers_mut()[0] {
            inner.bias = vec![-100.0, -100.0];
        }
        let x = Tensor::vector(vec![0.5, -0.25]).unwrap();
        let (_, tape) = forward(&p, &x).unwrap();
        let (_, dx) = backward(&p, &tape, &Tensor::vector(vec![1.0, -2.0]).unwrap()).unwrap();
        assert_eq!(dx.data(), &[1.0, -2.0]);
        // and the finite-difference oracle agrees
        let loss = |xin: &Tensor| {
            let y = infer(&p, xin).unwrap();
            y.data()[0] - 2.0 * y.data()[1]
        };
        let h = 1e-5;
        for k in 0..2 {
            let mut xp = x.clone();
            xp.data_mut()[k] += h;
            let mut xm = x.clone();
            xm.data_mut()[k] -= h;
            let num = (loss(&xp) - loss(&xm)) / (2.0 * h);
            assert!((num - dx.data()[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn sgd_step_definition() {
        let specs = [LayerSpec::dense(1, 1)];
        let p = params_from_layers(
            &specs,
            vec![LayerParams::Dense(Dense { in_dim: 1, out_dim: 1, weight: vec![1.0], bias: vec![0.0] })],
        )
        .unwrap();
        let mut g = p.zero_gradients();
        if let LayerParams::Dense(d) = &mut g.layers_mut()[0] {
            d.weight[0] = 0.5;
        }
        let next = sgd_step(&p, &g, 0.1).unwrap();
        let LayerParams::Dense(d) = &next.layers()[0] else { unreachable!() };
        assert!((d.weight[0] - 0.95).abs() < 1e-15);
        let same = sgd_step(&p, &g, 0.0).unwrap();
        assert_eq!(same.layers(), p.layers());
        assert!(sgd_step(&p, &g, -1.0).is_err());
        if let LayerParams::Dense(d) = &mut g.layers_mut()[0] {
            d.bias[0] = f64::INFINITY;
        }
        assert!(matches!(sgd_step(&p, &g, 0.1), Err(Error::NonFinite(_))));
    }

    #[test]
    fn sgd_step_reduces_quadratic_loss() {
        let specs = [LayerSpec::dense(3, 2)];
        let p = init_params(&specs, 21).unwrap();
        let x = Tensor::vector(vec![1.0, -0.5, 0.25]).unwrap();
        let target = [0.3, -0.7];
        let loss = |q: &NetParams| {
            let y = infer(q, &x).unwrap();
            y.data().iter().zip(target).map(|(a, b)| 0.5 * (a - b).powi(2)).sum::<f64>()
        };
        let (y, tape) = forward(&p, &x).unwrap();
        let dy = Tensor::vector(y.data().iter().zip(target).map(|(a, b)| a - b).collect()).unwrap();
        let (g, _) = backward(&p, &tape, &dy).unwrap();
        let next = sgd_step(&p, &g, 0.1).unwrap();
        assert!(loss(&next) < loss(&p));
    }

    #[test]
    fn forward_is_deterministic() {
        let specs = [LayerSpec::dense(4, 4), LayerSpec::residual(4)];
        let p = init_params(&specs, 2).unwrap();
        let x = Tensor::vector(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let a = infer(&p, &x).unwrap();
        let b = infer(&p, &x).unwrap();
        assert_eq!(a, b);
    }
}
