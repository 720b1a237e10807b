//! Split-point policy: a small residual network over the input, joined with
//! the channel BER, scoring every admissible split.

use serde::{Deserialize, Serialize};

use crate::channel::{bsc_transmit, ChannelSpec};
use crate::diffnet::{
    backward_into, forward, infer, init_params, Gradients, LayerSpec, NetParams, Tape, Tensor,
};
use crate::splitmodel::{argmax, SplitModel, Transit};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyArch {
    pub width: usize,
    pub blocks: usize,
    /// Feed the BER itself instead of `log10(ber)`.
    pub raw_ber: bool,
}

impl Default for PolicyArch {
    fn default() -> Self {
        Self { width: 16, blocks: 3, raw_ber: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub arch: PolicyArch,
    pub s_max: usize,
    trunk: NetParams,
    head: NetParams,
    /// Fingerprint of the split model the policy was trained against.
    pub model_fingerprint: String,
}

/// Initial scale of the head weights, so untrained scores are nearly
/// uniform.
const HEAD_INIT_SCALE: f64 = 0.01;

impl PolicyNet {
    pub fn new(input_dim: usize, s_max: usize, arch: PolicyArch, seed: u64) -> Result<Self> {
        if s_max == 0 {
            return Err(Error::InvalidParam("policy needs at least one split".into()));
        }
        let mut trunk_specs = vec![LayerSpec::dense(input_dim, arch.width), LayerSpec::relu(arch.width)];
        trunk_specs.extend((0..arch.blocks).map(|_| LayerSpec::residual(arch.width)));
        let trunk = init_params(&trunk_specs, seed)?;
        let mut head = init_params(
            &[LayerSpec::dense(arch.width + 1, s_max), LayerSpec::softmax(s_max)],
            seed.wrapping_add(1),
        )?;
        head.scale_layer(0, HEAD_INIT_SCALE);
        Ok(Self { arch, s_max, trunk, head, model_fingerprint: String::new() })
    }

    pub fn trunk(&self) -> &NetParams {
        &self.trunk
    }

    pub fn head(&self) -> &NetParams {
        &self.head
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.in_dim()
    }

    fn ber_feature(&self, ber: f64) -> Result<f64> {
        if !(ber > 0.0 && ber < 0.5) {
            return Err(Error::InvalidParam(format!("ber {ber} outside (0, 0.5)")));
        }
        Ok(if self.arch.raw_ber { ber } else { ber.log10() })
    }

    fn join(&self, trunk_out: &Tensor, bers: &[f64]) -> Result<Tensor> {
        if bers.len() != trunk_out.rows() {
            return Err(Error::Shape(format!("{} BER values for {} rows", bers.len(), trunk_out.rows())));
        }
        let mut data = Vec::with_capacity(trunk_out.len() + bers.len());
        for (r, &b) in bers.iter().enumerate() {
            data.extend_from_slice(trunk_out.row(r));
            data.push(self.ber_feature(b)?);
        }
        Tensor::matrix(bers.len(), self.arch.width + 1, data)
    }
}

/// Split probabilities `ĥ`, one row per input.
pub fn policy_forward(policy: &PolicyNet, x: &Tensor, bers: &[f64]) -> Result<Tensor> {
    let t = infer(&policy.trunk, x)?;
    infer(&policy.head, &policy.join(&t, bers)?)
}

pub struct PolicyPass {
    trunk: Tape,
    head: Tape,
}

pub fn policy_forward_train(policy: &PolicyNet, x: &Tensor, bers: &[f64]) -> Result<(Tensor, PolicyPass)> {
    let (t, trunk) = forward(&policy.trunk, x)?;
    let (h, head) = forward(&policy.head, &policy.join(&t, bers)?)?;
    Ok((h, PolicyPass { trunk, head }))
}

#[derive(Debug, Clone)]
pub struct PolicyGrads {
    pub trunk: Gradients,
    pub head: Gradients,
}

pub fn policy_backward(policy: &PolicyNet, pass: &PolicyPass, d_probs: &Tensor) -> Result<PolicyGrads> {
    let mut head = policy.head.zero_gradients();
    let d_joined = backward_into(&policy.head, &pass.head, d_probs, &mut head)?;
    let w = policy.arch.width;
    let mut d_trunk = Vec::with_capacity(d_joined.rows() * w);
    for r in 0..d_joined.rows() {
        d_trunk.extend_from_slice(&d_joined.row(r)[..w]);
    }
    let d_trunk = Tensor::matrix(d_joined.rows(), w, d_trunk)?;
    let mut trunk = policy.trunk.zero_gradients();
    backward_into(&policy.trunk, &pass.trunk, &d_trunk, &mut trunk)?;
    Ok(PolicyGrads { trunk, head })
}

pub fn policy_params_mut(policy: &mut PolicyNet) -> (&mut NetParams, &mut NetParams) {
    (&mut policy.trunk, &mut policy.head)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDecision {
    pub probs: Vec<f64>,
    pub one_hot: Vec<u8>,
    /// Chosen split, counted from 1.
    pub split: usize,
}

/// Argmax of `ĥ`, lowest split on ties.
pub fn decide(probs: &[f64]) -> Result<SplitDecision> {
    if probs.is_empty() {
        return Err(Error::InvalidParam("empty split distribution".into()));
    }
    let i = argmax(probs);
    let mut one_hot = vec![0; probs.len()];
    one_hot[i] = 1;
    Ok(SplitDecision { probs: probs.to_vec(), one_hot, split: i + 1 })
}

/// The score vector only covers admissible splits, so this cannot fail for
/// decisions produced by [`decide`]; a violation is an internal bug.
pub fn enforce_budget(decision: SplitDecision, s_max: usize) -> Result<SplitDecision> {
    if decision.split == 0 || decision.split > s_max || decision.probs.len() > s_max {
        return Err(Error::Internal(format!("split {} exceeds s_max {s_max}", decision.split)));
    }
    Ok(decision)
}

/// `Σ (h − ĥ)²`.
pub fn policy_loss(h: &[f64], h_hat: &[f64]) -> Result<f64> {
    if h.len() != h_hat.len() {
        return Err(Error::Shape(format!("{} targets vs {} scores", h.len(), h_hat.len())));
    }
    Ok(h.iter().zip(h_hat).map(|(a, b)| (a - b).powi(2)).sum())
}

pub fn policy_loss_grad(h: &[f64], h_hat: &[f64]) -> Vec<f64> {
    h.iter().zip(h_hat).map(|(a, b)| 2.0 * (b - a)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySample {
    /// Row of the input matrix.
    pub sample: usize,
    pub ber: f64,
    /// Correct-classification rate per split over the channel seeds.
    pub rates: Vec<f64>,
    /// Best split, counted from 1.
    pub label: usize,
}

impl PolicySample {
    pub fn target(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.rates.len()];
        t[self.label - 1] = 1.0;
        t
    }
}

/// Labels each `(row, ber)` cell with the split whose deployment most often
/// classifies the row correctly over `seeds` channel draws (seed
/// `base_seed + r`, frame index = row). Ties go to the smallest split.
pub fn build_policy_dataset(
    model: &SplitModel,
    x: &Tensor,
    labels: &[usize],
    cells: &[(usize, f64)],
    seeds: u32,
    base_seed: u64,
) -> Result<Vec<PolicySample>> {
    if cells.is_empty() || x.rows() == 0 {
        return Err(Error::InvalidParam("policy dataset needs samples and BER values".into()));
    }
    if labels.len() != x.rows() {
        return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), x.rows())));
    }
    if seeds == 0 {
        return Err(Error::InvalidParam("at least one channel seed required".into()));
    }
    let mut hits = vec![vec![0u32; model.s_max]; cells.len()];
    for s in 1..=model.s_max {
        let branch = model.branch(s)?;
        if branch.trb.transit != Transit::Digital {
            return Err(Error::InvalidParam(format!("split {s} uses analog transit")));
        }
        branch.check_budget(model.bit_budget)?;
        let (_, scaled) = branch.encode_features(x)?;
        let clean_ch = ChannelSpec::new(0.0, 0)?;
        let mut sent = Vec::with_capacity(x.rows());
        let mut clean_rows = Vec::with_capacity(scaled.len());
        for r in 0..x.rows() {
            let (frame, _) = branch.transmit_row(scaled.row(r), &clean_ch, r as u64)?;
            clean_rows.extend(branch.reconstruct(&frame)?);
            sent.push(frame);
        }
        let clean_logits = branch.decode(&Tensor::matrix(x.rows(), model.arch.width, clean_rows)?)?;
        let clean_ok: Vec<bool> = (0..x.rows()).map(|r| argmax(clean_logits.row(r)) == labels[r]).collect();

        // corrupted frames are decoded in one batch
        let mut corrupted_rows = Vec::new();
        let mut corrupted_cells = Vec::new();
        for (c, &(row, ber)) in cells.iter().enumerate() {
            if row >= x.rows() {
                return Err(Error::InvalidParam(format!("sample {row} outside {} rows", x.rows())));
            }
            for r in 0..seeds {
                let ch = ChannelSpec::new(ber, base_seed.wrapping_add(r as u64))?;
                let received = bsc_transmit(&sent[row], &ch, row as u64);
                if received == sent[row] {
                    hits[c][s - 1] += clean_ok[row] as u32;
                } else {
                    corrupted_rows.extend(branch.reconstruct(&received)?);
                    corrupted_cells.push(c);
                }
            }
        }
        if !corrupted_cells.is_empty() {
            let y = Tensor::matrix(corrupted_cells.len(), model.arch.width, corrupted_rows)?;
            let logits = branch.decode(&y)?;
            for (i, &c) in corrupted_cells.iter().enumerate() {
                if argmax(logits.row(i)) == labels[cells[c].0] {
                    hits[c][s - 1] += 1;
                }
            }
        }
    }
    Ok(cells
        .iter()
        .zip(hits)
        .map(|(&(sample, ber), h)| {
            let rates: Vec<f64> = h.iter().map(|&k| k as f64 / seeds as f64).collect();
            let best = h.iter().copied().max().unwrap_or(0);
            let label = h.iter().position(|&k| k == best).unwrap_or(0) + 1;
            PolicySample { sample, ber, rates, label }
        })
        .collect())
}

/// Writes the dataset as CSV: `sample,ber,rate_s1..rate_sN,label`.
pub fn write_policy_dataset<W: std::io::Write>(samples: &[PolicySample], s_max: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["sample".to_string(), "ber".to_string()];
    header.extend((1..=s_max).map(|s| format!("rate_s{s}")));
    header.push("label".into());
    w.write_record(&header)?;
    for p in samples {
        let mut rec = vec![p.sample.to_string(), p.ber.to_string()];
        rec.extend(p.rates.iter().map(|r| r.to_string()));
        rec.push(p.label.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splitmodel::{Architecture, SplitBranch, Transit};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn decide_examples() {
        assert_eq!(decide(&[0.1, 0.6, 0.2, 0.1]).unwrap().split, 2);
        let d = decide(&[0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(d.split, 3);
        assert_eq!(d.one_hot, vec![0, 0, 1, 0]);
        assert_eq!(decide(&[0.5, 0.5]).unwrap().split, 1);
    }

    #[test]
    fn loss_examples() {
        assert_eq!(policy_loss(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((policy_loss(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        let h = [0.0, 1.0, 0.0];
        let hh = [0.2, 0.5, 0.3];
        let g = policy_loss_grad(&h, &hh);
        for k in 0..3 {
            let mut p = hh;
            p[k] += 1e-6;
            let mut m = hh;
            m[k] -= 1e-6;
            let num = (policy_loss(&h, &p).unwrap() - policy_loss(&h, &m).unwrap()) / 2e-6;
            assert!((num - g[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn forward_sums_to_one_and_starts_uniform() {
        let p = PolicyNet::new(8, 4, PolicyArch::default(), 3).unwrap();
        let x = random(200, 8, 1);
        let bers: Vec<f64> = (0..200).map(|i| 10f64.powf(-1.0 - 4.0 * i as f64 / 200.0)).collect();
        let h = policy_forward(&p, &x, &bers).unwrap();
        let mut worst: f64 = 0.0;
        for r in 0..200 {
            assert!((h.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            worst = h.row(r).iter().map(|v| (v - 0.25).abs()).fold(worst, f64::max);
        }
        assert!(worst < 0.05, "max deviation from uniform {worst}");
        assert!(policy_forward(&p, &x, &vec![0.5; 200]).is_err());
        assert!(policy_forward(&p, &x, &vec![0.0; 200]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut p = PolicyNet::new(5, 3, PolicyArch { width: 4, blocks: 2, raw_ber: false }, 7).unwrap();
        p.head.scale_layer(0, 50.0);
        // random biases keep pre-activations off the relu kink
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for layer in p.trunk.layers_mut() {
            for v in layer.values_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let x = random(4, 5, 2);
        let bers = [1e-2, 1e-4, 0.2, 3e-3];
        let targets = [0usize, 2, 1, 1];
        let loss = |p: &PolicyNet| {
            let h = policy_forward(p, &x, &bers).unwrap();
            (0..4)
                .map(|r| {
                    let mut t = vec![0.0; 3];
                    t[targets[r]] = 1.0;
                    policy_loss(&t, h.row(r)).unwrap()
                })
                .sum::<f64>()
        };
        let (h, pass) = policy_forward_train(&p, &x, &bers).unwrap();
        let mut d = Vec::new();
        for r in 0..4 {
            let mut t = vec![0.0; 3];
            t[targets[r]] = 1.0;
            d.extend(policy_loss_grad(&t, h.row(r)));
        }
        let g = policy_backward(&p, &pass, &Tensor::matrix(4, 3, d).unwrap()).unwrap();
        let check = |analytic: Vec<f64>, which: usize| {
            for (i, &a) in analytic.iter().enumerate() {
                let eval = |delta: f64| {
                    let mut c = p.clone();
                    let net = if which == 0 { &mut c.trunk } else { &mut c.head };
                    *net.layers_mut().iter_mut().flat_map(|l| l.values_mut()).nth(i).unwrap() += delta;
                    loss(&c)
                };
                let num = (eval(1e-6) - eval(-1e-6)) / 2e-6;
                let err = (num - a).abs() / num.abs().max(a.abs()).max(1e-6);
                assert!(err < 1e-4, "net {which} param {i}: {a} vs {num}");
            }
        };
        check(g.trunk.values().copied().collect(), 0);
        check(g.head.values().copied().collect(), 1);
    }

    fn toy_model(s_max_budget: u64) -> (SplitModel, Tensor, Vec<usize>) {
        let arch = Architecture { input_dim: 6, width: 4, blocks: 3, classes: 3 };
        let teacher = init_params(&arch.layer_specs(), 11).unwrap();
        let mut m = SplitModel::new(arch, teacher, 2, s_max_budget, None).unwrap();
        let x = random(30, 6, 4);
        for s in 1..=m.s_max {
            let b = SplitBranch::from_teacher(&m.teacher, &arch, s, 2, Transit::Digital, 0.01, &x).unwrap();
            m.set_branch(b).unwrap();
        }
        let labels = (0..30).map(|i| i % 3).collect();
        (m, x, labels)
    }

    #[test]
    fn dataset_matches_brute_force() {
        let (m, x, labels) = toy_model(10_000);
        assert_eq!(m.s_max, 3);
        let cells: Vec<(usize, f64)> = (0..30).map(|i| (i, [0.3, 0.05, 1e-3][i % 3])).collect();
        let data = build_policy_dataset(&m, &x, &labels, &cells, 32, 100).unwrap();
        for (cell, p) in cells.iter().zip(&data) {
            let row = Tensor::matrix(1, 6, x.row(cell.0).to_vec()).unwrap();
            let mut rates = Vec::new();
            for s in 1..=3 {
                let hits = (0..32u64)
                    .filter(|r| {
                        let ch = ChannelSpec::new(cell.1, 100 + r).unwrap();
                        m.branch(s).unwrap().predict(&row, &ch, cell.0 as u64).unwrap()[0] == labels[cell.0]
                    })
                    .count();
                rates.push(hits as f64 / 32.0);
            }
            assert_eq!(p.rates, rates);
            let best = rates.iter().cloned().fold(f64::MIN, f64::max);
            assert_eq!(p.label, rates.iter().position(|&v| v == best).unwrap() + 1);
        }
    }

    #[test]
    fn single_split_labels_are_one() {
        let arch = Architecture { input_dim: 6, width: 4, blocks: 3, classes: 3 };
        let (m, x, labels) = toy_model(arch.encoder_flops(1, 2));
        assert_eq!(m.s_max, 1);
        let cells: Vec<_> = (0..10).map(|i| (i, 0.1)).collect();
        assert!(build_policy_dataset(&m, &x, &labels, &cells, 4, 0).unwrap().iter().all(|p| p.label == 1));
        assert!(build_policy_dataset(&m, &x, &labels, &[], 4, 0).is_err());
    }

    #[test]
    fn dataset_csv_layout() {
        let s = vec![PolicySample { sample: 3, ber: 0.01, rates: vec![1.0, 0.5], label: 1 }];
        let mut buf = Vec::new();
        write_policy_dataset(&s, 2, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "sample,ber,rate_s1,rate_s2,label\n3,0.01,1,0.5,1\n");
    }

    proptest! {
        #[test]
        fn argmax_invariant_under_monotone_maps(v in proptest::collection::vec(0.0f64..1.0, 1..10)) {
            let d = decide(&v).unwrap();
            let mapped: Vec<f64> = v.iter().map(|x| (3.0 * x).exp() - 7.0).collect();
            prop_assert_eq!(decide(&mapped).unwrap().split, d.split);
        }

        #[test]
        fn decisions_respect_budget(v in proptest::collection::vec(0.0f64..1.0, 1..10)) {
            let s_max = v.len();
            let d = enforce_budget(decide(&v).unwrap(), s_max).unwrap();
            prop_assert!(d.split >= 1 && d.split <= s_max);
            prop_assert_eq!(d.one_hot.iter().map(|&b| b as usize).sum::<usize>(), 1);
        }
    }

    #[test]
    fn budget_violation_is_internal_error() {
        let d = SplitDecision { probs: vec![0.5, 0.5], one_hot: vec![0, 1], split: 2 };
        assert!(matches!(enforce_budget(d, 1), Err(Error::Internal(_))));
        let one = enforce_budget(decide(&[0.9]).unwrap(), 1).unwrap();
        assert_eq!(one.split, 1);
    }
}
