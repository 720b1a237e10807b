//! Module ablation at a fixed split: loss (CE or SLL), training noise,
//! quantization and pruning switched on and off.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSpec;
use crate::diffnet::Tensor;
use crate::splitmodel::{SplitBranch, SplitModel, Transit};
use crate::trainer::{init_branch, stage1_joint, stage2_sparse, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationCase {
    pub id: u8,
    pub pruning: bool,
    pub quantization: bool,
    /// Semantic loss when set, plain cross-entropy otherwise.
    pub sll: bool,
    pub noise: bool,
}

pub const CASES: [AblationCase; 7] = [
    AblationCase { id: 1, pruning: false, quantization: false, sll: false, noise: false },
    AblationCase { id: 2, pruning: false, quantization: false, sll: false, noise: true },
    AblationCase { id: 3, pruning: false, quantization: false, sll: true, noise: true },
    AblationCase { id: 4, pruning: false, quantization: true, sll: false, noise: true },
    AblationCase { id: 5, pruning: true, quantization: true, sll: false, noise: true },
    AblationCase { id: 6, pruning: false, quantization: true, sll: true, noise: true },
    AblationCase { id: 7, pruning: true, quantization: true, sll: true, noise: true },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub split: usize,
    pub ber_test: f64,
    pub gamma: f64,
    pub seeds: Vec<u64>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self { split: 3, ber_test: 1e-2, gamma: 1e-3, seeds: vec![1, 2, 3, 4, 5] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub case: AblationCase,
    /// Test accuracy at `ber_test`, averaged over seeds.
    pub accuracy: f64,
    /// Surviving channels.
    pub z: usize,
}

fn case_config(cfg: &TrainConfig, case: &AblationCase, gamma: f64) -> TrainConfig {
    TrainConfig {
        lambda: if case.sll { cfg.lambda } else { 1.0 },
        ber_train: if case.noise { cfg.ber_train } else { 0.0 },
        gamma,
        ..cfg.clone()
    }
}

fn evaluate(branch: &SplitBranch, x: &Tensor, y: &[usize], ber: f64, seeds: &[u64]) -> Result<f64> {
    let mut total = 0.0;
    for &seed in seeds {
        let pred = branch.predict(x, &ChannelSpec::new(ber, seed)?, 0)?;
        total += pred.iter().zip(y).filter(|(p, t)| p == t).count() as f64 / y.len() as f64;
    }
    Ok(total / seeds.len() as f64)
}

/// Trains and evaluates the seven cases. Unquantized cases send real
/// features over AWGN at the SNR equivalent to the BER. The pruned cases
/// continue from their unpruned counterparts' joint-training result.
pub fn run_ablation(
    model: &SplitModel,
    train: (&Tensor, &[usize]),
    test: (&Tensor, &[usize]),
    cfg: &TrainConfig,
    acfg: &AblationConfig,
) -> Result<Vec<AblationRow>> {
    if acfg.seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    if !(0.0..0.5).contains(&acfg.ber_test) {
        return Err(Error::Config(format!("ber_test {} outside [0, 0.5)", acfg.ber_test)));
    }
    let (x, y) = train;
    let teacher_logits = model.teacher_forward(x)?;
    let mut rows = Vec::with_capacity(CASES.len());
    let mut joint: Vec<(u8, SplitBranch)> = Vec::new();
    for case in &CASES {
        let c = case_config(cfg, case, acfg.gamma);
        let transit = if case.quantization { Transit::Digital } else { Transit::Analog };
        let branch = if case.pruning {
            let base = joint
                .iter()
                .find(|(id, _)| *id == case.id - 1)
                .map(|(_, b)| b.clone())
                .ok_or_else(|| Error::Internal(format!("case {} has no unpruned counterpart", case.id)))?;
            let mut b = base;
            stage2_sparse(&mut b, x, y, &teacher_logits, &c)?;
            b
        } else {
            let mut b = init_branch(model, x, &c, acfg.split, transit)?;
            stage1_joint(&mut b, x, y, &teacher_logits, &c)?;
            joint.push((case.id, b.clone()));
            b
        };
        rows.push(AblationRow {
            case: *case,
            accuracy: evaluate(&branch, test.0, test.1, acfg.ber_test, &acfg.seeds)?,
            z: branch.surviving(),
        });
    }
    Ok(rows)
}

/// Writes `case,pruning,quantization,loss,noise,accuracy,z`.
pub fn write_ablation<W: Write>(rows: &[AblationRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case", "pruning", "quantization", "loss", "noise", "accuracy", "z"])?;
    for r in rows {
        let c = &r.case;
        w.write_record([
            c.id.to_string(),
            c.pruning.to_string(),
            c.quantization.to_string(),
            if c.sll { "sll" } else { "ce" }.to_string(),
            c.noise.to_string(),
            r.accuracy.to_string(),
            r.z.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splitmodel::Architecture;
    use crate::trainer::{train_ideal, PolicyTrainConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn case_table() {
        assert_eq!(CASES.iter().filter(|c| c.pruning).map(|c| c.id).collect::<Vec<_>>(), vec![5, 7]);
        assert!(!CASES[0].noise && !CASES[0].quantization && !CASES[0].sll);
        for c in CASES.iter().filter(|c| c.pruning) {
            let base = CASES[(c.id - 2) as usize];
            assert_eq!((base.quantization, base.sll, base.noise, base.pruning), (c.quantization, c.sll, c.noise, false));
        }
        let cfg = TrainConfig::default();
        let c1 = case_config(&cfg, &CASES[0], 1e-3);
        assert_eq!((c1.lambda, c1.ber_train), (1.0, 0.0));
        let c3 = case_config(&cfg, &CASES[2], 1e-3);
        assert_eq!((c3.lambda, c3.ber_train), (cfg.lambda, cfg.ber_train));
    }

    #[test]
    fn small_run_reports_every_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 240;
        let y: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let data: Vec<f64> = (0..n)
            .flat_map(|i| {
                let c = y[i];
                (0..6).map(|k| if k == c { 3.0 } else { 0.0 } + rng.random_range(-1.0..1.0)).collect::<Vec<f64>>()
            })
            .collect();
        let x = Tensor::matrix(n, 6, data).unwrap();
        let arch = Architecture { input_dim: 6, width: 8, blocks: 3, classes: 3 };
        let cfg = TrainConfig {
            teacher_epochs: 10,
            epochs: 3,
            base_lr: 0.05,
            decay_epochs: vec![],
            batch_size: 16,
            teacher_gate: 0.8,
            device_flops_budget: 4_000,
            calibration_rows: 100,
            policy: PolicyTrainConfig::default(),
            ..Default::default()
        };
        let (teacher, _) = train_ideal(&arch, &x, &y, &cfg).unwrap();
        let model = SplitModel::new(arch, teacher, 2, cfg.device_flops_budget, None).unwrap();
        let acfg = AblationConfig { split: 1, gamma: 5e-2, seeds: vec![1, 2], ..Default::default() };
        let rows = run_ablation(&model, (&x, &y), (&x, &y), &cfg, &acfg).unwrap();
        assert_eq!(rows.len(), 7);
        for r in &rows {
            assert!((0.0..=1.0).contains(&r.accuracy));
            if !r.case.pruning {
                assert_eq!(r.z, 8);
            }
        }
        let mut buf = Vec::new();
        write_ablation(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("case,pruning,quantization,loss,noise,accuracy,z\n1,false,false,ce,false,"));
        assert_eq!(text.lines().count(), 8);
    }
}
