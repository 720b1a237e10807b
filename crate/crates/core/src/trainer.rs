//! Training stages: the noiseless teacher, joint split training, sparse
//! retraining with mask freezing, and the split policy.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{splitmix64, ChannelSpec};
use crate::diffnet::{infer, init_params, Momentum, NetParams, Tensor};
use crate::policy::{
    build_policy_dataset, policy_backward, policy_forward, policy_forward_train, policy_loss, policy_loss_grad,
    policy_params_mut, PolicyArch, PolicyNet, PolicySample,
};
use crate::pruning::{l1_loss, l1_prox, mask_from, ChannelMask, DEFAULT_THRESHOLD};
use crate::quantizer::temperature_for_epoch;
use crate::semloss::{sll_batch, LossWeights};
use crate::splitmodel::{argmax, calibration_rows, Architecture, SplitBranch, SplitModel, Transit};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyTrainConfig {
    pub epochs: u32,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Channel draws per labelled cell.
    pub seeds: u32,
    /// BER draws per training sample.
    pub draws: u32,
    /// Cap on labelled rows; 0 uses all.
    pub max_samples: usize,
    /// Fraction of the training rows kept out of split training and used
    /// only for policy labels.
    pub holdout: f64,
    pub ber_min: f64,
    pub ber_max: f64,
    pub arch: PolicyArch,
}

impl Default for PolicyTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            lr: 0.05,
            momentum: 0.9,
            batch_size: 64,
            seeds: 32,
            draws: 1,
            max_samples: 4000,
            holdout: 0.2,
            ber_min: 1e-5,
            ber_max: 1e-1,
            arch: PolicyArch::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub bits: u8,
    pub teacher_epochs: u32,
    /// Epochs of each split-training stage.
    pub epochs: u32,
    pub base_lr: f64,
    pub decay_epochs: Vec<u32>,
    pub momentum: f64,
    /// L2 penalty on network weights during split training.
    pub weight_decay: f64,
    /// Largest global gradient norm per step; 0 disables clipping.
    pub clip_norm: f64,
    pub batch_size: usize,
    pub lambda: f64,
    pub t_se: f64,
    pub gamma: f64,
    pub threshold: f64,
    pub ber_train: f64,
    /// Step size for the scaling vectors.
    pub delta_lr: f64,
    /// Minimum teacher training accuracy.
    pub teacher_gate: f64,
    pub device_flops_budget: u64,
    pub bit_budget: Option<u64>,
    /// Rows used to place the initial quantizer levels.
    pub calibration_rows: usize,
    /// 300 epochs per stage with decay at 150 and 200.
    pub long_schedule: bool,
    pub policy: PolicyTrainConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            bits: 2,
            teacher_epochs: 60,
            epochs: 60,
            base_lr: 0.1,
            decay_epochs: vec![30, 45],
            momentum: 0.0,
            weight_decay: 0.0,
            clip_norm: 1.0,
            batch_size: 64,
            lambda: 0.5,
            t_se: 4.0,
            gamma: 1e-3,
            threshold: DEFAULT_THRESHOLD,
            ber_train: 1e-2,
            delta_lr: 20.0,
            teacher_gate: 0.9,
            device_flops_budget: 22_000,
            bit_budget: None,
            calibration_rows: 2000,
            long_schedule: false,
            policy: PolicyTrainConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Config with the 300-epoch schedule applied when requested.
    pub fn effective(&self) -> Self {
        let mut c = self.clone();
        if c.long_schedule {
            c.teacher_epochs = 300;
            c.epochs = 300;
            c.decay_epochs = vec![150, 200];
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.teacher_epochs == 0 || self.policy.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) || !(self.delta_lr >= 0.0) || !(self.policy.lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay {} must be finite and non-negative", self.weight_decay));
        }
        if !(self.clip_norm >= 0.0 && self.clip_norm.is_finite()) {
            return bad(format!("clip_norm {} must be finite and non-negative", self.clip_norm));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..1.0).contains(&self.policy.momentum) {
            return bad("momentum must be in [0, 1)".into());
        }
        if self.batch_size == 0 || self.policy.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(0.0..=0.5).contains(&self.ber_train) {
            return bad(format!("ber_train {} outside [0, 0.5]", self.ber_train));
        }
        let p = &self.policy;
        if !(p.ber_min > 0.0 && p.ber_min <= p.ber_max && p.ber_max < 0.5) {
            return bad(format!("policy BER range [{}, {}] invalid", p.ber_min, p.ber_max));
        }
        if !(0.0..1.0).contains(&p.holdout) {
            return bad(format!("policy holdout {} outside [0, 1)", p.holdout));
        }
        if p.seeds == 0 || p.draws == 0 {
            return bad("policy seeds and draws must be at least 1".into());
        }
        if self.bits == 0 || self.bits > 8 {
            return bad(format!("q = {} outside 1..=8", self.bits));
        }
        self.weights().validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights { lambda: self.lambda, temperature: self.t_se, gamma: self.gamma }
    }
}

/// Splits `n` training rows into the rows used for network training and the
/// trailing rows held out for policy labels. With no holdout both parts are
/// every row.
pub fn holdout_rows(n: usize, cfg: &TrainConfig) -> (Vec<usize>, Vec<usize>) {
    let k = (n as f64 * cfg.policy.holdout).round() as usize;
    if k == 0 || k >= n {
        return ((0..n).collect(), (0..n).collect());
    }
    ((0..n - k).collect(), (n - k..n).collect())
}

/// Base rate divided by 10 for every decay epoch already reached.
pub fn lr_schedule(epoch: u32, base_lr: f64, decay_epochs: &[u32]) -> f64 {
    let n = decay_epochs.iter().filter(|&&d| epoch >= d).count();
    base_lr / 10f64.powi(n as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub lr: f64,
    pub temperature: f64,
    pub loss: f64,
    pub accuracy: f64,
    pub surviving: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub split: Option<usize>,
    pub epochs: Vec<EpochRecord>,
}

impl StageReport {
    fn new(stage: &str, split: Option<usize>) -> Self {
        Self { stage: stage.into(), split, epochs: Vec::new() }
    }

    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Writes reports as one CSV table:
/// `stage,split,epoch,lr,temperature,loss,accuracy,surviving`.
pub fn write_reports<W: Write>(reports: &[StageReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stage", "split", "epoch", "lr", "temperature", "loss", "accuracy", "surviving"])?;
    for r in reports {
        let split = r.split.map(|s| s.to_string()).unwrap_or_default();
        for e in &r.epochs {
            w.write_record([
                r.stage.clone(),
                split.clone(),
                e.epoch.to_string(),
                e.lr.to_string(),
                e.temperature.to_string(),
                e.loss.to_string(),
                e.accuracy.to_string(),
                e.surviving.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Derives an independent stream seed from a base seed and tags.
pub fn stream_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t.wrapping_add(0x5851_f42d_4c95_7f2d))))
}

fn check_data(x: &Tensor, y: &[usize], classes: usize) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= classes) {
        return Err(Error::InvalidParam(format!("label {bad} with {classes} classes")));
    }
    Ok(())
}

fn epoch_order(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

fn accuracy_of(logits: &Tensor, y: &[usize]) -> f64 {
    let hits = (0..logits.rows()).filter(|&r| argmax(logits.row(r)) == y[r]).count();
    hits as f64 / y.len().max(1) as f64
}

/// Factor that brings a gradient of norm `norm` within `max`.
fn clip_factor(norm: f64, max: f64) -> f64 {
    if max > 0.0 && norm > max { max / norm } else { 1.0 }
}

fn diverged(what: &str, epoch: u32) -> Error {
    Error::Diverged(format!("{what}: non-finite values at epoch {epoch}; lower the learning rate"))
}

/// Trains the noiseless full network with cross-entropy. Fails if training
/// accuracy stays below `cfg.teacher_gate`.
pub fn train_ideal(arch: &Architecture, x: &Tensor, y: &[usize], cfg: &TrainConfig) -> Result<(NetParams, StageReport)> {
    cfg.validate()?;
    arch.validate()?;
    check_data(x, y, arch.classes)?;
    let mut net = init_params(&arch.layer_specs(), stream_seed(cfg.seed, &[0]))?;
    let mut opt = Momentum::new(&net, cfg.momentum);
    let w = LossWeights { lambda: 1.0, ..cfg.weights() };
    let mut report = StageReport::new("teacher", None);
    for epoch in 1..=cfg.teacher_epochs {
        let lr = lr_schedule(epoch, cfg.base_lr, &cfg.decay_epochs);
        let order = epoch_order(x.rows(), stream_seed(cfg.seed, &[0, epoch as u64]));
        let (mut loss_sum, mut hits) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.gather_rows(batch)?;
            let yb: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
            let (logits, tape) = crate::diffnet::forward(&net, &xb)?;
            let (loss, dl) = sll_batch(&yb, &logits, None, &w).map_err(|_| diverged("teacher", epoch))?;
            let (mut g, _) = crate::diffnet::backward(&net, &tape, &dl)?;
            g.scale(clip_factor(g.l2_norm(), cfg.clip_norm));
            opt.step(&mut net, &g, lr).map_err(|_| diverged("teacher", epoch))?;
            loss_sum += loss * batch.len() as f64;
            hits += (0..logits.rows()).filter(|&r| argmax(logits.row(r)) == yb[r]).count();
        }
        if !loss_sum.is_finite() || !net.all_finite() {
            return Err(diverged("teacher", epoch));
        }
        report.epochs.push(EpochRecord {
            epoch,
            lr,
            temperature: 0.0,
            loss: loss_sum / x.rows() as f64,
            accuracy: hits as f64 / x.rows() as f64,
            surviving: arch.width,
        });
    }
    let acc = accuracy_of(&infer(&net, x)?, y);
    if acc < cfg.teacher_gate {
        return Err(Error::GateNotReached { stage: "teacher".into(), accuracy: acc, gate: cfg.teacher_gate });
    }
    Ok((net, report))
}

/// Fresh branch for split `s`, initialised from the teacher.
pub fn init_branch(model: &SplitModel, x: &Tensor, cfg: &TrainConfig, s: usize, transit: Transit) -> Result<SplitBranch> {
    model.check_split(s)?;
    let calib = calibration_rows(x, cfg.calibration_rows, stream_seed(cfg.seed, &[1, s as u64]))?;
    SplitBranch::from_teacher(&model.teacher, &model.arch, s, cfg.bits, transit, cfg.threshold, &calib)
}

struct BranchOptimizer {
    net: Momentum,
    level_velocity: Vec<f64>,
}

fn run_branch_epochs(
    branch: &mut SplitBranch,
    x: &Tensor,
    y: &[usize],
    teacher_logits: &Tensor,
    cfg: &TrainConfig,
    stage: &str,
    sparse: bool,
) -> Result<StageReport> {
    check_data(x, y, branch.arch.classes)?;
    let s = branch.split;
    let stage_tag = if sparse { 3 } else { 2 };
    let w = cfg.weights();
    let gamma = if sparse { cfg.gamma } else { 0.0 };
    let mut opt = BranchOptimizer {
        net: Momentum::new(&branch.net, cfg.momentum),
        level_velocity: vec![0.0; branch.trb.quantizer.num_levels()],
    };
    let mut report = StageReport::new(stage, Some(s));
    let what = format!("{stage} split {s}");
    for epoch in 1..=cfg.epochs {
        let t = temperature_for_epoch(epoch)?;
        branch.trb.quantizer.set_temperature(t)?;
        let lr = lr_schedule(epoch, cfg.base_lr, &cfg.decay_epochs);
        let epoch_seed = stream_seed(cfg.seed, &[stage_tag, s as u64, epoch as u64]);
        let order = epoch_order(x.rows(), epoch_seed);
        let ch = ChannelSpec::new(cfg.ber_train, epoch_seed)?;
        let (mut loss_sum, mut hits) = (0.0, 0usize);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            if sparse {
                // channels below the threshold are clipped out and stay out
                let keep: Vec<bool> = mask_from(&branch.trb.scaling)
                    .keep()
                    .iter()
                    .zip(branch.mask().keep())
                    .map(|(a, b)| *a && *b)
                    .collect();
                let mask = ChannelMask::from_keep(keep);
                if mask.surviving_count() == 0 {
                    return Err(Error::AllChannelsPruned);
                }
                branch.trb.mask = Some(mask);
            }
            let xb = x.gather_rows(batch)?;
            let tb = teacher_logits.gather_rows(batch)?;
            let yb: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
            let (logits, pass) = branch.forward_train(&xb, &ch, (b * cfg.batch_size) as u64)?;
            let (loss, dl) = sll_batch(&yb, &logits, Some(&tb), &w).map_err(|_| diverged(&what, epoch))?;
            let mut g = branch.backward_train(&pass, &dl)?;
            if cfg.weight_decay > 0.0 {
                for (gv, p) in g.net.values_mut().zip(branch.net.values()) {
                    *gv += cfg.weight_decay * p;
                }
            }
            let norm = (g.net.l2_norm().powi(2) + g.levels.iter().chain(&g.scales).map(|v| v * v).sum::<f64>()).sqrt();
            let k = clip_factor(norm, cfg.clip_norm);
            g.net.scale(k);
            g.levels.iter_mut().chain(g.scales.iter_mut()).for_each(|v| *v *= k);
            let mut total = loss;
            if sparse {
                total += gamma * l1_loss(&branch.trb.scaling);
            }
            opt.net.step(&mut branch.net, &g.net, lr).map_err(|_| diverged(&what, epoch))?;
            for (v, gl) in opt.level_velocity.iter_mut().zip(&g.levels) {
                *v = cfg.momentum * *v + gl;
            }
            branch.trb.quantizer.descend(&opt.level_velocity, lr).map_err(|_| diverged(&what, epoch))?;
            let delta_lr = cfg.delta_lr * lr / cfg.base_lr;
            for (d, gs) in branch.trb.scaling.scales.iter_mut().zip(&g.scales) {
                *d -= delta_lr * gs;
            }
            if sparse {
                l1_prox(&mut branch.trb.scaling, delta_lr * gamma);
            }
            loss_sum += total * batch.len() as f64;
            hits += (0..logits.rows()).filter(|&r| argmax(logits.row(r)) == yb[r]).count();
        }
        if !loss_sum.is_finite() || !branch.net.all_finite() || branch.trb.scaling.scales.iter().any(|v| !v.is_finite()) {
            return Err(diverged(&what, epoch));
        }
        report.epochs.push(EpochRecord {
            epoch,
            lr,
            temperature: t,
            loss: loss_sum / x.rows() as f64,
            accuracy: hits as f64 / x.rows() as f64,
            surviving: branch.surviving(),
        });
    }
    Ok(report)
}

/// Joint training of encoder, decoder, levels and scaling under the
/// semantic loss at `cfg.ber_train`.
pub fn stage1_joint(
    branch: &mut SplitBranch,
    x: &Tensor,
    y: &[usize],
    teacher_logits: &Tensor,
    cfg: &TrainConfig,
) -> Result<StageReport> {
    cfg.validate()?;
    run_branch_epochs(branch, x, y, teacher_logits, cfg, "joint", false)
}

/// Retraining with the l1 penalty on the scaling vector; freezes the mask
/// `δ ≥ η` at the end.
pub fn stage2_sparse(
    branch: &mut SplitBranch,
    x: &Tensor,
    y: &[usize],
    teacher_logits: &Tensor,
    cfg: &TrainConfig,
) -> Result<StageReport> {
    cfg.validate()?;
    let report = run_branch_epochs(branch, x, y, teacher_logits, cfg, "sparse", true)?;
    let keep = mask_from(&branch.trb.scaling).keep().iter().zip(branch.mask().keep()).map(|(a, b)| *a && *b).collect();
    let mask = ChannelMask::from_keep(keep);
    if mask.surviving_count() == 0 {
        return Err(Error::AllChannelsPruned);
    }
    branch.trb.mask = Some(mask);
    Ok(report)
}

/// Both split-training stages for split `s`.
pub fn train_split(
    model: &SplitModel,
    x: &Tensor,
    y: &[usize],
    teacher_logits: &Tensor,
    cfg: &TrainConfig,
    s: usize,
) -> Result<(SplitBranch, Vec<StageReport>)> {
    let mut branch = init_branch(model, x, cfg, s, Transit::Digital)?;
    let r1 = stage1_joint(&mut branch, x, y, teacher_logits, cfg)?;
    let r2 = stage2_sparse(&mut branch, x, y, teacher_logits, cfg)?;
    branch.check_budget(model.bit_budget)?;
    Ok((branch, vec![r1, r2]))
}

/// Trains every split `1..=s_max` into `model`.
pub fn train_all_splits(model: &mut SplitModel, x: &Tensor, y: &[usize], cfg: &TrainConfig) -> Result<Vec<StageReport>> {
    let teacher_logits = model.teacher_forward(x)?;
    let mut reports = Vec::new();
    for s in 1..=model.s_max {
        let (branch, r) = train_split(model, x, y, &teacher_logits, cfg, s)?;
        model.set_branch(branch)?;
        reports.extend(r);
    }
    Ok(reports)
}

/// Policy training cells: each of the first `max_samples` rows paired with
/// `draws` BER values drawn log-uniformly from `[ber_min, ber_max]`.
pub fn policy_cells(rows: usize, cfg: &TrainConfig) -> Vec<(usize, f64)> {
    let p = &cfg.policy;
    let n = if p.max_samples == 0 { rows } else { rows.min(p.max_samples) };
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, &[4]));
    let (lo, hi) = (p.ber_min.log10(), p.ber_max.log10());
    let mut cells = Vec::with_capacity(n * p.draws as usize);
    for i in 0..n {
        for _ in 0..p.draws {
            let e = if hi > lo { rng.random_range(lo..hi) } else { lo };
            cells.push((i, 10f64.powf(e)));
        }
    }
    cells
}

/// Trains the split policy against per-sample best splits. The split model
/// is only read; its fingerprint is checked before and after.
pub fn stage3_policy(
    model: &SplitModel,
    x: &Tensor,
    y: &[usize],
    cfg: &TrainConfig,
) -> Result<(PolicyNet, StageReport, Vec<PolicySample>)> {
    cfg.validate()?;
    check_data(x, y, model.arch.classes)?;
    if !model.is_complete() {
        return Err(Error::MissingArtifact("every split up to s_max must be trained first".into()));
    }
    let before = model.fingerprint()?;
    let p = &cfg.policy;
    let cells = policy_cells(x.rows(), cfg);
    let data = build_policy_dataset(model, x, y, &cells, p.seeds, stream_seed(cfg.seed, &[5]))?;
    let mut policy = PolicyNet::new(model.arch.input_dim, model.s_max, p.arch, stream_seed(cfg.seed, &[6]))?;
    let report = fit_policy(&mut policy, x, &data, cfg)?;
    if model.fingerprint()? != before {
        return Err(Error::Internal("split model changed during policy training".into()));
    }
    policy.model_fingerprint = before;
    Ok((policy, report, data))
}

/// Minibatch SGD on the squared policy error.
pub fn fit_policy(policy: &mut PolicyNet, x: &Tensor, data: &[PolicySample], cfg: &TrainConfig) -> Result<StageReport> {
    if data.is_empty() {
        return Err(Error::InvalidParam("empty policy dataset".into()));
    }
    let p = &cfg.policy;
    let (trunk, head) = policy_params_mut(policy);
    let mut opt_trunk = Momentum::new(trunk, p.momentum);
    let mut opt_head = Momentum::new(head, p.momentum);
    let mut report = StageReport::new("policy", None);
    for epoch in 1..=p.epochs {
        let order = epoch_order(data.len(), stream_seed(cfg.seed, &[7, epoch as u64]));
        let (mut loss_sum, mut hits) = (0.0, 0usize);
        for batch in order.chunks(p.batch_size) {
            let rows: Vec<usize> = batch.iter().map(|&i| data[i].sample).collect();
            let bers: Vec<f64> = batch.iter().map(|&i| data[i].ber).collect();
            let xb = x.gather_rows(&rows)?;
            let (h, pass) = policy_forward_train(policy, &xb, &bers)?;
            let mut d = Vec::with_capacity(h.len());
            for (r, &i) in batch.iter().enumerate() {
                let target = data[i].target();
                loss_sum += policy_loss(&target, h.row(r))?;
                hits += (argmax(h.row(r)) + 1 == data[i].label) as usize;
                d.extend(policy_loss_grad(&target, h.row(r)).into_iter().map(|g| g / batch.len() as f64));
            }
            let g = policy_backward(policy, &pass, &Tensor::matrix(batch.len(), policy.s_max, d)?)?;
            let (trunk, head) = policy_params_mut(policy);
            opt_trunk.step(trunk, &g.trunk, p.lr).map_err(|_| diverged("policy", epoch))?;
            opt_head.step(head, &g.head, p.lr).map_err(|_| diverged("policy", epoch))?;
        }
        if !loss_sum.is_finite() {
            return Err(diverged("policy", epoch));
        }
        report.epochs.push(EpochRecord {
            epoch,
            lr: p.lr,
            temperature: 0.0,
            loss: loss_sum / data.len() as f64,
            accuracy: hits as f64 / data.len() as f64,
            surviving: 0,
        });
    }
    Ok(report)
}

/// Fraction of samples whose policy decision equals the label.
pub fn policy_label_accuracy(policy: &PolicyNet, x: &Tensor, data: &[PolicySample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidParam("empty policy dataset".into()));
    }
    let rows: Vec<usize> = data.iter().map(|d| d.sample).collect();
    let bers: Vec<f64> = data.iter().map(|d| d.ber).collect();
    let h = policy_forward(policy, &x.gather_rows(&rows)?, &bers)?;
    let hits = data.iter().enumerate().filter(|(r, d)| argmax(h.row(*r)) + 1 == d.label).count();
    Ok(hits as f64 / data.len() as f64)
}
