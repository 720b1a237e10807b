//! Split network: encoder prefix, transmission block (scaling, mask,
//! quantizer), channel, decoder suffix, plus the noiseless teacher.
//!
//! Every candidate split `s` owns a full copy of the layer stack. The
//! device runs layers `[0, 2+s)` (stem, relu and the first `s` residual
//! blocks) followed by the transmission block; the edge runs the rest.

mod checkpoint;

pub use checkpoint::{
    decode_container, encode_container, read_container, write_container, ContainerKind, CONTAINER_MAGIC, CONTAINER_VERSION,
};

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{self, BitFrame, ChannelSpec, FrameMeta};
use crate::diffnet::{
    backward_into, flops_estimate, forward_range, infer, infer_range, Gradients, LayerSpec, NetParams, Tape, Tensor,
};
use crate::pruning::{apply_scaling, ChannelMask, ScalingVector};
use crate::quantizer::{decode_bits, encode_bits, init_levels, QuantizerParams};
use crate::semloss::softmax;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub input_dim: usize,
    /// Feature channels `z` at every split point.
    pub width: usize,
    pub blocks: usize,
    pub classes: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { input_dim: 64, width: 32, blocks: 8, classes: 10 }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.width == 0 || self.blocks == 0 || self.classes < 2 {
            return Err(Error::Config(format!("degenerate architecture {self:?}")));
        }
        Ok(())
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut specs = vec![LayerSpec::dense(self.input_dim, self.width), LayerSpec::relu(self.width)];
        specs.extend((0..self.blocks).map(|_| LayerSpec::residual(self.width)));
        specs.push(LayerSpec::dense(self.width, self.classes));
        specs
    }

    pub fn num_layers(&self) -> usize {
        self.blocks + 3
    }

    /// Index of the first edge-side layer for split `s`.
    pub fn cut(&self, s: usize) -> usize {
        2 + s
    }

    pub fn prefix(&self, s: usize) -> Range<usize> {
        0..self.cut(s)
    }

    pub fn suffix(&self, s: usize) -> Range<usize> {
        self.cut(s)..self.num_layers()
    }

    /// Device-side FLOPs at split `s`: prefix layers plus the transmission
    /// block.
    pub fn encoder_flops(&self, s: usize, bits: u8) -> u64 {
        flops_estimate(&self.layer_specs()[self.prefix(s)]) + trb_flops(self.width, bits)
    }
}

/// Scaling (`z` multiplies) plus level search (`z·2^q` comparisons).
pub fn trb_flops(width: usize, bits: u8) -> u64 {
    width as u64 + width as u64 * (1u64 << bits)
}

/// Largest split whose encoder fits in `budget` FLOPs.
pub fn compute_s_max(arch: &Architecture, bits: u8, budget: u64) -> Result<usize> {
    let mut s_max = 0;
    for s in 1..=arch.blocks {
        if arch.encoder_flops(s, bits) <= budget {
            s_max = s;
        } else {
            break;
        }
    }
    if s_max == 0 {
        return Err(Error::Config(format!(
            "device budget {budget} is below the smallest encoder ({} FLOPs)",
            arch.encoder_flops(1, bits)
        )));
    }
    Ok(s_max)
}

/// How features cross the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transit {
    /// Quantized, framed and sent over the binary symmetric channel.
    Digital,
    /// Sent as real values over AWGN at the SNR that maps to the BER.
    Analog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trb {
    pub quantizer: QuantizerParams,
    pub scaling: ScalingVector,
    /// Frozen at the end of sparse training; `None` keeps every channel.
    pub mask: Option<ChannelMask>,
    pub transit: Transit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitBranch {
    pub split: usize,
    pub arch: Architecture,
    pub net: NetParams,
    pub trb: Trb,
}

/// Everything recorded while one sample crosses the link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTrace {
    pub split: usize,
    pub features: Vec<f64>,
    pub sent: Option<BitFrame>,
    pub received: Option<BitFrame>,
    pub reconstructed: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Activations kept by [`SplitBranch::forward_train`] for the backward pass.
#[derive(Debug, Clone)]
pub struct TrainPass {
    prefix: Tape,
    suffix: Tape,
    features: Tensor,
    scaled: Tensor,
    /// Constant channel term added after the relaxed quantizer.
    pub offset: Tensor,
}

#[derive(Debug, Clone)]
pub struct BranchGrads {
    pub net: Gradients,
    pub levels: Vec<f64>,
    pub scales: Vec<f64>,
}

impl SplitBranch {
    /// Starts a branch from the teacher's weights, with unit scaling and
    /// levels at the quantiles of the teacher's features on `calibration`.
    pub fn from_teacher(
        teacher: &NetParams,
        arch: &Architecture,
        split: usize,
        bits: u8,
        transit: Transit,
        threshold: f64,
        calibration: &Tensor,
    ) -> Result<Self> {
        if split == 0 || split > arch.blocks {
            return Err(Error::InvalidParam(format!("split {split} outside 1..={}", arch.blocks)));
        }
        if teacher.specs() != arch.layer_specs().as_slice() {
            return Err(Error::Shape("teacher does not match the architecture".into()));
        }
        let features = infer_range(teacher, arch.prefix(split), calibration)?;
        let quantizer = init_levels(features.data(), bits)?;
        Ok(Self {
            split,
            arch: *arch,
            net: teacher.clone(),
            trb: Trb { quantizer, scaling: ScalingVector::ones(arch.width, threshold), mask: None, transit },
        })
    }

    pub fn mask(&self) -> ChannelMask {
        self.trb.mask.clone().unwrap_or_else(|| ChannelMask::all(self.arch.width))
    }

    pub fn surviving(&self) -> usize {
        self.trb.mask.as_ref().map_or(self.arch.width, ChannelMask::surviving_count)
    }

    /// Payload bits per sample: `z′·q`.
    pub fn bandwidth_bits(&self) -> u64 {
        self.surviving() as u64 * self.trb.quantizer.bits() as u64
    }

    fn frame_meta(&self) -> FrameMeta {
        FrameMeta { split: self.split as u8, bits: self.trb.quantizer.bits(), mask_id: self.mask().id() }
    }

    /// Value the receiver uses for channels that are never sent.
    pub fn fill_value(&self) -> f64 {
        match self.trb.transit {
            Transit::Digital => {
                let q = &self.trb.quantizer;
                q.levels()[q.level_index(0.0)]
            }
            Transit::Analog => 0.0,
        }
    }

    pub fn check_budget(&self, budget: Option<u64>) -> Result<()> {
        match budget {
            Some(b) if self.bandwidth_bits() > b => Err(Error::Bandwidth { bits: self.bandwidth_bits(), budget: b }),
            _ => Ok(()),
        }
    }

    /// Prefix output `X_s` and its scaled copy `δ ⊙ X_s`.
    pub fn encode_features(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let features = infer_range(&self.net, self.arch.prefix(self.split), x)?;
        let scaled = apply_scaling(&features, &self.trb.scaling)?;
        Ok((features, scaled))
    }

    fn noise_row(&self, u: &[f64], ch: &ChannelSpec, frame: u64) -> Result<Vec<f64>> {
        let mask = self.mask();
        let mut out = vec![0.0; u.len()];
        if ch.ber == 0.0 {
            return Ok(out);
        }
        let kept: Vec<usize> = mask.surviving_indices().collect();
        let mut sent: Vec<f64> = kept.iter().map(|&k| u[k]).collect();
        let clean = sent.clone();
        let snr = channel::ber_to_snr_db(ch.ber)?;
        channel::awgn(&mut sent, snr, &mut channel::frame_rng(ch.seed, frame))?;
        for ((&k, a), b) in kept.iter().zip(&sent).zip(&clean) {
            out[k] = a - b;
        }
        Ok(out)
    }

    /// Sends the surviving channels of one scaled feature row. Returns the
    /// transmitted and received frames.
    pub fn transmit_row(&self, u: &[f64], ch: &ChannelSpec, frame: u64) -> Result<(BitFrame, BitFrame)> {
        let mask = self.mask();
        let kept: Vec<f64> = mask.surviving_indices().map(|k| u[k]).collect();
        let words = encode_bits(&kept, &self.trb.quantizer)?;
        let sent = channel::pack(&words, self.frame_meta(), None)?;
        let received = channel::bsc_transmit(&sent, ch, frame);
        Ok((sent, received))
    }

    /// Rebuilds a full-width feature row from a received frame.
    pub fn reconstruct(&self, frame: &BitFrame) -> Result<Vec<f64>> {
        let meta = self.frame_meta();
        if frame.meta != meta {
            return Err(Error::Frame(format!("header {:?} does not match this branch {:?}", frame.meta, meta)));
        }
        let levels = decode_bits(&channel::unpack(frame)?, &self.trb.quantizer)?;
        let mask = self.mask();
        if levels.len() != mask.surviving_count() {
            return Err(Error::Frame(format!("{} elements for {} channels", levels.len(), mask.surviving_count())));
        }
        let mut row = vec![self.fill_value(); self.arch.width];
        for (k, v) in mask.surviving_indices().zip(levels) {
            row[k] = v;
        }
        Ok(row)
    }

    /// Channel term of the training pass for one row. Digital:
    /// `decode(BSC(encode(u))) − Q_ideal(u)`, so that as `T` grows the
    /// relaxed output plus this term tends to exactly what the receiver
    /// decodes. Analog: the AWGN sample.
    fn offset_row(&self, u: &[f64], ch: &ChannelSpec, frame: u64) -> Result<Vec<f64>> {
        match self.trb.transit {
            Transit::Analog => self.noise_row(u, ch, frame),
            Transit::Digital => {
                let q = &self.trb.quantizer;
                let received = if ch.ber == 0.0 {
                    let mut row = vec![self.fill_value(); u.len()];
                    for k in self.mask().surviving_indices() {
                        row[k] = q.levels()[q.level_index(u[k])];
                    }
                    row
                } else {
                    self.reconstruct(&self.transmit_row(u, ch, frame)?.1)?
                };
                let mask = self.mask();
                Ok((0..u.len())
                    .map(|k| if mask.is_kept(k) { received[k] - q.ideal_scalar(u[k]) } else { 0.0 })
                    .collect())
            }
        }
    }

    /// Training-mode pass. Row `r` uses channel frame `first_frame + r`.
    pub fn forward_train(&self, x: &Tensor, ch: &ChannelSpec, first_frame: u64) -> Result<(Tensor, TrainPass)> {
        let (features, prefix) = forward_range(&self.net, self.arch.prefix(self.split), x)?;
        let scaled = apply_scaling(&features, &self.trb.scaling)?;
        let mut offset = Vec::with_capacity(scaled.len());
        for r in 0..scaled.rows() {
            offset.extend(self.offset_row(scaled.row(r), ch, first_frame + r as u64)?);
        }
        let offset = Tensor::new(scaled.shape().to_vec(), offset)?;
        self.finish_train(features, prefix, scaled, offset)
    }

    /// Training-mode pass with a caller-supplied channel term.
    pub fn forward_train_with_offset(&self, x: &Tensor, offset: &Tensor) -> Result<(Tensor, TrainPass)> {
        let (features, prefix) = forward_range(&self.net, self.arch.prefix(self.split), x)?;
        let scaled = apply_scaling(&features, &self.trb.scaling)?;
        if offset.shape() != scaled.shape() {
            return Err(Error::Shape(format!("offset {:?} vs features {:?}", offset.shape(), scaled.shape())));
        }
        self.finish_train(features, prefix, scaled, offset.clone())
    }

    fn finish_train(&self, features: Tensor, prefix: Tape, scaled: Tensor, offset: Tensor) -> Result<(Tensor, TrainPass)> {
        let mask = self.mask();
        let fill = self.fill_value();
        let q = &self.trb.quantizer;
        let digital = self.trb.transit == Transit::Digital;
        let w = self.arch.width;
        let y: Vec<f64> = scaled
            .data()
            .iter()
            .zip(offset.data())
            .enumerate()
            .map(|(i, (&u, &o))| {
                if !mask.is_kept(i % w) {
                    fill
                } else if digital {
                    q.soft_scalar(u) + o
                } else {
                    u + o
                }
            })
            .collect();
        let y = Tensor::new(scaled.shape().to_vec(), y)?;
        let (logits, suffix) = forward_range(&self.net, self.arch.suffix(self.split), &y)?;
        Ok((logits, TrainPass { prefix, suffix, features, scaled, offset }))
    }

    pub fn backward_train(&self, pass: &TrainPass, d_logits: &Tensor) -> Result<BranchGrads> {
        let mut net = self.net.zero_gradients();
        let dy = backward_into(&self.net, &pass.suffix, d_logits, &mut net)?;
        let w = self.arch.width;
        let mask = self.mask();
        let q = &self.trb.quantizer;
        let digital = self.trb.transit == Transit::Digital;
        let mut levels = vec![0.0; q.num_levels()];
        let mut scales = vec![0.0; w];
        let mut dx = vec![0.0; dy.len()];
        for (i, ((&g, &u), &f)) in dy.data().iter().zip(pass.scaled.data()).zip(pass.features.data()).enumerate() {
            let k = i % w;
            if !mask.is_kept(k) {
                continue;
            }
            let du = if digital { g * q.soft_scalar_backward(u, g, &mut levels).1 } else { g };
            scales[k] += du * f;
            dx[i] = du * self.trb.scaling.scales[k];
        }
        let dx = Tensor::new(dy.shape().to_vec(), dx)?;
        backward_into(&self.net, &pass.prefix, &dx, &mut net)?;
        Ok(BranchGrads { net, levels, scales })
    }

    /// Deployment pass over a batch: hard codec, framing, BSC, decoding and
    /// the decoder suffix. Returns class probabilities and per-row traces.
    pub fn forward_deploy(&self, x: &Tensor, ch: &ChannelSpec, first_frame: u64) -> Result<(Tensor, Vec<LinkTrace>)> {
        let (features, scaled) = self.encode_features(x)?;
        let mut received_rows = Vec::with_capacity(scaled.len());
        let mut traces = Vec::with_capacity(scaled.rows());
        for r in 0..scaled.rows() {
            let u = scaled.row(r);
            let frame = first_frame + r as u64;
            let (sent, received, rec) = match self.trb.transit {
                Transit::Digital => {
                    let (sent, received) = self.transmit_row(u, ch, frame)?;
                    let rec = self.reconstruct(&received)?;
                    (Some(sent), Some(received), rec)
                }
                Transit::Analog => {
                    let mask = self.mask();
                    let noise = self.noise_row(u, ch, frame)?;
                    let rec = (0..u.len()).map(|k| if mask.is_kept(k) { u[k] + noise[k] } else { 0.0 }).collect();
                    (None, None, rec)
                }
            };
            received_rows.extend_from_slice(&rec);
            traces.push(LinkTrace {
                split: self.split,
                features: features.row(r).to_vec(),
                sent,
                received,
                reconstructed: rec,
                logits: Vec::new(),
            });
        }
        let y = Tensor::new(scaled.shape().to_vec(), received_rows)?;
        let logits = self.decode(&y)?;
        let mut probs = Vec::with_capacity(logits.len());
        for (r, t) in traces.iter_mut().enumerate() {
            t.logits = logits.row(r).to_vec();
            probs.extend(softmax(&t.logits));
        }
        Ok((Tensor::new(logits.shape().to_vec(), probs)?, traces))
    }

    /// Decoder suffix on reconstructed features.
    pub fn decode(&self, y: &Tensor) -> Result<Tensor> {
        infer_range(&self.net, self.arch.suffix(self.split), y)
    }

    /// Predicted class per row under deployment.
    pub fn predict(&self, x: &Tensor, ch: &ChannelSpec, first_frame: u64) -> Result<Vec<usize>> {
        let (probs, _) = self.forward_deploy(x, ch, first_frame)?;
        Ok((0..probs.rows()).map(|r| argmax(probs.row(r))).collect())
    }
}

/// Index of the largest entry; the first one on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitModel {
    pub arch: Architecture,
    pub bits: u8,
    pub device_flops_budget: u64,
    /// Per-frame payload limit in bits, when enforced.
    pub bit_budget: Option<u64>,
    pub s_max: usize,
    pub teacher: NetParams,
    /// Trained branches, ordered by split.
    pub branches: Vec<SplitBranch>,
}

impl SplitModel {
    pub fn new(arch: Architecture, teacher: NetParams, bits: u8, device_flops_budget: u64, bit_budget: Option<u64>) -> Result<Self> {
        arch.validate()?;
        if teacher.specs() != arch.layer_specs().as_slice() {
            return Err(Error::Shape("teacher does not match the architecture".into()));
        }
        let s_max = compute_s_max(&arch, bits, device_flops_budget)?;
        Ok(Self { arch, bits, device_flops_budget, bit_budget, s_max, teacher, branches: Vec::new() })
    }

    pub fn check_split(&self, s: usize) -> Result<()> {
        if s == 0 || s > self.s_max {
            return Err(Error::InvalidParam(format!("split {s} outside 1..={}", self.s_max)));
        }
        Ok(())
    }

    pub fn branch(&self, s: usize) -> Result<&SplitBranch> {
        self.check_split(s)?;
        self.branches
            .iter()
            .find(|b| b.split == s)
            .ok_or_else(|| Error::MissingArtifact(format!("split {s} has not been trained")))
    }

    /// Inserts or replaces the branch for its split.
    pub fn set_branch(&mut self, branch: SplitBranch) -> Result<()> {
        self.check_split(branch.split)?;
        branch.check_budget(self.bit_budget)?;
        self.branches.retain(|b| b.split != branch.split);
        self.branches.push(branch);
        self.branches.sort_by_key(|b| b.split);
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        (1..=self.s_max).all(|s| self.branches.iter().any(|b| b.split == s))
    }

    pub fn bandwidth_bits(&self, s: usize) -> Result<u64> {
        Ok(self.branch(s)?.bandwidth_bits())
    }

    pub fn teacher_forward(&self, x: &Tensor) -> Result<Tensor> {
        infer(&self.teacher, x)
    }

    pub fn forward_train(&self, x: &Tensor, s: usize, ch: &ChannelSpec, first_frame: u64) -> Result<(Tensor, TrainPass)> {
        let b = self.branch(s)?;
        b.check_budget(self.bit_budget)?;
        b.forward_train(x, ch, first_frame)
    }

    pub fn forward_deploy(&self, x: &Tensor, s: usize, ch: &ChannelSpec, first_frame: u64) -> Result<(Tensor, Vec<LinkTrace>)> {
        let b = self.branch(s)?;
        b.check_budget(self.bit_budget)?;
        b.forward_deploy(x, ch, first_frame)
    }

    /// SHA-256 over the canonical JSON encoding, hex.
    pub fn fingerprint(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex(&Sha256::digest(&bytes)))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Row sample of `x` used to calibrate quantizer levels.
pub fn calibration_rows(x: &Tensor, max_rows: usize, seed: u64) -> Result<Tensor> {
    if x.rows() <= max_rows {
        return Ok(x.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..max_rows).map(|_| x.row(rng.random_range(0..x.rows())).to_vec()).collect();
    Tensor::stack_rows(&rows)
}
