//! Accuracy-versus-BER sweeps over fixed splits and the policy.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::{ber_to_snr_db, ChannelSpec};
use crate::diffnet::Tensor;
use crate::policy::{decide, enforce_budget, policy_forward, PolicyNet};
use crate::splitmodel::SplitModel;
use crate::{Error, Result};

pub const POLICY_ID: &str = "policy";

/// One `(configuration, ber, seed)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub config_id: String,
    /// Split number, or `policy`.
    pub split: String,
    pub ber: f64,
    /// `inf` at `ber = 0`.
    pub snr_db: f64,
    pub accuracy: f64,
    /// Bits per sample; the mean over samples for the policy.
    pub payload_bits: f64,
    pub seed: u64,
}

/// Per-sample record behind each sweep row.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub config_id: String,
    pub ber: f64,
    pub seed: u64,
    pub sample: usize,
    pub split: usize,
    pub predicted: usize,
    pub label: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub predictions: Vec<Prediction>,
}

pub fn config_id(split: usize) -> String {
    format!("split-{split}")
}

/// `0` followed by half-decade steps from `1e-5` to `1e-1`.
pub fn default_ber_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend((0..9).map(|k| 10f64.powf(-5.0 + 0.5 * k as f64)));
    g
}

/// Deploy-mode evaluation of every split `1..=s_max` and, if given, the
/// policy. Channel seed `seed` is shared by all configurations at one BER and
/// frame index is the sample row, so the policy picks among exactly the
/// outcomes the fixed splits see.
pub fn run_sweep(
    model: &SplitModel,
    policy: Option<&PolicyNet>,
    x: &Tensor,
    y: &[usize],
    bers: &[f64],
    seeds: &[u64],
) -> Result<SweepOutput> {
    if x.rows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    if bers.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidParam("sweep needs at least one BER and one seed".into()));
    }
    if let Some(p) = policy {
        if p.s_max != model.s_max {
            return Err(Error::Config(format!("policy covers {} splits, model {}", p.s_max, model.s_max)));
        }
        if !p.model_fingerprint.is_empty() && p.model_fingerprint != model.fingerprint()? {
            return Err(Error::Config("policy was trained for a different split model".into()));
        }
    }
    for &b in bers {
        ChannelSpec::new(b, 0)?;
    }
    let bits: Vec<u64> = (1..=model.s_max).map(|s| model.bandwidth_bits(s)).collect::<Result<_>>()?;

    // predictions[ber][seed][split - 1][row], cells evaluated on scoped threads
    let cells: Vec<(usize, usize)> = (0..bers.len()).flat_map(|b| (0..seeds.len()).map(move |k| (b, k))).collect();
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(cells.len());
    let chunk = cells.len().div_ceil(workers);
    let mut preds: Vec<Vec<Vec<usize>>> = Vec::with_capacity(cells.len());
    std::thread::scope(|scope| -> Result<()> {
        let handles: Vec<_> = cells
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|&(b, k)| {
                            let ch = ChannelSpec::new(bers[b], seeds[k])?;
                            (1..=model.s_max).map(|s| model.branch(s)?.predict(x, &ch, 0)).collect::<Result<Vec<_>>>()
                        })
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        for h in handles {
            preds.extend(h.join().map_err(|_| Error::Internal("sweep worker panicked".into()))??);
        }
        Ok(())
    })?;

    let mut out = SweepOutput::default();
    for (ci, &(b, k)) in cells.iter().enumerate() {
        let ber = bers[b];
        let snr_db = if ber == 0.0 { f64::INFINITY } else { ber_to_snr_db(ber)? };
        for s in 1..=model.s_max {
            let p = &preds[ci][s - 1];
            let id = config_id(s);
            record(&mut out.predictions, &id, ber, seeds[k], p.iter().map(|&c| (s, c)), y);
            out.rows.push(SweepRow {
                config_id: id,
                split: s.to_string(),
                ber,
                snr_db,
                accuracy: accuracy(p, y),
                payload_bits: bits[s - 1] as f64,
                seed: seeds[k],
            });
        }
        if let Some(pol) = policy {
            // the policy input keeps ber strictly positive
            let probs = policy_forward(pol, x, &vec![ber.max(1e-12); x.rows()])?;
            let mut chosen = Vec::with_capacity(x.rows());
            for r in 0..x.rows() {
                chosen.push(enforce_budget(decide(probs.row(r))?, model.s_max)?.split);
            }
            let p: Vec<usize> = chosen.iter().enumerate().map(|(r, &s)| preds[ci][s - 1][r]).collect();
            let mean_bits = chosen.iter().map(|&s| bits[s - 1] as f64).sum::<f64>() / x.rows() as f64;
            record(&mut out.predictions, POLICY_ID, ber, seeds[k], chosen.iter().copied().zip(p.iter().copied()), y);
            out.rows.push(SweepRow {
                config_id: POLICY_ID.into(),
                split: POLICY_ID.into(),
                ber,
                snr_db,
                accuracy: accuracy(&p, y),
                payload_bits: mean_bits,
                seed: seeds[k],
            });
        }
    }
    Ok(out)
}

fn accuracy(pred: &[usize], y: &[usize]) -> f64 {
    pred.iter().zip(y).filter(|(p, t)| p == t).count() as f64 / y.len().max(1) as f64
}

fn record(log: &mut Vec<Prediction>, id: &str, ber: f64, seed: u64, picks: impl Iterator<Item = (usize, usize)>, y: &[usize]) {
    for (sample, (split, predicted)) in picks.enumerate() {
        log.push(Prediction { config_id: id.into(), ber, seed, sample, split, predicted, label: y[sample] });
    }
}

/// Writes `config_id,ber,seed,sample,split,predicted,label`.
pub fn write_predictions<W: Write>(preds: &[Prediction], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["config_id", "ber", "seed", "sample", "split", "predicted", "label"])?;
    for p in preds {
        w.write_record([
            p.config_id.clone(),
            p.ber.to_string(),
            p.seed.to_string(),
            p.sample.to_string(),
            p.split.to_string(),
            p.predicted.to_string(),
            p.label.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean accuracy over seeds for each `(config_id, ber)`, in first-seen order.
pub fn mean_accuracy(rows: &[SweepRow]) -> Vec<(String, f64, f64)> {
    let mut out: Vec<(String, f64, f64, usize)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(id, b, _, _)| *id == r.config_id && b.to_bits() == r.ber.to_bits()) {
            Some(e) => {
                e.2 += r.accuracy;
                e.3 += 1;
            }
            None => out.push((r.config_id.clone(), r.ber, r.accuracy, 1)),
        }
    }
    out.into_iter().map(|(id, b, s, n)| (id, b, s / n as f64)).collect()
}
