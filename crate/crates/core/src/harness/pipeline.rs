//! The command steps, each reading and writing artifacts in a work
//! directory.
//!
//! | file                   | written by      |
//! |------------------------|-----------------|
//! | `data.json`            | gen-data        |
//! | `teacher.ckpt`         | train-teacher   |
//! | `teacher_report.csv`   | train-teacher   |
//! | `model.ckpt`           | train           |
//! | `train_report.csv`     | train           |
//! | `policy.ckpt`          | train-policy    |
//! | `policy_dataset.csv`   | train-policy    |
//! | `policy_report.csv`    | train-policy    |
//! | `sweep.csv`            | sweep           |
//! | `predictions.csv`      | sweep           |
//! | `ablation.csv`         | ablate          |
//! | `sweep.svg`            | plot            |

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ablation::{run_ablation, write_ablation, AblationRow};
use super::config::ExperimentConfig;
use super::data::{gen_synthetic, NearestCentroid, SyntheticDataset};
use super::output::{emit_csv, emit_svg_plot, read_csv};
use super::sweep::{run_sweep, write_predictions, SweepOutput};
use crate::diffnet::{NetParams, Tensor};
use crate::policy::{write_policy_dataset, PolicyNet};
use crate::splitmodel::{decode_container, read_container, write_container, ContainerKind};
use crate::splitmodel::{Architecture, SplitModel};
use crate::trainer::{holdout_rows, stage3_policy, train_ideal, train_split, write_reports, StageReport};
use crate::{Error, Result};

pub const DATA_FILE: &str = "data.json";
pub const TEACHER_FILE: &str = "teacher.ckpt";
pub const MODEL_FILE: &str = "model.ckpt";
pub const POLICY_FILE: &str = "policy.ckpt";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const PLOT_FILE: &str = "sweep.svg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherCheckpoint {
    pub arch: Architecture,
    pub net: NetParams,
}

pub struct Workdir {
    pub root: PathBuf,
}

impl Workdir {
    pub fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn writer(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    pub fn data(&self) -> Result<SyntheticDataset> {
        SyntheticDataset::load(&self.path(DATA_FILE))
    }

    pub fn teacher(&self) -> Result<TeacherCheckpoint> {
        read_container(&self.path(TEACHER_FILE), ContainerKind::Teacher)
    }

    pub fn model(&self) -> Result<SplitModel> {
        read_container(&self.path(MODEL_FILE), ContainerKind::SplitModel)
    }

    pub fn policy(&self) -> Result<PolicyNet> {
        read_container(&self.path(POLICY_FILE), ContainerKind::Policy)
    }
}

/// Returns the nearest-centroid test accuracy as a sanity reference.
pub fn gen_data(cfg: &ExperimentConfig, wd: &Workdir) -> Result<f64> {
    let ds = gen_synthetic(&cfg.data)?;
    ds.save(&wd.path(DATA_FILE))?;
    Ok(NearestCentroid::fit(&ds.train_x, &ds.train_y, cfg.data.classes)?.accuracy(&ds.test_x, &ds.test_y))
}

/// Training rows for the networks and rows held out for policy labels.
fn partition(ds: &SyntheticDataset, cfg: &ExperimentConfig) -> Result<((Tensor, Vec<usize>), (Tensor, Vec<usize>))> {
    let (fit, held) = holdout_rows(ds.train_x.rows(), &cfg.train);
    let pick = |rows: &[usize]| -> Result<(Tensor, Vec<usize>)> {
        Ok((ds.train_x.gather_rows(rows)?, rows.iter().map(|&r| ds.train_y[r]).collect()))
    };
    Ok((pick(&fit)?, pick(&held)?))
}

fn check_arch(cfg: &ExperimentConfig, arch: &Architecture, what: &str) -> Result<()> {
    if *arch != cfg.arch {
        return Err(Error::Config(format!("{what} was built for {arch:?}, config says {:?}", cfg.arch)));
    }
    Ok(())
}

pub fn train_teacher(cfg: &ExperimentConfig, wd: &Workdir) -> Result<StageReport> {
    let ((x, y), _) = partition(&wd.data()?, cfg)?;
    let tc = cfg.train.effective();
    let (net, report) = train_ideal(&cfg.arch, &x, &y, &tc)?;
    write_container(&wd.path(TEACHER_FILE), ContainerKind::Teacher, &TeacherCheckpoint { arch: cfg.arch, net })?;
    write_reports(std::slice::from_ref(&report), wd.writer("teacher_report.csv")?)?;
    Ok(report)
}

/// Joint and sparse training for `splits` (all of `1..=s_max` when empty).
/// Existing branches in `model.ckpt` are kept unless retrained.
pub fn train_splits(cfg: &ExperimentConfig, wd: &Workdir, splits: &[usize]) -> Result<Vec<StageReport>> {
    let ((x, y), _) = partition(&wd.data()?, cfg)?;
    let tc = cfg.train.effective();
    let teacher = wd.teacher()?;
    check_arch(cfg, &teacher.arch, "teacher.ckpt")?;
    let fresh = || SplitModel::new(cfg.arch, teacher.net.clone(), tc.bits, tc.device_flops_budget, tc.bit_budget);
    let mut model = match wd.model() {
        Ok(m) if !splits.is_empty() && m.teacher == teacher.net && m.bits == tc.bits && m.device_flops_budget == tc.device_flops_budget => m,
        Ok(_) | Err(Error::MissingArtifact(_)) => fresh()?,
        Err(e) => return Err(e),
    };
    let todo: Vec<usize> = if splits.is_empty() { (1..=model.s_max).collect() } else { splits.to_vec() };
    let teacher_logits = model.teacher_forward(&x)?;
    let mut reports = Vec::new();
    for s in todo {
        model.check_split(s)?;
        let (branch, r) = train_split(&model, &x, &y, &teacher_logits, &tc, s)?;
        model.set_branch(branch)?;
        reports.extend(r);
    }
    write_container(&wd.path(MODEL_FILE), ContainerKind::SplitModel, &model)?;
    write_reports(&reports, wd.writer("train_report.csv")?)?;
    Ok(reports)
}

pub fn train_policy(cfg: &ExperimentConfig, wd: &Workdir) -> Result<StageReport> {
    let (_, (x, y)) = partition(&wd.data()?, cfg)?;
    let model = wd.model()?;
    check_arch(cfg, &model.arch, "model.ckpt")?;
    let (policy, report, samples) = stage3_policy(&model, &x, &y, &cfg.train.effective())?;
    write_container(&wd.path(POLICY_FILE), ContainerKind::Policy, &policy)?;
    write_policy_dataset(&samples, model.s_max, wd.writer("policy_dataset.csv")?)?;
    write_reports(std::slice::from_ref(&report), wd.writer("policy_report.csv")?)?;
    Ok(report)
}

/// Test-set sweep. The policy is included when `policy.ckpt` exists.
pub fn sweep(cfg: &ExperimentConfig, wd: &Workdir) -> Result<SweepOutput> {
    let ds = wd.data()?;
    let model = wd.model()?;
    let policy = match wd.policy() {
        Ok(p) => Some(p),
        Err(Error::MissingArtifact(_)) => None,
        Err(e) => return Err(e),
    };
    let out = run_sweep(&model, policy.as_ref(), &ds.test_x, &ds.test_y, &cfg.sweep.bers, &cfg.sweep.seeds)?;
    emit_csv(&out.rows, &wd.path(SWEEP_FILE))?;
    write_predictions(&out.predictions, wd.writer(PREDICTIONS_FILE)?)?;
    Ok(out)
}

pub fn ablate(cfg: &ExperimentConfig, wd: &Workdir) -> Result<Vec<AblationRow>> {
    let ds = wd.data()?;
    let ((x, y), _) = partition(&ds, cfg)?;
    let teacher = wd.teacher()?;
    check_arch(cfg, &teacher.arch, "teacher.ckpt")?;
    let tc = cfg.train.effective();
    let model = SplitModel::new(cfg.arch, teacher.net, tc.bits, tc.device_flops_budget, tc.bit_budget)?;
    let rows = run_ablation(&model, (&x, &y), (&ds.test_x, &ds.test_y), &tc, &cfg.ablation)?;
    write_ablation(&rows, wd.writer(ABLATION_FILE)?)?;
    Ok(rows)
}

pub fn plot(wd: &Workdir, input: Option<&Path>, output: Option<&Path>) -> Result<PathBuf> {
    let src = input.map(Path::to_path_buf).unwrap_or_else(|| wd.path(SWEEP_FILE));
    let dst = output.map(Path::to_path_buf).unwrap_or_else(|| wd.path(PLOT_FILE));
    emit_svg_plot(&read_csv(&src)?, &dst)?;
    Ok(dst)
}

/// Summary of any checkpoint file as JSON.
pub fn inspect_checkpoint(path: &Path) -> Result<serde_json::Value> {
    use serde_json::json;
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.display().to_string()),
        _ => Error::Io(e),
    })?;
    let kind = bytes.get(6).copied().unwrap_or(0);
    match kind {
        1 => {
            let t: TeacherCheckpoint = decode_container(ContainerKind::Teacher, &bytes)?;
            Ok(json!({"kind": "teacher", "arch": t.arch, "parameters": t.net.values().count()}))
        }
        2 => {
            let m: SplitModel = decode_container(ContainerKind::SplitModel, &bytes)?;
            let branches: Vec<_> = m
                .branches
                .iter()
                .map(|b| {
                    json!({
                        "split": b.split,
                        "levels": b.trb.quantizer.levels(),
                        "surviving": b.surviving(),
                        "payload_bits": b.bandwidth_bits(),
                        "mask_id": b.mask().id(),
                        "encoder_flops": m.arch.encoder_flops(b.split, m.bits),
                    })
                })
                .collect();
            Ok(json!({
                "kind": "split-model",
                "arch": m.arch,
                "bits": m.bits,
                "s_max": m.s_max,
                "fingerprint": m.fingerprint()?,
                "branches": branches,
            }))
        }
        3 => {
            let p: PolicyNet = decode_container(ContainerKind::Policy, &bytes)?;
            Ok(json!({"kind": "policy", "s_max": p.s_max, "arch": p.arch, "model_fingerprint": p.model_fingerprint}))
        }
        _ => Err(decode_container::<serde_json::Value>(ContainerKind::Teacher, &bytes).err().unwrap_or_else(|| {
            Error::Config(format!("{}: unknown checkpoint kind", path.display()))
        })),
    }
}
