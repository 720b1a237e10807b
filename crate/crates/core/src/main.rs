use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semsplit::harness::config::ExperimentConfig;
use semsplit::harness::pipeline::{self, Workdir};
use semsplit::Result;

/// Digital split-inference simulator: trains a device/edge split network with
/// learned quantization, channel pruning and a split policy, and sweeps its
/// accuracy over binary symmetric channels.
#[derive(Parser)]
#[command(name = "semsplit", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Directory holding every artifact.
    #[arg(long, short = 'w', default_value = ".", global = true)]
    workdir: PathBuf,
    /// JSON experiment config; defaults apply to missing keys.
    #[arg(long, short = 'c', global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Shorthand for `--set train.seed=N`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset.
    GenData,
    /// Train the noiseless reference network.
    TrainTeacher,
    /// Joint and sparse training of split branches.
    Train {
        /// Only these splits (repeatable); all up to s_max by default.
        #[arg(long = "split")]
        splits: Vec<usize>,
    },
    /// Train the split policy on the frozen split model.
    TrainPolicy,
    /// Accuracy against BER for every split and the policy.
    Sweep,
    /// Module ablation at a fixed split.
    Ablate,
    /// Render a sweep CSV as SVG.
    Plot {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print a checkpoint summary as JSON.
    InspectCheckpoint { path: PathBuf },
    /// Print the resolved config as JSON.
    ShowConfig,
}

fn run(cli: Cli) -> Result<()> {
    let mut overrides = cli.common.overrides.clone();
    if let Some(s) = cli.common.seed {
        overrides.push(format!("train.seed={s}"));
    }
    let cfg = ExperimentConfig::load(cli.common.config.as_deref(), &overrides)?;
    let wd = Workdir::new(&cli.common.workdir)?;
    match cli.command {
        Command::GenData => {
            let acc = pipeline::gen_data(&cfg, &wd)?;
            eprintln!("wrote {}; nearest-centroid test accuracy {acc:.4}", wd.path(pipeline::DATA_FILE).display());
        }
        Command::TrainTeacher => {
            let r = pipeline::train_teacher(&cfg, &wd)?;
            if let Some(e) = r.final_record() {
                eprintln!("teacher: epoch {} loss {:.4} train accuracy {:.4}", e.epoch, e.loss, e.accuracy);
            }
        }
        Command::Train { splits } => {
            for r in pipeline::train_splits(&cfg, &wd, &splits)? {
                if let Some(e) = r.final_record() {
                    eprintln!(
                        "{} split {}: loss {:.4} train accuracy {:.4} channels {}",
                        r.stage,
                        r.split.unwrap_or(0),
                        e.loss,
                        e.accuracy,
                        e.surviving
                    );
                }
            }
        }
        Command::TrainPolicy => {
            let r = pipeline::train_policy(&cfg, &wd)?;
            if let Some(e) = r.final_record() {
                eprintln!("policy: loss {:.4} label accuracy {:.4}", e.loss, e.accuracy);
            }
        }
        Command::Sweep => {
            let out = pipeline::sweep(&cfg, &wd)?;
            eprintln!("wrote {} rows to {}", out.rows.len(), wd.path(pipeline::SWEEP_FILE).display());
        }
        Command::Ablate => {
            for r in pipeline::ablate(&cfg, &wd)? {
                eprintln!("case {}: accuracy {:.4} z {}", r.case.id, r.accuracy, r.z);
            }
        }
        Command::Plot { input, output } => {
            let p = pipeline::plot(&wd, input.as_deref(), output.as_deref())?;
            eprintln!("wrote {}", p.display());
        }
        Command::InspectCheckpoint { path } => {
            println!("{}", serde_json::to_string_pretty(&pipeline::inspect_checkpoint(&path)?)?);
        }
        Command::ShowConfig => println!("{}", cfg.to_json()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
