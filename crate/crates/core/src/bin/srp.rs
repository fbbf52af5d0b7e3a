use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Serialize;

use srp_core::checkpoint::Checkpoint;
use srp_core::config::RunConfig;
use srp_core::dataset::Dataset;
use srp_core::pipeline::{self, write_report, DATASET_FILE, INTENT_CHECKPOINT, INTENT_FILE, SRP_CHECKPOINT};

const LOCK_FILE: &str = ".srp.lock";

#[derive(Parser, Debug)]
#[command(
    name = "srp",
    version,
    about = "Semantic region labeling, prediction and evaluation pipelines"
)]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Frame dataset; defaults to `<out>/dataset.jsonl`.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// SRP checkpoint; defaults to `<out>/srp.ckpt`.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Print the report as JSON instead of a summary line.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate episodes, label them and write the datasets and BEV exports.
    Gen,
    /// Score the automatic labels against ground truth.
    EvalLabeler,
    /// Train the region predictor on the training split.
    TrainSrp,
    /// Evaluate current and future region prediction on the test split.
    EvalSrp,
    /// Train the intention head on frozen SRP states, plus the ablation head.
    TrainIntent {
        /// Intention windows; defaults to `<out>/intent.jsonl`.
        #[arg(long)]
        intent_set: Option<PathBuf>,
    },
    /// Compare the intention head with the ablation head.
    EvalIntent {
        #[arg(long)]
        intent_set: Option<PathBuf>,
        /// Defaults to `<out>/intent.ckpt`.
        #[arg(long)]
        intent_checkpoint: Option<PathBuf>,
    },
    /// Train the behaviour models and run risk-object identification.
    Risk,
    /// Write BEV rasters for each layout kind in the mix.
    ExportBev,
}

/// Marks the output directory as in use for the lifetime of the command.
struct Lock(PathBuf);

impl Lock {
    fn acquire(dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(LOCK_FILE);
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                writeln!(f, "{}", std::process::id())?;
                Ok(Self(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(srp_core::Error::Config(format!(
                "{} exists: another run is using this output directory (delete it if stale)",
                path.display()
            ))
            .into()),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

fn emit<T: Serialize>(json: bool, report: &T, summary: String) -> anyhow::Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(report)?);
    } else {
        println!("{summary}");
    }
    Ok(())
}

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    let out = cfg.out_dir.clone();
    let _lock = Lock::acquire(&out)?;
    let dataset_path = cli.dataset.clone().unwrap_or_else(|| out.join(DATASET_FILE));
    let srp_path = cli.checkpoint.clone().unwrap_or_else(|| out.join(SRP_CHECKPOINT));
    let load_dataset = || Dataset::load(&dataset_path).with_context(|| format!("reading {}", dataset_path.display()));
    let load_srp = || Checkpoint::load(&srp_path).with_context(|| format!("reading {}", srp_path.display()));

    match cli.command {
        Command::Gen => {
            let r = pipeline::cmd_gen(&cfg)?;
            let acc = r.labeling_accuracy.map_or("n/a".into(), pct);
            emit(
                cli.json,
                &r,
                format!(
                    "{} episodes, {} accepted ({}), labeling accuracy {acc}, {} frames, rejects {:?}",
                    r.episodes,
                    r.accepted,
                    pct(r.acceptance_rate),
                    r.frames,
                    r.reject_reasons
                ),
            )
        }
        Command::EvalLabeler => {
            let r = pipeline::cmd_eval_labeler(&load_dataset()?)?;
            write_report(&out, "eval-labeler.json", &r)?;
            let acc = r.accuracy.map_or("n/a (no accepted frames)".into(), pct);
            emit(
                cli.json,
                &r,
                format!("accuracy {acc}, acceptance {}", pct(r.acceptance_rate)),
            )
        }
        Command::TrainSrp => {
            let r = pipeline::cmd_train_srp(&cfg, &load_dataset()?)?;
            let last = r.epoch_losses.last().copied().unwrap_or(r.initial_loss);
            emit(
                cli.json,
                &r,
                format!(
                    "{} windows, loss {:.4} -> {last:.4}, digest {}",
                    r.windows, r.initial_loss, r.digest
                ),
            )
        }
        Command::EvalSrp => {
            let r = pipeline::cmd_eval_srp(&cfg, &load_dataset()?, &load_srp()?)?;
            write_report(&out, "eval-srp.json", &r)?;
            emit(
                cli.json,
                &r,
                format!(
                    "topology {}, current micro {} macro {} mAP {}, future micro {} mAP {} (majority mAP {})",
                    pct(r.topology_accuracy),
                    pct(r.current.micro_avg_precision),
                    pct(r.current.macro_avg_precision),
                    pct(r.current.map),
                    pct(r.future.micro_avg_precision),
                    pct(r.future.map),
                    pct(r.future_majority.map)
                ),
            )
        }
        Command::TrainIntent { intent_set } => {
            let set = intent_set.unwrap_or_else(|| out.join(INTENT_FILE));
            let r = pipeline::cmd_train_intent(&cfg, &set, &srp_path)?;
            emit(
                cli.json,
                &r,
                format!(
                    "{} samples, head loss {:.4}, ablation loss {:.4}, srp unchanged {}",
                    r.samples, r.head_final_loss, r.ablation_final_loss, r.srp_unchanged
                ),
            )
        }
        Command::EvalIntent {
            intent_set,
            intent_checkpoint,
        } => {
            let set = intent_set.unwrap_or_else(|| out.join(INTENT_FILE));
            let ip = intent_checkpoint.unwrap_or_else(|| out.join(INTENT_CHECKPOINT));
            let intent = Checkpoint::load(&ip).with_context(|| format!("reading {}", ip.display()))?;
            let r = pipeline::cmd_eval_intent(&cfg, &set, &load_srp()?, &intent)?;
            write_report(&out, "eval-intent.json", &r)?;
            emit(
                cli.json,
                &r,
                format!(
                    "srp head macro {} / ablation macro {}",
                    pct(r.srp_head.macro_avg_precision),
                    pct(r.ablation.macro_avg_precision)
                ),
            )
        }
        Command::Risk => {
            let r = pipeline::cmd_risk(&cfg, &load_srp()?)?;
            emit(
                cli.json,
                &r,
                format!(
                    "identification plain {} / fused {}, fused mean box acc {}",
                    pct(r.plain.rate),
                    pct(r.fused.rate),
                    pct(r.fused.boxes.mean_acc)
                ),
            )
        }
        Command::ExportBev => {
            let files = pipeline::cmd_export_bev(&cfg)?;
            let names: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
            emit(cli.json, &names, names.join("\n"))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(e) = e.downcast_ref::<srp_core::Error>() {
        return e.exit_code() as u8;
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return 2;
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
