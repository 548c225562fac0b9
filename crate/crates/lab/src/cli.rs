//! The `amem` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use amem_core::model::Variant;
use clap::{Args, Parser, Subcommand};

use crate::artifact::load_model;
use crate::config::CliConfig;
use crate::dataset::{generate_dataset, load_split, Split};
use crate::error::{LabError, LabResult};
use crate::eval::{eval_threads, evaluate};
use crate::gradcheck::gradcheck;
use crate::probe::{dump_dynamic_weights, probe, write_weight_rows};
use crate::train::train;

#[derive(Debug, Parser)]
#[command(name = "amem", version, about = "Attention-memory visual dialog lab")]
pub struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/val/test dialogs and a manifest.
    GenData(GenData),
    /// Train one variant.
    Train(TrainArgs),
    /// Evaluate a checkpoint with ground-truth history.
    Eval(EvalArgs),
    /// Finite-difference gradient check on a tiny 64-bit model.
    Gradcheck(GradArgs),
    /// Attention maps of one dialog step, optionally with a moved retrieval.
    Probe(ProbeArgs),
    /// Predicted dynamic-weight candidates for offline analysis.
    DumpWeights(DumpArgs),
}

#[derive(Debug, Args)]
pub struct GenData {
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub val: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    #[arg(long)]
    pub dialogs_per_image: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::from_name(s).ok_or_else(|| {
        let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
        format!("unknown variant {s:?}; expected one of {}", names.join(", "))
    })
}

fn parse_cell(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(',').ok_or("expected ROW,COL")?;
    Ok((
        r.trim().parse().map_err(|_| "bad row")?,
        c.trim().parse().map_err(|_| "bad column")?,
    ))
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Continue from a checkpoint written at an epoch boundary.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: Split,
    /// Expected variant; a mismatch with the checkpoint is an error.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GradArgs {
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: Split,
    /// Dialog index within the split.
    #[arg(long, default_value_t = 0)]
    pub dialog: usize,
    #[arg(long)]
    pub step: usize,
    /// Replace the retrieved map by a one-hot map on ROW,COL.
    #[arg(long, value_parser = parse_cell)]
    pub override_cell: Option<(usize, usize)>,
    /// Accepted for symmetry; probe output is always JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: Split,
    #[arg(long, default_value_t = 3)]
    pub step: usize,
    #[arg(long, default_value_t = 1500)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: bool,
}

fn parse_split(s: &str) -> Result<Split, String> {
    Split::ALL
        .into_iter()
        .find(|x| x.name() == s)
        .ok_or_else(|| format!("unknown split {s:?}; expected train, val or test"))
}

fn print_json<V: serde::Serialize>(v: &V) {
    println!("{}", serde_json::to_string_pretty(v).expect("serialisable output"));
}

fn effective(cli: &Cli) -> LabResult<CliConfig> {
    let mut cfg = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    match &cli.command {
        Command::GenData(a) => {
            let d = &mut cfg.dataset;
            d.n_train = a.train.unwrap_or(d.n_train);
            d.n_val = a.val.unwrap_or(d.n_val);
            d.n_test = a.test.unwrap_or(d.n_test);
            d.dialogs_per_image = a.dialogs_per_image.unwrap_or(d.dialogs_per_image);
            d.base_seed = a.seed.unwrap_or(d.base_seed);
        }
        Command::Train(a) => {
            let t = &mut cfg.train;
            t.variant = a.variant.unwrap_or(t.variant);
            t.seed = a.seed.unwrap_or(t.seed);
            t.epochs = a.epochs.unwrap_or(t.epochs);
            t.batch_size = a.batch_size.unwrap_or(t.batch_size);
            t.lr = a.lr.unwrap_or(t.lr);
        }
        Command::Gradcheck(a) => {
            let g = &mut cfg.gradcheck;
            g.variant = a.variant.unwrap_or(g.variant);
            g.seed = a.seed.unwrap_or(g.seed);
            g.steps = a.steps.unwrap_or(g.steps);
        }
        Command::Eval(_) | Command::Probe(_) | Command::DumpWeights(_) => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load(path: &Path, cfg: &CliConfig) -> LabResult<amem_core::model::Model<f32>> {
    Ok(load_model(path, cfg.train.adam())?.0)
}

fn run(cli: Cli) -> LabResult<()> {
    let cfg = effective(&cli)?;
    eprintln!("effective config:\n{}", cfg.to_json());
    match cli.command {
        Command::GenData(a) => {
            let m = generate_dataset(&cfg.dataset, &a.out)?;
            eprintln!(
                "wrote {} / {} / {} dialogs to {}",
                m.counts.train_dialogs,
                m.counts.val_dialogs,
                m.counts.test_dialogs,
                a.out.display()
            );
        }
        Command::Train(a) => {
            let train_set = load_split(&a.data, Split::Train)?;
            let val_set = load_split(&a.data, Split::Val)?;
            let out = train(&cfg.train, &cfg.model, &train_set, &val_set, &a.out, a.resume.as_deref())?;
            eprintln!("final checkpoint: {}", out.final_checkpoint.display());
        }
        Command::Eval(a) => {
            let model = load(&a.checkpoint, &cfg)?;
            if let Some(v) = a.variant {
                if model.config().variant() != Some(v) {
                    return Err(LabError::Config(format!(
                        "checkpoint variant {:?} does not match requested {}",
                        model.config().variant().map(|v| v.name()),
                        v.name()
                    )));
                }
            }
            let samples = load_split(&a.data, a.split)?;
            let report = evaluate(&model, &samples, eval_threads())?;
            if a.json {
                print_json(&report);
            } else {
                println!("accuracy {:.4} over {} dialogs", report.accuracy, report.samples);
                let steps: Vec<String> = report.per_step.iter().map(|v| format!("{v:.3}")).collect();
                println!("per step {}", steps.join(" "));
                println!("loss {:.4}", report.loss);
                if let Some(t) = report.theta {
                    println!("theta {t:.4}");
                }
            }
        }
        Command::Gradcheck(a) => {
            let report = gradcheck(&cfg.gradcheck, None)?;
            if a.json {
                print_json(&report);
            } else {
                for g in &report.groups {
                    println!("{:<28} {:>6}  {:.3e}", g.name, g.elements, g.rel_error);
                }
                println!("max relative error {:.3e} (tolerance {:.0e})", report.max_rel_error, report.tolerance);
            }
            report.ensure_passed()?;
        }
        Command::Probe(a) => {
            let model = load(&a.checkpoint, &cfg)?;
            let samples = load_split(&a.data, a.split)?;
            let sample = samples
                .get(a.dialog)
                .ok_or_else(|| LabError::Usage(format!("dialog {} outside 0..{}", a.dialog, samples.len())))?;
            print_json(&probe(&model, sample, a.step, a.override_cell)?);
        }
        Command::DumpWeights(a) => {
            let model = load(&a.checkpoint, &cfg)?;
            let samples = load_split(&a.data, a.split)?;
            let rows = dump_dynamic_weights(&model, &samples, a.step, a.samples, a.seed)?;
            write_weight_rows(&a.out, &rows)?;
            if a.json {
                print_json(&serde_json::json!({ "rows": rows.len(), "path": a.out }));
            } else {
                println!("wrote {} rows to {}", rows.len(), a.out.display());
            }
        }
    }
    Ok(())
}

/// Parse `args`, run, and return the process exit code.
pub fn main_with<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
