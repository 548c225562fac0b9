//! Teacher-forced training with Adam.

use std::fs;
use std::path::{Path, PathBuf};

use amem_core::dialog::render;
use amem_core::model::{Model, ModelConfig, Variant};
use amem_core::rng::SplitMix64;
use amem_core::tensor::{AdamConfig, AdamState};
use serde::{Deserialize, Serialize};

use crate::artifact::{load_model, save_model, TrainingState};
use crate::dataset::{save_json, Sample};
use crate::error::{LabError, LabResult};
use crate::eval::{eval_threads, evaluate, EvalReport};

pub const METRICS_FILE: &str = "metrics.csv";
pub const PER_STEP_FILE: &str = "per_step.json";
pub const FINAL_CHECKPOINT: &str = "final.amem";
const METRICS_HEADER: &str = "epoch,train_loss,val_acc,theta";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Dialogs per optimizer step.
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub variant: Variant,
    /// Write a checkpoint every this many epochs (the last epoch always gets one).
    pub checkpoint_every: usize,
    /// Evaluation workers; `None` defers to `AMEM_THREADS`.
    pub eval_threads: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 1e-4,
            seed: 0,
            variant: Variant::AmemHSeq,
            checkpoint_every: 1,
            eval_threads: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> LabResult<()> {
        let mut bad = Vec::new();
        if self.epochs == 0 {
            bad.push("epochs must be positive");
        }
        if self.batch_size == 0 {
            bad.push("batch_size must be positive");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            bad.push("lr must be positive");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            bad.push("weight_decay must be nonnegative");
        }
        if self.checkpoint_every == 0 {
            bad.push("checkpoint_every must be positive");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(LabError::Config(bad.join("; ")))
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    fn threads(&self) -> usize {
        self.eval_threads.unwrap_or_else(eval_threads)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAccuracy {
    pub epoch: usize,
    pub accuracy: f64,
    pub per_step: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model<f32>,
    pub final_checkpoint: PathBuf,
    pub metrics: Vec<MetricsRow>,
    pub per_step: Vec<StepAccuracy>,
    pub val_report: EvalReport,
}

pub fn checkpoint_path(out_dir: &Path, epoch: usize) -> PathBuf {
    out_dir.join("checkpoints").join(format!("epoch-{epoch:03}.amem"))
}

fn write_metrics(out_dir: &Path, rows: &[MetricsRow], steps: &[StepAccuracy]) -> LabResult<()> {
    let path = out_dir.join(METRICS_FILE);
    let mut text = String::from(METRICS_HEADER);
    text.push('\n');
    for r in rows {
        let theta = r.theta.map(|t| t.to_string()).unwrap_or_default();
        text.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_acc, theta));
    }
    fs::write(&path, text).map_err(|e| LabError::io(&path, e))?;
    save_json(&out_dir.join(PER_STEP_FILE), &steps)
}

/// Parse a metrics CSV written by this module.
pub fn read_metrics(path: &Path) -> LabResult<Vec<MetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(LabError::Config(format!("{}: unexpected header", path.display())));
    }
    let bad = |l: &str| LabError::Config(format!("{}: malformed row {l:?}", path.display()));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 {
                return Err(bad(l));
            }
            Ok(MetricsRow {
                epoch: f[0].parse().map_err(|_| bad(l))?,
                train_loss: f[1].parse().map_err(|_| bad(l))?,
                val_acc: f[2].parse().map_err(|_| bad(l))?,
                theta: if f[3].is_empty() {
                    None
                } else {
                    Some(f[3].parse().map_err(|_| bad(l))?)
                },
            })
        })
        .collect()
}

fn read_per_step(path: &Path) -> LabResult<Vec<StepAccuracy>> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| LabError::json(path.display().to_string(), e))
}

/// Order of the training dialogs in `epoch` (1-based).
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::derive(seed, epoch as u64).shuffle(&mut order);
    order
}

/// Forward, backward and gradient accumulation for one dialog; returns the loss.
pub fn accumulate_dialog(model: &mut Model<f32>, sample: &Sample) -> LabResult<f64> {
    let image = render::<f32>(&sample.world);
    let mut s = model.session();
    let f = s.forward_dialog(&image, &sample.dialog.items)?;
    let loss = s.graph.data(f.loss)[0] as f64;
    if !loss.is_finite() {
        return Ok(loss);
    }
    s.graph.backward(f.loss)?;
    let graph = s.graph;
    graph.accumulate_param_grads(&mut model.params_mut().store);
    Ok(loss)
}

/// Train `model_cfg` (with the variant of `cfg`) on `train`, validating on
/// `val` after every epoch. Outputs go to `out_dir`.
pub fn train(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    train: &[Sample],
    val: &[Sample],
    out_dir: &Path,
    resume: Option<&Path>,
) -> LabResult<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(LabError::Usage("training and validation sets must be nonempty".into()));
    }
    let model_cfg = model_cfg.clone().with_variant(cfg.variant);
    model_cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| LabError::io(out_dir, e))?;

    let (mut model, mut adam, start, mut rows, mut steps) = match resume {
        Some(path) => {
            let (model, state) = load_model(path, cfg.adam())?;
            let state = state.ok_or_else(|| LabError::Config(format!("{} has no optimizer state", path.display())))?;
            if model.config() != &model_cfg {
                return Err(LabError::Config(format!(
                    "{} was trained with a different model configuration",
                    path.display()
                )));
            }
            let keep = |e: usize| e <= state.epoch;
            let rows = match read_metrics(&out_dir.join(METRICS_FILE)) {
                Ok(r) => r.into_iter().filter(|r| keep(r.epoch)).collect(),
                Err(_) => Vec::new(),
            };
            let steps = match read_per_step(&out_dir.join(PER_STEP_FILE)) {
                Ok(s) => s.into_iter().filter(|s| keep(s.epoch)).collect(),
                Err(_) => Vec::new(),
            };
            (model, state.adam, state.epoch, rows, steps)
        }
        None => {
            let model = Model::<f32>::init(model_cfg.clone(), cfg.seed)?;
            let mut adam = AdamState::new(cfg.adam());
            adam.init(&model.params().store);
            (model, adam, 0, Vec::new(), Vec::new())
        }
    };

    let threads = cfg.threads();
    let mut last_good = resume.map(Path::to_path_buf);
    let mut report = None;
    for epoch in start + 1..=cfg.epochs {
        let order = epoch_order(cfg.seed, epoch, train.len());
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.params_mut().store.zero_grad();
            for &i in batch {
                let loss = match accumulate_dialog(&mut model, &train[i]) {
                    Err(LabError::Core(amem_core::Error::Numeric { .. })) => f64::NAN,
                    r => r?,
                };
                if !loss.is_finite() {
                    return Err(LabError::Divergence {
                        epoch,
                        dialog: i,
                        loss,
                        last_good,
                    });
                }
                total += loss;
            }
            let store = &mut model.params_mut().store;
            store.scale_grads(1.0 / batch.len() as f32);
            adam.step(store)?;
        }
        model.params_mut().store.zero_grad();
        let val_report = evaluate(&model, val, threads)?;
        let row = MetricsRow {
            epoch,
            train_loss: total / train.len() as f64,
            val_acc: val_report.accuracy,
            theta: model.params().theta(),
        };
        eprintln!(
            "epoch {epoch:>3}  train_loss {:.4}  val_acc {:.4}{}",
            row.train_loss,
            row.val_acc,
            row.theta.map(|t| format!("  theta {t:.4}")).unwrap_or_default()
        );
        rows.push(row);
        steps.push(StepAccuracy {
            epoch,
            accuracy: val_report.accuracy,
            per_step: val_report.per_step.clone(),
        });
        write_metrics(out_dir, &rows, &steps)?;
        if epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs {
            let path = checkpoint_path(out_dir, epoch);
            let state = TrainingState {
                epoch,
                adam: adam.clone(),
            };
            save_model(&path, &model, Some(&state))?;
            last_good = Some(path);
        }
        report = Some(val_report);
    }
    let val_report = match report {
        Some(r) => r,
        None => evaluate(&model, val, threads)?,
    };
    let final_checkpoint = out_dir.join(FINAL_CHECKPOINT);
    save_model(&final_checkpoint, &model, None)?;
    if rows.is_empty() {
        write_metrics(out_dir, &rows, &steps)?;
    }
    Ok(TrainOutcome {
        model,
        final_checkpoint,
        metrics: rows,
        per_step: steps,
        val_report,
    })
}
