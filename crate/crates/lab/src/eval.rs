//! Ground-truth-history evaluation.

use amem_core::dialog::{render, DIALOG_LEN};
use amem_core::model::Model;
use amem_core::Scalar;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{LabError, LabResult};

/// Per-step outputs of a predictor on one dialog.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogPrediction {
    pub predicted: Vec<usize>,
    pub losses: Vec<f64>,
    /// Memory addressing weights per step, when the model has a memory.
    pub betas: Vec<Option<Vec<f64>>>,
}

/// Anything that answers every question of a dialog given the true history.
pub trait Predictor: Sync {
    fn predict(&self, sample: &Sample) -> LabResult<DialogPrediction>;

    fn theta(&self) -> Option<f64> {
        None
    }
}

impl<T: Scalar> Predictor for Model<T> {
    fn predict(&self, sample: &Sample) -> LabResult<DialogPrediction> {
        let image = render::<T>(&sample.world);
        let mut s = self.session();
        let f = s.forward_dialog(&image, &sample.dialog.items)?;
        let g = &s.graph;
        Ok(DialogPrediction {
            predicted: f.steps.iter().map(|o| g.value(o.logits).argmax()).collect(),
            losses: f.losses.iter().map(|l| g.data(*l)[0].as_f64()).collect(),
            betas: f
                .steps
                .iter()
                .map(|o| o.beta.map(|b| g.value(b).to_f64_vec()))
                .collect(),
        })
    }

    fn theta(&self) -> Option<f64> {
        self.params().theta()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean of the per-step accuracies.
    pub accuracy: f64,
    pub per_step: Vec<f64>,
    /// Mean cross entropy per question.
    pub loss: f64,
    pub theta: Option<f64>,
    /// Row `s` is the mean addressing mass at step `s`: entry 0 is the NULL
    /// slot, entry `d` the memory written `d` steps earlier. Empty without memory.
    pub beta_by_distance: Vec<Vec<f64>>,
    pub samples: usize,
}

/// Worker count: `AMEM_THREADS` when set, else the available parallelism.
pub fn eval_threads() -> usize {
    std::env::var("AMEM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn predict_all<P: Predictor + ?Sized>(predictor: &P, samples: &[Sample], threads: usize) -> LabResult<Vec<DialogPrediction>> {
    let threads = threads.clamp(1, samples.len().max(1));
    if threads == 1 {
        return samples.iter().map(|s| predictor.predict(s)).collect();
    }
    let chunk = samples.len().div_ceil(threads);
    let parts: Vec<LabResult<Vec<DialogPrediction>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = samples
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|s| predictor.predict(s)).collect()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(samples.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Accuracy per step, loss and addressing profile over `samples`.
pub fn evaluate<P: Predictor + ?Sized>(predictor: &P, samples: &[Sample], threads: usize) -> LabResult<EvalReport> {
    if samples.is_empty() {
        return Err(LabError::Usage("cannot evaluate an empty dataset".into()));
    }
    let preds = predict_all(predictor, samples, threads)?;
    let mut correct = [0usize; DIALOG_LEN];
    let mut loss = 0.0;
    let mut beta_sum: Vec<Vec<f64>> = (0..DIALOG_LEN).map(|s| vec![0.0; s + 1]).collect();
    let mut beta_count = 0usize;
    for (sample, pred) in samples.iter().zip(&preds) {
        let items = &sample.dialog.items;
        if items.len() != DIALOG_LEN || pred.predicted.len() != DIALOG_LEN {
            return Err(LabError::Config(format!("{} does not have {DIALOG_LEN} steps", sample.world_id)));
        }
        for (s, item) in items.iter().enumerate() {
            correct[s] += (pred.predicted[s] == item.answer.index()) as usize;
        }
        loss += pred.losses.iter().sum::<f64>();
        if pred.betas.iter().all(|b| b.is_some()) {
            beta_count += 1;
            for (s, beta) in pred.betas.iter().enumerate() {
                let beta = beta.as_ref().expect("checked above");
                let row = &mut beta_sum[s];
                row[0] += beta[0];
                for d in 1..=s {
                    row[d] += beta[s + 1 - d];
                }
            }
        }
    }
    let n = samples.len() as f64;
    let per_step: Vec<f64> = correct.iter().map(|c| *c as f64 / n).collect();
    let beta_by_distance = if beta_count == samples.len() {
        beta_sum
            .into_iter()
            .map(|row| row.into_iter().map(|v| v / n).collect())
            .collect()
    } else {
        Vec::new()
    };
    Ok(EvalReport {
        accuracy: per_step.iter().sum::<f64>() / DIALOG_LEN as f64,
        per_step,
        loss: loss / (n * DIALOG_LEN as f64),
        theta: predictor.theta(),
        beta_by_distance,
        samples: samples.len(),
    })
}
