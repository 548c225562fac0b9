//! Attention probes and dynamic-weight dumps.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use amem_core::dialog::{render, Answer, QuestionKind};
use amem_core::model::{Model, Session, StepOutput};
use amem_core::rng::SplitMix64;
use amem_core::tensor::Var;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{LabError, LabResult};

/// Attention maps and prediction of one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMaps {
    pub alpha_tent: Vec<f64>,
    pub beta: Option<Vec<f64>>,
    pub alpha_mem: Option<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub logits: Vec<f64>,
    pub predicted: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeBundle {
    pub world_id: String,
    pub step: usize,
    pub question: String,
    pub answer: String,
    pub original: StepMaps,
    pub override_cell: Option<[usize; 2]>,
    pub modified: Option<StepMaps>,
}

fn maps(s: &Session<'_, f32>, out: &StepOutput) -> StepMaps {
    let v = |x: Var| s.graph.value(x).to_f64_vec();
    let logits = s.graph.value(out.logits);
    StepMaps {
        alpha_tent: v(out.alpha_tent),
        beta: out.beta.map(v),
        alpha_mem: out.alpha_mem.map(v),
        alpha: v(out.alpha),
        logits: logits.to_f64_vec(),
        predicted: Answer::from_index(logits.argmax()).map(|a| a.word()).unwrap_or("?").to_string(),
    }
}

fn check_step(sample: &Sample, step: usize) -> LabResult<()> {
    let len = sample.dialog.items.len();
    if step >= len {
        return Err(LabError::Usage(format!("step {step} outside 0..{len}")));
    }
    Ok(())
}

/// Replay `sample` with ground-truth history up to `step`, then report that
/// step's attention maps. With `override_cell = (row, col)` the retrieved map
/// is also replaced by a one-hot map on that cell.
pub fn probe(model: &Model<f32>, sample: &Sample, step: usize, override_cell: Option<(usize, usize)>) -> LabResult<ProbeBundle> {
    check_step(sample, step)?;
    let side = model.config().grid_side();
    if let Some((r, c)) = override_cell {
        if r >= side || c >= side {
            return Err(LabError::Usage(format!("cell ({r}, {c}) outside the {side}×{side} grid")));
        }
        if !model.config().use_memory {
            return Err(LabError::Usage("overrides need a model with attention memory".into()));
        }
    }
    let items = &sample.dialog.items;
    let image = render::<f32>(&sample.world);
    let mut s = model.session();
    let features = s.extract_features(&image)?;
    let mut state = s.new_state();
    for item in &items[..step] {
        s.dialog_step(&mut state, features, &item.tokens, item.answer)?;
    }
    let item = &items[step];
    let out = s.step(&state, features, &item.tokens)?;
    let original = maps(&s, &out);
    let modified = match override_cell {
        Some((r, c)) => {
            let mut onehot = vec![0.0; side * side];
            onehot[r * side + c] = 1.0;
            let m = s.override_retrieval(&state, features, &item.tokens, &onehot)?;
            Some(maps(&s, &m))
        }
        None => None,
    };
    Ok(ProbeBundle {
        world_id: sample.world_id.clone(),
        step,
        question: item.tokens.join(" "),
        answer: item.answer.word().to_string(),
        original,
        override_cell: override_cell.map(|(r, c)| [r, c]),
        modified,
    })
}

/// One row of the dynamic-weight dump.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRow {
    pub world_id: String,
    pub kind: QuestionKind,
    pub candidates: Vec<f32>,
}

/// Predicted weight candidates at `step` for `n` dialogs drawn without
/// replacement (order fixed by `seed`).
pub fn dump_dynamic_weights(model: &Model<f32>, samples: &[Sample], step: usize, n: usize, seed: u64) -> LabResult<Vec<WeightRow>> {
    if !model.config().use_memory {
        return Err(LabError::Usage("dynamic weights exist only with attention memory".into()));
    }
    if n > samples.len() {
        return Err(LabError::Usage(format!("requested {n} samples but the dataset has {}", samples.len())));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    SplitMix64::derive(seed, 0xD09).shuffle(&mut order);
    let mut rows = Vec::with_capacity(n);
    for &i in &order[..n] {
        let sample = &samples[i];
        check_step(sample, step)?;
        let items = &sample.dialog.items;
        let image = render::<f32>(&sample.world);
        let mut s = model.session();
        let features = s.extract_features(&image)?;
        let mut state = s.new_state();
        for item in &items[..step] {
            s.dialog_step(&mut state, features, &item.tokens, item.answer)?;
        }
        let out = s.step(&state, features, &items[step].tokens)?;
        let cand = out.candidates.expect("memory models predict candidates");
        rows.push(WeightRow {
            world_id: sample.world_id.clone(),
            kind: items[step].ast.kind,
            candidates: s.graph.data(cand).to_vec(),
        });
    }
    Ok(rows)
}

/// CSV with columns `label,world_id,w0,…`.
pub fn write_weight_rows(path: &Path, rows: &[WeightRow]) -> LabResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| LabError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let width = rows.first().map(|r| r.candidates.len()).unwrap_or(0);
    let io = |e| LabError::io(path, e);
    write!(w, "label,world_id").map_err(io)?;
    for j in 0..width {
        write!(w, ",w{j}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for r in rows {
        let label = match r.kind {
            QuestionKind::Count => "Count",
            QuestionKind::Attribute => "Attribute",
        };
        write!(w, "{label},{}", r.world_id).map_err(io)?;
        for v in &r.candidates {
            write!(w, ",{v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}
