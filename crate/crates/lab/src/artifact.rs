//! Model checkpoints: parameters plus the metadata needed to rebuild the
//! model and resume training.
//!
//! Extra tensors next to the parameters:
//!
//! | name | content |
//! |---|---|
//! | `meta.flags` | `[use_history, use_seq_preference, use_memory]` as 0/1 |
//! | `meta.dims` | word, hidden, key, joint, conv×4, image, candidates, comb channels, encoding, question vocab, answers |
//! | `meta.epoch` | completed epochs |
//! | `adam.step` | optimizer step counter |
//! | `adam.m.<param>` / `adam.v.<param>` | optimizer moments |

use std::fs;
use std::path::Path;

use amem_core::model::{Model, ModelConfig, ModelParams};
use amem_core::tensor::checkpoint::Checkpoint;
use amem_core::tensor::{AdamConfig, AdamState, Tensor};

use crate::error::{LabError, LabResult};

/// Optimizer progress stored alongside the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub epoch: usize,
    pub adam: AdamState<f32>,
}

fn config_tensors(cfg: &ModelConfig) -> (Tensor<f32>, Tensor<f32>) {
    let flags = [cfg.use_history, cfg.use_seq_preference, cfg.use_memory].map(|b| b as u8 as f64);
    let mut dims = vec![cfg.word_dim, cfg.hidden_dim, cfg.key_dim, cfg.joint_dim];
    dims.extend(&cfg.conv_channels);
    dims.extend([
        cfg.image_px,
        cfg.dpl_candidates,
        cfg.comb_conv_channels,
        cfg.encoding_dim,
        cfg.question_vocab,
        cfg.num_answers,
    ]);
    let dims: Vec<f64> = dims.into_iter().map(|d| d as f64).collect();
    (Tensor::vector(&flags), Tensor::vector(&dims))
}

fn config_from(ck: &Checkpoint) -> LabResult<ModelConfig> {
    let missing = |n: &str| LabError::Config(format!("checkpoint lacks {n}"));
    let flags = ck.get("meta.flags").ok_or_else(|| missing("meta.flags"))?.data();
    let dims = ck.get("meta.dims").ok_or_else(|| missing("meta.dims"))?.data();
    if flags.len() != 3 || dims.len() != 14 {
        return Err(LabError::Config("malformed checkpoint metadata".into()));
    }
    let d: Vec<usize> = dims.iter().map(|v| *v as usize).collect();
    Ok(ModelConfig {
        use_history: flags[0] != 0.0,
        use_seq_preference: flags[1] != 0.0,
        use_memory: flags[2] != 0.0,
        word_dim: d[0],
        hidden_dim: d[1],
        key_dim: d[2],
        joint_dim: d[3],
        conv_channels: d[4..8].to_vec(),
        image_px: d[8],
        dpl_candidates: d[9],
        comb_conv_channels: d[10],
        encoding_dim: d[11],
        question_vocab: d[12],
        num_answers: d[13],
    })
}

/// Serialise a model and optionally its optimizer state.
pub fn encode_model(model: &Model<f32>, training: Option<&TrainingState>) -> Vec<u8> {
    let store = &model.params().store;
    let mut ck = Checkpoint::from_params(store);
    let (flags, dims) = config_tensors(model.config());
    ck.push("meta.flags", &flags);
    ck.push("meta.dims", &dims);
    if let Some(t) = training {
        ck.push("meta.epoch", &Tensor::<f32>::vector(&[t.epoch as f64]));
        ck.push("adam.step", &Tensor::<f32>::vector(&[t.adam.step_count() as f64]));
        for id in store.ids() {
            let shape = store.value(id).shape();
            let name = store.name(id);
            if let (Some(m), Some(v)) = (t.adam.first_moment(id), t.adam.second_moment(id)) {
                ck.push(&format!("adam.m.{name}"), &Tensor::from_slice(shape, m).expect("moment shape"));
                ck.push(&format!("adam.v.{name}"), &Tensor::from_slice(shape, v).expect("moment shape"));
            }
        }
    }
    ck.encode()
}

/// Rebuild a model; the optimizer state is returned when present.
pub fn decode_model(bytes: &[u8], adam: AdamConfig) -> LabResult<(Model<f32>, Option<TrainingState>)> {
    let ck = Checkpoint::decode(bytes)?;
    let config = config_from(&ck)?;
    let mut params = ModelParams::<f32>::init(&config, 0)?;
    ck.load_params(&mut params.store)?;
    let model = Model::new(config, params)?;
    let training = match (ck.get("meta.epoch"), ck.get("adam.step")) {
        (Some(epoch), Some(step)) => {
            let store = &model.params().store;
            let mut first = Vec::with_capacity(store.len());
            let mut second = Vec::with_capacity(store.len());
            for id in store.ids() {
                let name = store.name(id);
                let get = |kind: &str| {
                    ck.get(&format!("adam.{kind}.{name}"))
                        .filter(|t| t.shape() == store.value(id).shape())
                        .map(|t| t.data().to_vec())
                        .ok_or_else(|| LabError::Config(format!("checkpoint lacks adam.{kind}.{name}")))
                };
                first.push(get("m")?);
                second.push(get("v")?);
            }
            let mut state = AdamState::new(adam);
            state.restore(step.data()[0] as u64, first, second);
            Some(TrainingState {
                epoch: epoch.data()[0] as usize,
                adam: state,
            })
        }
        _ => None,
    };
    Ok((model, training))
}

pub fn save_model(path: &Path, model: &Model<f32>, training: Option<&TrainingState>) -> LabResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    fs::write(path, encode_model(model, training)).map_err(|e| LabError::io(path, e))
}

pub fn load_model(path: &Path, adam: AdamConfig) -> LabResult<(Model<f32>, Option<TrainingState>)> {
    let bytes = fs::read(path).map_err(|e| LabError::io(path, e))?;
    decode_model(&bytes, adam)
}
