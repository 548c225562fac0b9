use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::{ParamId, ParamStore, Tensor};

/// Weight/bias pair of a dense or convolutional layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layer {
    pub weight: ParamId,
    pub bias: ParamId,
}

/// Parameters of the memory path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryIds {
    pub address: ParamId,
    pub theta: ParamId,
    pub null_key: ParamId,
    pub comb_conv: Layer,
    pub candidates: Layer,
    pub key: Layer,
}

/// Parameters of the history encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistoryIds {
    pub qa_fuse: Layer,
    pub lstm: Layer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamIds {
    pub conv: [Layer; 4],
    pub question_embedding: ParamId,
    pub answer_embedding: ParamId,
    pub question_lstm: Layer,
    pub history: Option<HistoryIds>,
    pub context: Layer,
    pub tent_context: ParamId,
    pub tent_feature: ParamId,
    pub memory: Option<MemoryIds>,
    pub encoding: Layer,
    pub decoder: Layer,
}

/// All learnable tensors of a model, addressed by canonical names.
///
/// | name | shape |
/// |---|---|
/// | `cnn.conv{1..4}.weight` / `.bias` | `[c_out, c_in, 3, 3]` / `[c_out]` |
/// | `embed.question` | `[question_vocab, word]` |
/// | `embed.answer` | `[38, word]` |
/// | `question_lstm.weight` / `.bias` | `[4h, word + h]` / `[4h]` |
/// | `history.qa_fuse.weight` / `.bias` | `[h, h + word]` / `[h]` |
/// | `history.lstm.weight` / `.bias` | `[4h, 2h]` / `[4h]` |
/// | `context.weight` / `.bias` | `[h, h or 2h]` / `[h]` |
/// | `tentative.context` | `[joint, h]` |
/// | `tentative.feature` | `[joint, feat]` |
/// | `memory.address` | `[key, h]` |
/// | `memory.theta` | `[1]` |
/// | `memory.null_key` | `[key]` |
/// | `combine.conv.weight` / `.bias` | `[8, 2, 3, 3]` / `[8]` |
/// | `combine.candidates.weight` / `.bias` | `[512, h]` / `[512]` |
/// | `key.weight` / `.bias` | `[key, h + word]` / `[key]` |
/// | `encoding.weight` / `.bias` | `[enc, feat + h + cells + key]` / `[enc]` |
/// | `decoder.weight` / `.bias` | `[38, enc]` / `[38]` |
///
/// History and memory entries exist only when the variant uses them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub store: ParamStore<T>,
    pub ids: ParamIds,
}

fn name_label(name: &str) -> u64 {
    name.bytes()
        .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01B3))
}

struct Builder<'a, T> {
    store: ParamStore<T>,
    seed: u64,
    _cfg: &'a ModelConfig,
}

impl<T: Scalar> Builder<'_, T> {
    fn rng(&self, name: &str) -> SplitMix64 {
        SplitMix64::derive(self.seed, name_label(name))
    }

    fn xavier(&mut self, name: &str, shape: &[usize], fan_in: usize, fan_out: usize) -> ParamId {
        let mut rng = self.rng(name);
        self.store.add_xavier(name, shape, fan_in, fan_out, &mut rng)
    }

    fn dense(&mut self, prefix: &str, out: usize, inp: usize) -> Layer {
        Layer {
            weight: self.xavier(&format!("{prefix}.weight"), &[out, inp], inp, out),
            bias: self.store.add_const(&format!("{prefix}.bias"), &[out], 0.0),
        }
    }

    fn conv(&mut self, prefix: &str, c_out: usize, c_in: usize) -> Layer {
        Layer {
            weight: self.xavier(&format!("{prefix}.weight"), &[c_out, c_in, 3, 3], c_in * 9, c_out * 9),
            bias: self.store.add_const(&format!("{prefix}.bias"), &[c_out], 0.0),
        }
    }

    fn lstm(&mut self, prefix: &str, inp: usize, hidden: usize) -> Layer {
        let weight = self.xavier(&format!("{prefix}.weight"), &[4 * hidden, inp + hidden], inp + hidden, hidden);
        let bias = self.store.add_const(&format!("{prefix}.bias"), &[4 * hidden], 0.0);
        for v in &mut self.store.value_mut(bias).data_mut()[hidden..2 * hidden] {
            *v = T::one();
        }
        Layer { weight, bias }
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Fresh parameters. Each tensor draws from its own stream derived from
    /// `(seed, name)`.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (w, h, k) = (cfg.word_dim, cfg.hidden_dim, cfg.key_dim);
        let feat = cfg.feature_dim();
        let mut b = Builder {
            store: ParamStore::new(),
            seed,
            _cfg: cfg,
        };
        let ch = &cfg.conv_channels;
        let conv = [
            b.conv("cnn.conv1", ch[0], 3),
            b.conv("cnn.conv2", ch[1], ch[0]),
            b.conv("cnn.conv3", ch[2], ch[1]),
            b.conv("cnn.conv4", ch[3], ch[2]),
        ];
        let question_embedding = b.xavier("embed.question", &[cfg.question_vocab, w], cfg.question_vocab, w);
        let answer_embedding = b.xavier("embed.answer", &[cfg.num_answers, w], cfg.num_answers, w);
        let question_lstm = b.lstm("question_lstm", w, h);
        let history = cfg.use_history.then(|| HistoryIds {
            qa_fuse: b.dense("history.qa_fuse", h, h + w),
            lstm: b.lstm("history.lstm", h, h),
        });
        let context = b.dense("context", h, if cfg.use_history { 2 * h } else { h });
        let tent_context = b.xavier("tentative.context", &[cfg.joint_dim, h], h, cfg.joint_dim);
        let tent_feature = b.xavier("tentative.feature", &[cfg.joint_dim, feat], feat, cfg.joint_dim);
        let memory = cfg.use_memory.then(|| {
            let address = b.xavier("memory.address", &[k, h], h, k);
            let theta = b.store.add_const("memory.theta", &[1], 0.0);
            let null_key = b.store.add_const("memory.null_key", &[k], 0.0);
            let comb_conv = b.conv("combine.conv", cfg.comb_conv_channels, 2);
            let candidates = b.dense("combine.candidates", cfg.dpl_candidates, h);
            let key = b.dense("key", k, h + w);
            MemoryIds {
                address,
                theta,
                null_key,
                comb_conv,
                candidates,
                key,
            }
        });
        let encoding = b.dense("encoding", cfg.encoding_dim, feat + h + cfg.cells() + k);
        let decoder = b.dense("decoder", cfg.num_answers, cfg.encoding_dim);
        Ok(Self {
            store: b.store,
            ids: ParamIds {
                conv,
                question_embedding,
                answer_embedding,
                question_lstm,
                history,
                context,
                tent_context,
                tent_feature,
                memory,
                encoding,
                decoder,
            },
        })
    }

    /// Same layout in another element type.
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            store: self.store.cast(),
            ids: self.ids,
        }
    }

    pub fn theta(&self) -> Option<f64> {
        self.ids.memory.map(|m| self.store.value(m.theta).data()[0].as_f64())
    }

    pub fn names(&self) -> Vec<String> {
        self.store.iter().map(|(_, n, _)| String::from(n)).collect()
    }

    /// Overwrite values from `(name, tensor)` pairs; every parameter must be present.
    pub fn load<'a>(&mut self, tensors: impl IntoIterator<Item = (&'a str, Tensor<T>)>) -> Result<()> {
        let mut seen = alloc::vec![false; self.store.len()];
        for (name, t) in tensors {
            if let Some(id) = self.store.find(name) {
                self.store.assign(name, t)?;
                seen[id.index()] = true;
            }
        }
        let missing: Vec<&str> = self
            .store
            .ids()
            .filter(|id| !seen[id.index()])
            .map(|id| self.store.name(id))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("missing parameters: {}", missing.join(", "))))
        }
    }
}
