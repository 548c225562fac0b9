use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;

use super::config::ModelConfig;
use super::dpl::hash_index;
use super::params::{Layer, MemoryIds, ModelParams};
use crate::dialog::{Answer, QaItem};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, HashIndex, ParamId, Tensor, Var};

/// Configuration, parameters and the fixed dynamic-weight hash tables.
#[derive(Debug, Clone)]
pub struct Model<T> {
    config: ModelConfig,
    params: ModelParams<T>,
    dpl: Arc<HashIndex>,
}

impl<T: Scalar> Model<T> {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = ModelParams::init(&config, seed)?;
        Self::new(config, params)
    }

    /// Pair `params` with `config`, checking that names and shapes match.
    pub fn new(config: ModelConfig, params: ModelParams<T>) -> Result<Self> {
        let layout = ModelParams::<T>::init(&config, 0)?;
        let same = layout.store.len() == params.store.len()
            && layout
                .store
                .iter()
                .zip(params.store.iter())
                .all(|((_, n1, t1), (_, n2, t2))| n1 == n2 && t1.shape() == t2.shape());
        if !same || layout.ids != params.ids {
            return Err(Error::Config("parameters do not match the model configuration".into()));
        }
        let cells = config.cells();
        let dpl = hash_index(cells, config.comb_conv_channels * cells, config.dpl_candidates);
        Ok(Self { config, params, dpl })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams<T> {
        &mut self.params
    }

    pub fn dpl_table(&self) -> &HashIndex {
        &self.dpl
    }

    /// Fresh graph bound to this model.
    pub fn session(&self) -> Session<'_, T> {
        Session {
            graph: Graph::new(),
            model: self,
        }
    }

    /// Same model in another element type.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            dpl: Arc::clone(&self.dpl),
        }
    }
}

/// Ordered `(attention map, key)` store. Entry 0 is the NULL pair.
#[derive(Debug)]
pub struct AttentionMemory {
    alphas: Vec<Var>,
    keys: Vec<Var>,
    reads: Cell<usize>,
}

impl AttentionMemory {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (Var, Var)> + '_ {
        self.alphas.iter().copied().zip(self.keys.iter().copied())
    }

    /// How many times addressing or retrieval has read the contents.
    pub fn reads(&self) -> usize {
        self.reads.get()
    }

    fn push(&mut self, alpha: Var, key: Var) {
        self.alphas.push(alpha);
        self.keys.push(key);
    }

    fn touch(&self) {
        self.reads.set(self.reads.get() + 1);
    }
}

/// Memory plus the running history encoder state of one dialog.
#[derive(Debug)]
pub struct DialogState {
    pub memory: AttentionMemory,
    history: Option<(Var, Var)>,
    answered: usize,
}

impl DialogState {
    /// Number of committed steps.
    pub fn answered(&self) -> usize {
        self.answered
    }
}

/// Every intermediate of one dialog step.
#[derive(Debug, Clone, Copy)]
pub struct StepOutput {
    pub question: Var,
    pub context: Var,
    pub alpha_tent: Var,
    pub beta: Option<Var>,
    pub alpha_mem: Option<Var>,
    pub key_mem: Var,
    pub alpha: Var,
    pub candidates: Option<Var>,
    pub encoding: Var,
    pub logits: Var,
}

/// One dialog recorded on a graph.
#[derive(Debug)]
pub struct DialogForward {
    pub features: Var,
    pub steps: Vec<StepOutput>,
    pub losses: Vec<Var>,
    pub loss: Var,
    pub state: DialogState,
}

/// Forward computations of a [`Model`] recorded on one graph.
pub struct Session<'m, T> {
    pub graph: Graph<T>,
    model: &'m Model<T>,
}

fn parse_answer(word: &str) -> Result<Answer> {
    Answer::from_word(word).ok_or_else(|| Error::Vocabulary(word.into()))
}

impl<T: Scalar> Session<'_, T> {
    pub fn model(&self) -> &Model<T> {
        self.model
    }

    fn p(&mut self, id: ParamId) -> Var {
        self.graph.param(&self.model.params.store, id)
    }

    fn dense(&mut self, layer: Layer, x: Var) -> Result<Var> {
        let (w, b) = (self.p(layer.weight), self.p(layer.bias));
        self.graph.linear(w, x, Some(b))
    }

    fn zeros(&mut self, n: usize) -> Var {
        self.graph.input(Tensor::zeros(&[n]))
    }

    fn memory_ids(&self) -> Result<MemoryIds> {
        self.model
            .params
            .ids
            .memory
            .ok_or_else(|| Error::Usage("the memory path is disabled in this model".into()))
    }

    fn cfg(&self) -> &ModelConfig {
        &self.model.config
    }

    /// CNN feature grid as a `[feat × cells]` matrix; column `n` is cell `n`
    /// in row-major order.
    pub fn extract_features(&mut self, image: &Tensor<T>) -> Result<Var> {
        let px = self.cfg().image_px;
        if image.shape() != [3, px, px] {
            return Err(Error::dim("extract_features", image.shape(), &[3, px, px]));
        }
        let mut x = self.graph.input(image.clone());
        for layer in self.model.params.ids.conv {
            let (k, b) = (self.p(layer.weight), self.p(layer.bias));
            let y = self.graph.conv2d(x, k, b)?;
            let y = self.graph.relu(y);
            x = self.graph.maxpool2x2(y)?;
        }
        let (feat, cells) = (self.cfg().feature_dim(), self.cfg().cells());
        self.graph.reshape(x, &[feat, cells])
    }

    /// Final hidden state of the question LSTM.
    pub fn encode_question(&mut self, tokens: &[&str]) -> Result<Var> {
        if tokens.is_empty() {
            return Err(Error::Usage("empty question".into()));
        }
        let rows = tokens
            .iter()
            .map(|t| crate::dialog::vocab::question_token(t).ok_or_else(|| Error::Vocabulary((*t).into())))
            .collect::<Result<Vec<_>>>()?;
        let ids = self.model.params.ids;
        let table = self.p(ids.question_embedding);
        let hd = self.cfg().hidden_dim;
        let (mut h, mut c) = (self.zeros(hd), self.zeros(hd));
        let (w, b) = (self.p(ids.question_lstm.weight), self.p(ids.question_lstm.bias));
        for row in rows {
            let x = self.graph.embedding(table, row)?;
            (h, c) = self.graph.lstm_step(x, h, c, w, b)?;
        }
        Ok(h)
    }

    fn answer_embedding(&mut self, answer: Answer) -> Result<Var> {
        let table = self.p(self.model.params.ids.answer_embedding);
        self.graph.embedding(table, answer.index())
    }

    /// Advance the history LSTM by one question/answer pair.
    fn history_step(&mut self, prev: Option<(Var, Var)>, question: Var, answer: Answer) -> Result<(Var, Var)> {
        let hist = self
            .model
            .params
            .ids
            .history
            .ok_or_else(|| Error::Usage("the history encoder is disabled in this model".into()))?;
        let a = self.answer_embedding(answer)?;
        let qa = self.graph.concat(&[question, a]);
        let qa = self.dense(hist.qa_fuse, qa)?;
        let qa = self.graph.tanh(qa);
        let hd = self.cfg().hidden_dim;
        let (h, c) = match prev {
            Some(s) => s,
            None => (self.zeros(hd), self.zeros(hd)),
        };
        let (w, b) = (self.p(hist.lstm.weight), self.p(hist.lstm.bias));
        self.graph.lstm_step(qa, h, c, w, b)
    }

    /// Hierarchical history encoding of `(question tokens, answer word)` pairs.
    /// An empty history encodes to zeros.
    pub fn encode_history(&mut self, pairs: &[(&[&str], &str)]) -> Result<Var> {
        let mut state = None;
        for (tokens, answer) in pairs {
            let answer = parse_answer(answer)?;
            let q = self.encode_question(tokens)?;
            state = Some(self.history_step(state, q, answer)?);
        }
        let hd = self.cfg().hidden_dim;
        Ok(match state {
            Some((h, _)) => h,
            None => self.zeros(hd),
        })
    }

    /// `c = tanh(fc(q ⊕ h))`, or `tanh(fc(q))` without history.
    pub fn fuse_context(&mut self, question: Var, history: Option<Var>) -> Result<Var> {
        if history.is_some() != self.cfg().use_history {
            return Err(Error::Usage(alloc::format!(
                "history encoding {} but use_history = {}",
                if history.is_some() { "given" } else { "missing" },
                self.cfg().use_history
            )));
        }
        let x = match history {
            Some(h) => self.graph.concat(&[question, h]),
            None => question,
        };
        let y = self.dense(self.model.params.ids.context, x)?;
        Ok(self.graph.tanh(y))
    }

    /// Softmax over `(W_c c)ᵀ (W_f f_n)` for every cell.
    pub fn tentative_attention(&mut self, context: Var, features: Var) -> Result<Var> {
        let ids = self.model.params.ids;
        let (wc, wf) = (self.p(ids.tent_context), self.p(ids.tent_feature));
        let pf = self.graph.matmul(wf, features)?;
        let pf = self.graph.transpose(pf)?;
        let pc = self.graph.linear(wc, context, None)?;
        let scores = self.graph.linear(pf, pc, None)?;
        self.graph.softmax(scores)
    }

    /// Addressing weights over every memory entry, NULL included.
    ///
    /// With the recency term the score of entry `j` gains `θ·d_j` where
    /// `d_j = len - j` and the NULL entry counts as the oldest (`d_0 = len`).
    pub fn address_memory(&mut self, context: Var, memory: &AttentionMemory) -> Result<Var> {
        let ids = self.memory_ids()?;
        memory.touch();
        let len = memory.len();
        let kd = self.cfg().key_dim;
        let keys = self.graph.concat(&memory.keys);
        let keys = self.graph.reshape(keys, &[len, kd])?;
        let w = self.p(ids.address);
        let m = self.graph.linear(w, context, None)?;
        let mut scores = self.graph.linear(keys, m, None)?;
        if self.cfg().use_seq_preference {
            let dist: Vec<f64> = (0..len).map(|j| if j == 0 { len } else { len - j } as f64).collect();
            let dist = self.graph.input(Tensor::vector(&dist));
            let theta = self.p(ids.theta);
            let bias = self.graph.scalar_mul(theta, dist)?;
            scores = self.graph.add(scores, bias)?;
        }
        self.graph.softmax(scores)
    }

    /// `(Σ β_τ α_τ, Σ β_τ k_τ)`.
    pub fn retrieve(&mut self, memory: &AttentionMemory, beta: Var) -> Result<(Var, Var)> {
        let len = memory.len();
        if self.graph.value(beta).len() != len {
            return Err(Error::dim("retrieve", self.graph.shape(beta), &[len]));
        }
        memory.touch();
        let (cells, kd) = (self.cfg().cells(), self.cfg().key_dim);
        let alphas = self.graph.concat(&memory.alphas);
        let alphas = self.graph.reshape(alphas, &[len, cells])?;
        let alphas = self.graph.transpose(alphas)?;
        let alpha = self.graph.linear(alphas, beta, None)?;
        let keys = self.graph.concat(&memory.keys);
        let keys = self.graph.reshape(keys, &[len, kd])?;
        let keys = self.graph.transpose(keys)?;
        let key = self.graph.linear(keys, beta, None)?;
        Ok((alpha, key))
    }

    /// Dynamic combination of the tentative and retrieved maps.
    ///
    /// Returns the final map and the predicted weight candidates.
    pub fn combine_attentions(&mut self, context: Var, tentative: Var, retrieved: Var) -> Result<(Var, Var)> {
        let ids = self.memory_ids()?;
        let (g, cells) = (self.cfg().grid_side(), self.cfg().cells());
        for v in [tentative, retrieved] {
            if self.graph.value(v).len() != cells {
                return Err(Error::dim("combine_attentions", self.graph.shape(v), &[cells]));
            }
        }
        let stacked = self.graph.concat(&[tentative, retrieved]);
        let stacked = self.graph.reshape(stacked, &[2, g, g])?;
        let (k, b) = (self.p(ids.comb_conv.weight), self.p(ids.comb_conv.bias));
        let gamma = self.graph.conv2d(stacked, k, b)?;
        let gamma = self.graph.relu(gamma);
        let gamma = self.graph.reshape(gamma, &[self.cfg().comb_conv_channels * cells])?;
        let candidates = self.dense(ids.candidates, context)?;
        let table = Arc::clone(&self.model.dpl);
        let logits = self.graph.hashed_matvec(candidates, gamma, &table)?;
        Ok((self.graph.softmax(logits)?, candidates))
    }

    /// `fᵀ α`: attention-weighted sum of cell features.
    pub fn attend_features(&mut self, alpha: Var, features: Var) -> Result<Var> {
        self.graph.linear(features, alpha, None)
    }

    /// `tanh(fc(f_att ⊕ c ⊕ α ⊕ k_mem))`.
    pub fn fuse_encoding(&mut self, attended: Var, context: Var, alpha: Var, key: Var) -> Result<Var> {
        let x = self.graph.concat(&[attended, context, alpha, key]);
        let y = self.dense(self.model.params.ids.encoding, x)?;
        Ok(self.graph.tanh(y))
    }

    /// Answer logits.
    pub fn decode_answer(&mut self, encoding: Var) -> Result<Var> {
        self.dense(self.model.params.ids.decoder, encoding)
    }

    /// Memory key `tanh(fc(c ⊕ embed(answer)))`.
    pub fn generate_key(&mut self, context: Var, answer: &str) -> Result<Var> {
        let answer = parse_answer(answer)?;
        self.key_for(context, answer)
    }

    fn key_for(&mut self, context: Var, answer: Answer) -> Result<Var> {
        let ids = self.memory_ids()?;
        let a = self.answer_embedding(answer)?;
        let x = self.graph.concat(&[context, a]);
        let y = self.dense(ids.key, x)?;
        Ok(self.graph.tanh(y))
    }

    /// Empty history and a memory holding only the NULL entry.
    pub fn new_state(&mut self) -> DialogState {
        let (cells, kd) = (self.cfg().cells(), self.cfg().key_dim);
        let alpha = self.zeros(cells);
        let key = match self.model.params.ids.memory {
            Some(m) => self.p(m.null_key),
            None => self.zeros(kd),
        };
        DialogState {
            memory: AttentionMemory {
                alphas: vec![alpha],
                keys: vec![key],
                reads: Cell::new(0),
            },
            history: None,
            answered: 0,
        }
    }

    fn step_inner(
        &mut self,
        state: &DialogState,
        features: Var,
        tokens: &[&str],
        replacement: Option<&[f64]>,
    ) -> Result<StepOutput> {
        let question = self.encode_question(tokens)?;
        let history = if self.cfg().use_history {
            let hd = self.cfg().hidden_dim;
            Some(match state.history {
                Some((h, _)) => h,
                None => self.zeros(hd),
            })
        } else {
            None
        };
        let context = self.fuse_context(question, history)?;
        let alpha_tent = self.tentative_attention(context, features)?;
        let (beta, alpha_mem, key_mem, alpha, candidates) = if self.cfg().use_memory {
            let beta = self.address_memory(context, &state.memory)?;
            let (retrieved, key) = self.retrieve(&state.memory, beta)?;
            let used = match replacement {
                Some(r) => self.graph.input(Tensor::vector(r)),
                None => retrieved,
            };
            let (alpha, candidates) = self.combine_attentions(context, alpha_tent, used)?;
            (Some(beta), Some(used), key, alpha, Some(candidates))
        } else {
            if replacement.is_some() {
                return Err(Error::Usage("retrieval override needs the memory path".into()));
            }
            let kd = self.cfg().key_dim;
            (None, None, self.zeros(kd), alpha_tent, None)
        };
        let attended = self.attend_features(alpha, features)?;
        let encoding = self.fuse_encoding(attended, context, alpha, key_mem)?;
        let logits = self.decode_answer(encoding)?;
        Ok(StepOutput {
            question,
            context,
            alpha_tent,
            beta,
            alpha_mem,
            key_mem,
            alpha,
            candidates,
            encoding,
            logits,
        })
    }

    /// Predict the answer of the next question without touching `state`.
    pub fn step(&mut self, state: &DialogState, features: Var, tokens: &[&str]) -> Result<StepOutput> {
        self.step_inner(state, features, tokens, None)
    }

    /// Record the ground-truth answer of a step: append `(α_t, key)` to the
    /// memory and the pair to the history.
    pub fn commit(&mut self, state: &mut DialogState, out: &StepOutput, answer: Answer) -> Result<()> {
        let key = if self.cfg().use_memory {
            self.key_for(out.context, answer)?
        } else {
            let kd = self.cfg().key_dim;
            self.zeros(kd)
        };
        state.memory.push(out.alpha, key);
        if self.cfg().use_history {
            state.history = Some(self.history_step(state.history, out.question, answer)?);
        }
        state.answered += 1;
        Ok(())
    }

    /// [`Session::step`] followed by [`Session::commit`].
    pub fn dialog_step(
        &mut self,
        state: &mut DialogState,
        features: Var,
        tokens: &[&str],
        answer: Answer,
    ) -> Result<StepOutput> {
        let out = self.step(state, features, tokens)?;
        self.commit(state, &out, answer)?;
        Ok(out)
    }

    /// Re-run a step with the retrieved map replaced by `replacement`.
    ///
    /// The replacement may be a sub-distribution, like the true retrieved map
    /// when the NULL entry carries weight. `state` is left untouched.
    pub fn override_retrieval(
        &mut self,
        state: &DialogState,
        features: Var,
        tokens: &[&str],
        replacement: &[f64],
    ) -> Result<StepOutput> {
        let cells = self.cfg().cells();
        if replacement.len() != cells {
            return Err(Error::Validation(alloc::format!(
                "replacement has {} cells, expected {cells}",
                replacement.len()
            )));
        }
        let total: f64 = replacement.iter().sum();
        if replacement.iter().any(|v| !v.is_finite() || *v < 0.0) || total > 1.0 + 1e-6 {
            return Err(Error::Validation(
                "replacement must be nonnegative with total mass at most 1".into(),
            ));
        }
        self.step_inner(state, features, tokens, Some(replacement))
    }

    /// Teacher-forced pass over a whole dialog; the loss is the sum of the
    /// per-step cross entropies.
    pub fn forward_dialog(&mut self, image: &Tensor<T>, items: &[QaItem]) -> Result<DialogForward> {
        if items.is_empty() {
            return Err(Error::Usage("empty dialog".into()));
        }
        let features = self.extract_features(image)?;
        let mut state = self.new_state();
        let mut steps = Vec::with_capacity(items.len());
        let mut losses = Vec::with_capacity(items.len());
        for item in items {
            let out = self.dialog_step(&mut state, features, &item.tokens, item.answer)?;
            losses.push(self.graph.cross_entropy(out.logits, item.answer.index())?);
            steps.push(out);
        }
        let all = self.graph.concat(&losses);
        let loss = self.graph.sum(all);
        Ok(DialogForward {
            features,
            steps,
            losses,
            loss,
            state,
        })
    }
}
