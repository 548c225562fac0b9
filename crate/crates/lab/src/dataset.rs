//! JSONL dataset files and the manifest.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use amem_core::dialog::vocab::question_token;
use amem_core::dialog::{
    generate_dialog, Answer, Dialog, DigitCell, GeneratorConfig, GridWorld, Pos, QaItem, QuestionAst, ANSWER_WORDS,
    GRID, QUESTION_WORDS,
};
use amem_core::rng::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

pub const DATASET_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    /// Offset added to the base seed; ranges of 2^40 images never overlap.
    pub fn seed_offset(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1 << 40,
            Split::Test => 2 << 40,
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.jsonl", self.name())
    }
}

/// One dialog together with the world it talks about.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub world_id: String,
    pub world: GridWorld,
    pub dialog: Dialog,
}

#[derive(Debug, Serialize, Deserialize)]
struct ItemRecord {
    q_tokens: Vec<String>,
    q_ast: QuestionAst,
    answer: String,
    requires_history: bool,
    targets: Vec<[u8; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DialogRecord {
    world_id: String,
    image_seed: u64,
    dialog_seed: u64,
    grid: Vec<Vec<DigitCell>>,
    dialog: Vec<ItemRecord>,
}

impl Sample {
    fn to_record(&self) -> DialogRecord {
        DialogRecord {
            world_id: self.world_id.clone(),
            image_seed: self.world.seed,
            dialog_seed: self.dialog.seed,
            grid: self.world.cells.chunks(GRID).map(|r| r.to_vec()).collect(),
            dialog: self
                .dialog
                .items
                .iter()
                .map(|it| ItemRecord {
                    q_tokens: it.tokens.iter().map(|t| t.to_string()).collect(),
                    q_ast: it.ast.clone(),
                    answer: it.answer.word().to_string(),
                    requires_history: it.ast.requires_history,
                    targets: it.targets.iter().map(|p| [p.row, p.col]).collect(),
                })
                .collect(),
        }
    }

    fn from_record(r: DialogRecord) -> LabResult<Self> {
        let bad = |m: String| LabError::Config(format!("{}: {m}", r.world_id));
        if r.grid.len() != GRID || r.grid.iter().any(|row| row.len() != GRID) {
            return Err(bad("grid is not 4×4".into()));
        }
        let flat: Vec<DigitCell> = r.grid.iter().flatten().copied().collect();
        let world = GridWorld {
            seed: r.image_seed,
            cells: flat.try_into().map_err(|_| bad("grid size".into()))?,
        };
        let mut items = Vec::with_capacity(r.dialog.len());
        for it in &r.dialog {
            let tokens = it
                .q_tokens
                .iter()
                .map(|t| {
                    question_token(t)
                        .map(|i| QUESTION_WORDS[i])
                        .ok_or_else(|| bad(format!("question word {t:?} is not in the vocabulary")))
                })
                .collect::<LabResult<Vec<_>>>()?;
            let answer = Answer::from_word(&it.answer)
                .ok_or_else(|| bad(format!("answer {:?} is not in the vocabulary", it.answer)))?;
            if it.requires_history != it.q_ast.requires_history {
                return Err(bad("requires_history disagrees with the AST".into()));
            }
            let targets = it
                .targets
                .iter()
                .map(|[row, col]| {
                    if (*row as usize) < GRID && (*col as usize) < GRID {
                        Ok(Pos::new(*row as usize, *col as usize))
                    } else {
                        Err(bad(format!("target ({row}, {col}) outside the grid")))
                    }
                })
                .collect::<LabResult<Vec<_>>>()?;
            items.push(QaItem {
                ast: it.q_ast.clone(),
                tokens,
                answer,
                targets,
            });
        }
        let dialog = Dialog {
            world_seed: r.image_seed,
            seed: r.dialog_seed,
            items,
        };
        dialog.verify(&world)?;
        Ok(Sample {
            world_id: r.world_id,
            world,
            dialog,
        })
    }
}

/// Sizes and seeds of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub dialogs_per_image: usize,
    pub base_seed: u64,
    pub generator: GeneratorConfig,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_train: 3000,
            n_val: 500,
            n_test: 500,
            dialogs_per_image: 3,
            base_seed: 0,
            generator: GeneratorConfig::default(),
        }
    }
}

impl DatasetSpec {
    pub fn images(&self, split: Split) -> usize {
        match split {
            Split::Train => self.n_train,
            Split::Val => self.n_val,
            Split::Test => self.n_test,
        }
    }

    pub fn validate(&self) -> LabResult<()> {
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 || self.dialogs_per_image == 0 {
            return Err(LabError::Usage("split sizes and dialogs per image must be at least 1".into()));
        }
        if [self.n_train, self.n_val, self.n_test].iter().any(|n| *n as u64 >= 1 << 40) {
            return Err(LabError::Usage("split sizes must stay below 2^40".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub train_images: usize,
    pub val_images: usize,
    pub test_images: usize,
    pub dialogs_per_image: usize,
    pub train_dialogs: usize,
    pub val_dialogs: usize,
    pub test_dialogs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub vocab: Vec<String>,
    pub question_vocab: Vec<String>,
    pub counts: Counts,
    pub config: DatasetSpec,
}

impl Manifest {
    /// Reject files produced with a different vocabulary.
    pub fn check_vocab(&self) -> LabResult<()> {
        if self.version != DATASET_VERSION {
            return Err(LabError::Config(format!("dataset version {} is not supported", self.version)));
        }
        if self.vocab != ANSWER_WORDS || self.question_vocab != QUESTION_WORDS {
            return Err(LabError::Config("dataset vocabulary does not match this build".into()));
        }
        Ok(())
    }
}

/// Image seed of the `i`-th image of a split.
pub fn image_seed(base_seed: u64, split: Split, i: usize) -> u64 {
    base_seed.wrapping_add(split.seed_offset()).wrapping_add(i as u64)
}

/// Seed of dialog `k` about the image with `image_seed`.
pub fn dialog_seed(image_seed: u64, k: usize) -> u64 {
    SplitMix64::derive(image_seed, k as u64).next_u64()
}

/// All dialogs of one split, in file order.
pub fn generate_split(spec: &DatasetSpec, split: Split) -> LabResult<Vec<Sample>> {
    let mut out = Vec::with_capacity(spec.images(split) * spec.dialogs_per_image);
    for i in 0..spec.images(split) {
        let seed = image_seed(spec.base_seed, split, i);
        let world = GridWorld::generate(seed);
        for k in 0..spec.dialogs_per_image {
            let dialog = generate_dialog(&world, dialog_seed(seed, k), &spec.generator)?;
            out.push(Sample {
                world_id: format!("{}/{i:06}", split.name()),
                world: world.clone(),
                dialog,
            });
        }
    }
    Ok(out)
}

pub fn write_jsonl(path: &Path, samples: &[Sample]) -> LabResult<()> {
    let file = fs::File::create(path).map_err(|e| LabError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        serde_json::to_writer(&mut w, &s.to_record()).map_err(|e| LabError::json(path.display().to_string(), e))?;
        w.write_all(b"\n").map_err(|e| LabError::io(path, e))?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

/// Parse and validate a JSONL split (every answer is re-checked by the oracle).
pub fn read_jsonl(path: &Path) -> LabResult<Vec<Sample>> {
    let file = fs::File::open(path).map_err(|e| LabError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LabError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DialogRecord = serde_json::from_str(&line)
            .map_err(|e| LabError::json(format!("{}:{}", path.display(), n + 1), e))?;
        out.push(Sample::from_record(rec)?);
    }
    Ok(out)
}

fn write_json<V: Serialize>(path: &Path, value: &V) -> LabResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| LabError::json(path.display().to_string(), e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

/// Write `train.jsonl`, `val.jsonl`, `test.jsonl` and `manifest.json` into `dir`.
pub fn generate_dataset(spec: &DatasetSpec, dir: &Path) -> LabResult<Manifest> {
    spec.validate()?;
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let mut dialogs = [0usize; 3];
    for (slot, split) in Split::ALL.into_iter().enumerate() {
        let samples = generate_split(spec, split)?;
        dialogs[slot] = samples.len();
        write_jsonl(&dir.join(split.file_name()), &samples)?;
    }
    let manifest = Manifest {
        version: DATASET_VERSION,
        vocab: ANSWER_WORDS.iter().map(|w| w.to_string()).collect(),
        question_vocab: QUESTION_WORDS.iter().map(|w| w.to_string()).collect(),
        counts: Counts {
            train_images: spec.n_train,
            val_images: spec.n_val,
            test_images: spec.n_test,
            dialogs_per_image: spec.dialogs_per_image,
            train_dialogs: dialogs[0],
            val_dialogs: dialogs[1],
            test_dialogs: dialogs[2],
        },
        config: spec.clone(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> LabResult<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| LabError::json(path.display().to_string(), e))?;
    m.check_vocab()?;
    Ok(m)
}

/// Load one split after checking the manifest.
pub fn load_split(dir: &Path, split: Split) -> LabResult<Vec<Sample>> {
    read_manifest(dir)?;
    read_jsonl(&dir.join(split.file_name()))
}

pub(crate) fn save_json<V: Serialize>(path: &Path, value: &V) -> LabResult<()> {
    write_json(path, value)
}
