//! Ten-question dialogs with a running target set.

use alloc::vec::Vec;

use super::ast::{Attribute, AttrValue, Direction, QuestionAst, QuestionKind, Scope};
use super::oracle::{answer_oracle, Resolution};
use super::surface::realize_surface;
use super::vocab::Answer;
use super::world::{BgColor, Color, GridWorld, Pos, Style};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const DIALOG_LEN: usize = 10;

/// Knobs of the question sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct GeneratorConfig {
    /// Probability of a counting question (otherwise attribute).
    pub count_prob: f64,
    /// Probability of referring back when a previous target set exists.
    pub follow_up_prob: f64,
    /// Probability of a spatial relation when the previous target is a single cell.
    pub relation_prob: f64,
    /// Probability that count predicate values are drawn uniformly instead of
    /// from a cell in scope (the only way to obtain a "zero" answer).
    pub uniform_predicate_prob: f64,
    /// Probability that a count predicate has two conjuncts instead of one.
    pub two_conjunct_count_prob: f64,
    /// Rejected proposals tolerated per question before giving up.
    pub max_rejections: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            count_prob: 0.4,
            follow_up_prob: 0.95,
            relation_prob: 0.5,
            uniform_predicate_prob: 0.15,
            two_conjunct_count_prob: 0.3,
            max_rejections: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaItem {
    pub ast: QuestionAst,
    pub tokens: Vec<&'static str>,
    pub answer: Answer,
    /// Cells the question resolves to, sorted row-major.
    pub targets: Vec<Pos>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialog {
    pub world_seed: u64,
    pub seed: u64,
    pub items: Vec<QaItem>,
}

impl Dialog {
    /// Target set each question may refer back to (empty for the first).
    pub fn antecedents(&self, step: usize) -> &[Pos] {
        if step == 0 {
            &[]
        } else {
            &self.items[step - 1].targets
        }
    }

    /// Re-run the oracle on every item.
    pub fn verify(&self, world: &GridWorld) -> Result<()> {
        if self.items.len() != DIALOG_LEN {
            return Err(Error::Validation(alloc::format!("dialog has {} items", self.items.len())));
        }
        if self.items[0].ast.requires_history {
            return Err(Error::Validation("first question refers back".into()));
        }
        for (i, item) in self.items.iter().enumerate() {
            let r = answer_oracle(world, self.antecedents(i), &item.ast)?;
            if r.answer != item.answer || r.targets != item.targets {
                return Err(Error::Validation(alloc::format!("item {i} disagrees with the oracle")));
            }
        }
        Ok(())
    }
}

fn random_value(attr: Attribute, rng: &mut SplitMix64) -> AttrValue {
    match attr {
        Attribute::Color => AttrValue::Color(Color::ALL[rng.below(5)]),
        Attribute::Bgcolor => AttrValue::Bgcolor(BgColor::ALL[rng.below(5)]),
        Attribute::Number => AttrValue::Number(rng.below(10) as u8),
        Attribute::Style => AttrValue::Style(Style::ALL[rng.below(2)]),
    }
}

/// `n` distinct attributes, none equal to `exclude`.
fn pick_attributes(n: usize, exclude: Option<Attribute>, rng: &mut SplitMix64) -> Vec<Attribute> {
    let mut pool: Vec<Attribute> = Attribute::ALL.iter().copied().filter(|a| Some(*a) != exclude).collect();
    rng.shuffle(&mut pool);
    pool.truncate(n);
    pool.sort();
    pool
}

struct Sampler<'a> {
    world: &'a GridWorld,
    cfg: &'a GeneratorConfig,
    rng: SplitMix64,
}

impl Sampler<'_> {
    fn count(&mut self, scope: Scope, targets: &[Pos]) -> Option<QuestionAst> {
        let n = 1 + self.rng.bernoulli(self.cfg.two_conjunct_count_prob) as usize;
        let attrs = pick_attributes(n, None, &mut self.rng);
        let predicate = if self.rng.bernoulli(self.cfg.uniform_predicate_prob) {
            attrs.iter().map(|a| random_value(*a, &mut self.rng)).collect()
        } else {
            let anchor = match scope {
                Scope::WholeImage => Pos::from_index(self.rng.below(16)),
                Scope::PreviousTargets => *self.rng.choose(targets)?,
            };
            attrs.iter().map(|a| a.of(self.world.cell(anchor))).collect()
        };
        Some(QuestionAst::count(predicate, scope))
    }

    fn attribute(&mut self, follow: bool, targets: &[Pos]) -> Option<QuestionAst> {
        let queried = Attribute::ALL[self.rng.below(4)];
        if follow && targets.len() == 1 {
            if self.rng.bernoulli(self.cfg.relation_prob) {
                return Some(QuestionAst::relation(queried, Direction::ALL[self.rng.below(4)]));
            }
            let n = self.rng.below(2);
            let predicate = pick_attributes(n, Some(queried), &mut self.rng)
                .into_iter()
                .map(|a| a.of(self.world.cell(targets[0])))
                .collect();
            return Some(QuestionAst::attribute(queried, predicate, Scope::PreviousTargets));
        }
        let (scope, pool): (Scope, Vec<Pos>) = if follow {
            (Scope::PreviousTargets, targets.to_vec())
        } else {
            (Scope::WholeImage, GridWorld::positions().collect())
        };
        let target = *self.rng.choose(&pool)?;
        let n = 1 + self.rng.below(2);
        let predicate = pick_attributes(n, Some(queried), &mut self.rng)
            .into_iter()
            .map(|a| a.of(self.world.cell(target)))
            .collect();
        Some(QuestionAst::attribute(queried, predicate, scope))
    }

    /// Follow-ups on a single previous target are attribute questions.
    fn propose(&mut self, follow: bool, targets: &[Pos]) -> Option<QuestionAst> {
        let count_ok = !follow || targets.len() > 1;
        if self.rng.bernoulli(self.cfg.count_prob) && count_ok {
            let scope = if follow { Scope::PreviousTargets } else { Scope::WholeImage };
            self.count(scope, targets)
        } else {
            self.attribute(follow, targets)
        }
    }
}

/// Sample a ten-question dialog about `world`.
///
/// Proposals the oracle cannot answer (ambiguous attribute targets, missing
/// neighbours, a count of sixteen) are rejected and resampled.
pub fn generate_dialog(world: &GridWorld, seed: u64, cfg: &GeneratorConfig) -> Result<Dialog> {
    let mut sampler = Sampler {
        world,
        cfg,
        rng: SplitMix64::new(seed),
    };
    let mut items = Vec::with_capacity(DIALOG_LEN);
    let mut targets: Vec<Pos> = Vec::new();
    for step in 0..DIALOG_LEN {
        let mut rejections = 0;
        let wants_follow = step > 0 && !targets.is_empty() && sampler.rng.bernoulli(cfg.follow_up_prob);
        let (ast, Resolution { answer, targets: resolved }) = loop {
            if rejections >= cfg.max_rejections {
                return Err(Error::Generation(rejections));
            }
            let follow = wants_follow && rejections < cfg.max_rejections / 2;
            let accepted = sampler
                .propose(follow, &targets)
                .and_then(|ast| answer_oracle(world, &targets, &ast).ok().map(|r| (ast, r)));
            match accepted {
                Some(ok) => break ok,
                None => rejections += 1,
            }
        };
        let tokens = realize_surface(&ast);
        items.push(QaItem {
            ast,
            tokens,
            answer,
            targets: resolved.clone(),
        });
        targets = resolved;
    }
    Ok(Dialog {
        world_seed: world.seed,
        seed,
        items,
    })
}

/// Fraction of questions that need dialog history.
pub fn ambiguity_rate<'a>(dialogs: impl IntoIterator<Item = &'a Dialog>) -> Option<f64> {
    let (mut total, mut hist) = (0usize, 0usize);
    for d in dialogs {
        for item in &d.items {
            total += 1;
            hist += item.ast.requires_history as usize;
        }
    }
    (total > 0).then(|| hist as f64 / total as f64)
}

pub fn count_kind(dialog: &Dialog, kind: QuestionKind) -> usize {
    dialog.items.iter().filter(|i| i.ast.kind == kind).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dialogs_are_valid_and_deterministic() {
        let cfg = GeneratorConfig::default();
        for seed in 0..200u64 {
            let world = GridWorld::generate(seed);
            let d = generate_dialog(&world, seed * 31 + 7, &cfg).unwrap();
            assert_eq!(d, generate_dialog(&world, seed * 31 + 7, &cfg).unwrap());
            assert_eq!(d.items.len(), DIALOG_LEN);
            assert!(!d.items[0].ast.requires_history);
            d.verify(&world).unwrap();
            for (i, item) in d.items.iter().enumerate() {
                item.ast.validate().unwrap();
                if item.ast.requires_history {
                    assert!(!d.antecedents(i).is_empty());
                }
                if item.ast.kind == QuestionKind::Attribute {
                    assert_eq!(item.targets.len(), 1);
                }
            }
        }
    }

    #[test]
    fn ambiguity_rate_of_hand_built_dialogs() {
        let world = GridWorld::generate(1);
        let mut d = generate_dialog(&world, 1, &GeneratorConfig::default()).unwrap();
        d.items.truncate(2);
        d.items[0].ast.requires_history = false;
        d.items[1].ast.requires_history = true;
        assert_eq!(ambiguity_rate([&d]), Some(0.5));
        d.items.truncate(1);
        assert_eq!(ambiguity_rate([&d]), Some(0.0));
        assert_eq!(ambiguity_rate(core::iter::empty()), None);
    }

    #[test]
    fn impossible_config_surfaces_generation_error() {
        let world = GridWorld::generate(3);
        let cfg = GeneratorConfig {
            max_rejections: 0,
            ..GeneratorConfig::default()
        };
        assert!(matches!(generate_dialog(&world, 3, &cfg), Err(Error::Generation(0))));
    }
}
