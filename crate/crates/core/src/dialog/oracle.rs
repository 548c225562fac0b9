use alloc::string::ToString;
use alloc::vec::Vec;

use super::ast::{AttrValue, QuestionAst, QuestionKind, Scope};
use super::vocab::Answer;
use super::world::{GridWorld, Pos};
use crate::error::{Error, Result};

/// Answer plus the cells the question resolved to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    pub answer: Answer,
    /// Sorted row-major.
    pub targets: Vec<Pos>,
}

/// Ground-truth answer of `ast` on `world` given the previous target set.
pub fn answer_oracle(world: &GridWorld, prior_targets: &[Pos], ast: &QuestionAst) -> Result<Resolution> {
    ast.validate()?;
    let scope: Vec<Pos> = match ast.scope {
        Scope::WholeImage => GridWorld::positions().collect(),
        Scope::PreviousTargets => {
            if prior_targets.is_empty() {
                return Err(Error::Resolution("no previous targets".to_string()));
            }
            let mut s = prior_targets.to_vec();
            s.sort();
            s.dedup();
            s
        }
    };

    if let Some(dir) = ast.relation {
        let [anchor] = scope.as_slice() else {
            return Err(Error::Resolution(alloc::format!(
                "relation needs a single anchor, have {}",
                scope.len()
            )));
        };
        let target = dir
            .neighbor(*anchor)
            .ok_or_else(|| Error::Resolution(alloc::format!("no cell {} of {:?}", dir.word(), anchor)))?;
        if !ast.selects(world.cell(target)) {
            return Err(Error::Resolution("related cell fails the predicate".to_string()));
        }
        return Ok(Resolution {
            answer: attribute_answer(world, target, ast)?,
            targets: alloc::vec![target],
        });
    }

    let selected: Vec<Pos> = scope.into_iter().filter(|p| ast.selects(world.cell(*p))).collect();
    match ast.kind {
        QuestionKind::Count => {
            let answer = Answer::count(selected.len())
                .ok_or_else(|| Error::Validation(alloc::format!("count {} is outside the vocabulary", selected.len())))?;
            Ok(Resolution {
                answer,
                targets: selected,
            })
        }
        QuestionKind::Attribute => {
            if selected.len() != 1 {
                return Err(Error::Ambiguity(selected.len()));
            }
            Ok(Resolution {
                answer: attribute_answer(world, selected[0], ast)?,
                targets: selected,
            })
        }
    }
}

fn attribute_answer(world: &GridWorld, target: Pos, ast: &QuestionAst) -> Result<Answer> {
    let attr = ast
        .queried_attribute
        .ok_or_else(|| Error::Validation("attribute question without queried attribute".to_string()))?;
    Ok(value_answer(attr.of(world.cell(target))))
}

pub(crate) fn value_answer(v: AttrValue) -> Answer {
    match v {
        AttrValue::Color(c) => Answer::color(c),
        AttrValue::Bgcolor(c) => Answer::bgcolor(c),
        AttrValue::Number(n) => Answer::number(n),
        AttrValue::Style(s) => Answer::style(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::ast::{Attribute, Direction};
    use crate::dialog::world::{BgColor, Color, DigitCell, Style, CELLS};

    fn plain_world() -> GridWorld {
        let cell = DigitCell {
            color: Color::Blue,
            bgcolor: BgColor::Cyan,
            number: 1,
            style: Style::Flat,
        };
        GridWorld {
            seed: 0,
            cells: [cell; CELLS],
        }
    }

    #[test]
    fn count_with_no_match_is_zero() {
        let w = plain_world();
        let ast = QuestionAst::count(alloc::vec![AttrValue::Color(Color::Red)], Scope::WholeImage);
        let r = answer_oracle(&w, &[], &ast).unwrap();
        assert_eq!(r.answer.word(), "zero");
        assert!(r.targets.is_empty());
    }

    #[test]
    fn relation_left_of_singleton() {
        let mut w = plain_world();
        w.cells[Pos::new(2, 2).index()].number = 4;
        let ast = QuestionAst::relation(Attribute::Number, Direction::Left);
        let r = answer_oracle(&w, &[Pos::new(2, 3)], &ast).unwrap();
        assert_eq!(r.answer.word(), "4");
        assert_eq!(r.targets, [Pos::new(2, 2)]);
    }

    #[test]
    fn missing_neighbor_is_a_resolution_error() {
        let w = plain_world();
        let ast = QuestionAst::relation(Attribute::Color, Direction::Above);
        assert!(matches!(answer_oracle(&w, &[Pos::new(0, 1)], &ast), Err(Error::Resolution(_))));
    }

    #[test]
    fn non_unique_attribute_target_is_ambiguous() {
        let w = plain_world();
        let ast = QuestionAst::attribute(Attribute::Style, alloc::vec![AttrValue::Color(Color::Blue)], Scope::WholeImage);
        assert_eq!(answer_oracle(&w, &[], &ast), Err(Error::Ambiguity(16)));
    }

    #[test]
    fn sixteen_is_outside_the_vocabulary() {
        let w = plain_world();
        let ast = QuestionAst::count(alloc::vec![AttrValue::Number(1)], Scope::WholeImage);
        assert!(answer_oracle(&w, &[], &ast).is_err());
    }

    #[test]
    fn follow_up_needs_targets() {
        let w = plain_world();
        let ast = QuestionAst::count(alloc::vec![AttrValue::Number(1)], Scope::PreviousTargets);
        assert!(matches!(answer_oracle(&w, &[], &ast), Err(Error::Resolution(_))));
    }
}
