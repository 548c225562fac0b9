//! Brute-force answer evaluator shared by test targets.

use amem_core::dialog::{AttrValue, Attribute, Direction, GridWorld, Pos, QuestionAst, QuestionKind, Scope};

/// Brute-force evaluation straight from the grid: enumerate all sixteen
/// cells, keep the ones in scope that satisfy every conjunct.
pub fn brute_force(world: &GridWorld, prior: &[Pos], ast: &QuestionAst) -> (String, Vec<(usize, usize)>) {
    let in_prior = |r: usize, c: usize| prior.iter().any(|p| p.row as usize == r && p.col as usize == c);
    let holds = |r: usize, c: usize| {
        let cell = &world.cells[r * 4 + c];
        ast.predicate.iter().all(|v| match *v {
            AttrValue::Color(x) => cell.color == x,
            AttrValue::Bgcolor(x) => cell.bgcolor == x,
            AttrValue::Number(x) => cell.number == x,
            AttrValue::Style(x) => cell.style == x,
        })
    };
    let mut chosen = Vec::new();
    match ast.relation {
        Some(dir) => {
            assert_eq!(prior.len(), 1);
            let (r, c) = (prior[0].row as i32, prior[0].col as i32);
            let (dr, dc) = match dir {
                Direction::Left => (0, -1),
                Direction::Right => (0, 1),
                Direction::Above => (-1, 0),
                Direction::Below => (1, 0),
            };
            let (nr, nc) = (r + dr, c + dc);
            assert!((0..4).contains(&nr) && (0..4).contains(&nc));
            assert!(holds(nr as usize, nc as usize));
            chosen.push((nr as usize, nc as usize));
        }
        None => {
            for r in 0..4 {
                for c in 0..4 {
                    let in_scope = ast.scope == Scope::WholeImage || in_prior(r, c);
                    if in_scope && holds(r, c) {
                        chosen.push((r, c));
                    }
                }
            }
        }
    }
    let words = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
        "thirteen", "fourteen", "fifteen",
    ];
    let answer = match ast.kind {
        QuestionKind::Count => words[chosen.len()].to_string(),
        QuestionKind::Attribute => {
            assert_eq!(chosen.len(), 1, "attribute target must be unique");
            let cell = &world.cells[chosen[0].0 * 4 + chosen[0].1];
            match ast.queried_attribute.unwrap() {
                Attribute::Color => cell.color.word().to_string(),
                Attribute::Bgcolor => cell.bgcolor.word().to_string(),
                Attribute::Number => cell.number.to_string(),
                Attribute::Style => cell.style.word().to_string(),
            }
        }
    };
    (answer, chosen)
}
