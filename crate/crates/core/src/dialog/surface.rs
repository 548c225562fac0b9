//! Closed template grammar turning an AST into lowercase tokens.
//!
//! * `how many <np> are there in the image ?`
//! * `how many <np> are there among them ?`
//! * `what is the <attr> of the <np> ?`
//! * `what is the <attr> of the digit at the <dir> of it ?`

use alloc::vec::Vec;

use super::ast::{Attribute, AttrValue, QuestionAst, QuestionKind, Scope};
use super::vocab::DIGIT_WORDS;

fn attribute_words(a: Attribute) -> &'static [&'static str] {
    match a {
        Attribute::Color => &["color"],
        Attribute::Bgcolor => &["background", "color"],
        Attribute::Number => &["number"],
        Attribute::Style => &["style"],
    }
}

/// `[style] [color] (N | digit) [on <bg> background]`, pluralised for counts.
fn noun_phrase(predicate: &[AttrValue], plural: bool, out: &mut Vec<&'static str>) {
    let find = |a: Attribute| predicate.iter().copied().find(|p| p.attribute() == a);
    if let Some(AttrValue::Style(s)) = find(Attribute::Style) {
        out.push(s.word());
    }
    if let Some(AttrValue::Color(c)) = find(Attribute::Color) {
        out.push(c.word());
    }
    match find(Attribute::Number) {
        Some(AttrValue::Number(n)) => {
            out.push(DIGIT_WORDS[n as usize]);
            if plural {
                out.push("s");
            }
        }
        _ => out.push(if plural { "digits" } else { "digit" }),
    }
    if let Some(AttrValue::Bgcolor(b)) = find(Attribute::Bgcolor) {
        out.extend(["on", b.word(), "background"]);
    }
}

/// Surface tokens of a question.
pub fn realize_surface(ast: &QuestionAst) -> Vec<&'static str> {
    let mut t = Vec::with_capacity(14);
    match ast.kind {
        QuestionKind::Count => {
            t.extend(["how", "many"]);
            noun_phrase(&ast.predicate, true, &mut t);
            t.extend(["are", "there"]);
            match ast.scope {
                Scope::WholeImage => t.extend(["in", "the", "image"]),
                Scope::PreviousTargets => t.extend(["among", "them"]),
            }
        }
        QuestionKind::Attribute => {
            t.extend(["what", "is", "the"]);
            if let Some(a) = ast.queried_attribute {
                t.extend_from_slice(attribute_words(a));
            }
            t.extend(["of", "the"]);
            match ast.relation {
                Some(dir) => t.extend(["digit", "at", "the", dir.word(), "of", "it"]),
                None => noun_phrase(&ast.predicate, false, &mut t),
            }
        }
    }
    t.push("?");
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::ast::Direction;
    use crate::dialog::world::{BgColor, Color};
    use alloc::vec;

    #[test]
    fn count_whole_image_phrase() {
        let ast = QuestionAst::count(vec![AttrValue::Number(9)], Scope::WholeImage);
        assert_eq!(
            realize_surface(&ast),
            ["how", "many", "9", "s", "are", "there", "in", "the", "image", "?"]
        );
    }

    #[test]
    fn count_follow_up_phrase() {
        let ast = QuestionAst::count(vec![AttrValue::Color(Color::Brown)], Scope::PreviousTargets);
        assert_eq!(
            realize_surface(&ast),
            ["how", "many", "brown", "digits", "are", "there", "among", "them", "?"]
        );
    }

    #[test]
    fn attribute_follow_up_phrase() {
        let ast = QuestionAst::attribute(Attribute::Style, vec![], Scope::PreviousTargets);
        assert_eq!(realize_surface(&ast), ["what", "is", "the", "style", "of", "the", "digit", "?"]);
    }

    #[test]
    fn relation_phrase() {
        let ast = QuestionAst::relation(Attribute::Bgcolor, Direction::Left);
        assert_eq!(
            realize_surface(&ast).join(" "),
            "what is the background color of the digit at the left of it ?"
        );
    }

    #[test]
    fn background_predicate_phrase() {
        let ast = QuestionAst::attribute(
            Attribute::Number,
            vec![AttrValue::Bgcolor(BgColor::White), AttrValue::Color(Color::Blue)],
            Scope::WholeImage,
        );
        assert_eq!(
            realize_surface(&ast).join(" "),
            "what is the number of the blue digit on white background ?"
        );
    }
}
