use alloc::vec::Vec;

use super::world::{BgColor, Color, DigitCell, Pos, Style, GRID};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum QuestionKind {
    Count,
    Attribute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Attribute {
    Color,
    Bgcolor,
    Number,
    Style,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [Attribute::Color, Attribute::Bgcolor, Attribute::Number, Attribute::Style];

    /// The attribute's value on `cell`.
    pub fn of(self, cell: &DigitCell) -> AttrValue {
        match self {
            Attribute::Color => AttrValue::Color(cell.color),
            Attribute::Bgcolor => AttrValue::Bgcolor(cell.bgcolor),
            Attribute::Number => AttrValue::Number(cell.number),
            Attribute::Style => AttrValue::Style(cell.style),
        }
    }
}

/// One `(attribute, value)` conjunct of a predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "attr", content = "value", rename_all = "lowercase"))]
pub enum AttrValue {
    Color(Color),
    Bgcolor(BgColor),
    Number(u8),
    Style(Style),
}

impl AttrValue {
    pub fn attribute(self) -> Attribute {
        match self {
            AttrValue::Color(_) => Attribute::Color,
            AttrValue::Bgcolor(_) => Attribute::Bgcolor,
            AttrValue::Number(_) => Attribute::Number,
            AttrValue::Style(_) => Attribute::Style,
        }
    }

    pub fn matches(self, cell: &DigitCell) -> bool {
        self.attribute().of(cell) == self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Scope {
    WholeImage,
    PreviousTargets,
}

/// Spatial relation to the previous single target (grid adjacency).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Direction {
    Left,
    Right,
    Above,
    Below,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Left, Direction::Right, Direction::Above, Direction::Below];

    pub fn word(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Above => "above",
            Direction::Below => "below",
        }
    }

    /// The adjacent cell in this direction, if it is on the grid.
    pub fn neighbor(self, p: Pos) -> Option<Pos> {
        let (r, c) = (p.row as isize, p.col as isize);
        let (nr, nc) = match self {
            Direction::Left => (r, c - 1),
            Direction::Right => (r, c + 1),
            Direction::Above => (r - 1, c),
            Direction::Below => (r + 1, c),
        };
        let g = GRID as isize;
        (nr >= 0 && nc >= 0 && nr < g && nc < g).then(|| Pos::new(nr as usize, nc as usize))
    }
}

/// Structured form of one question.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuestionAst {
    pub kind: QuestionKind,
    pub predicate: Vec<AttrValue>,
    pub scope: Scope,
    pub relation: Option<Direction>,
    pub queried_attribute: Option<Attribute>,
    pub requires_history: bool,
}

impl QuestionAst {
    pub fn count(predicate: Vec<AttrValue>, scope: Scope) -> Self {
        Self {
            kind: QuestionKind::Count,
            predicate,
            scope,
            relation: None,
            queried_attribute: None,
            requires_history: scope == Scope::PreviousTargets,
        }
    }

    pub fn attribute(queried: Attribute, predicate: Vec<AttrValue>, scope: Scope) -> Self {
        Self {
            kind: QuestionKind::Attribute,
            predicate,
            scope,
            relation: None,
            queried_attribute: Some(queried),
            requires_history: scope == Scope::PreviousTargets,
        }
    }

    pub fn relation(queried: Attribute, direction: Direction) -> Self {
        Self {
            kind: QuestionKind::Attribute,
            predicate: Vec::new(),
            scope: Scope::PreviousTargets,
            relation: Some(direction),
            queried_attribute: Some(queried),
            requires_history: true,
        }
    }

    /// Whether `cell` satisfies every conjunct.
    pub fn selects(&self, cell: &DigitCell) -> bool {
        self.predicate.iter().all(|p| p.matches(cell))
    }

    /// Structural invariants independent of any world.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.into()));
        if self.predicate.len() > 2 {
            return bad("predicate has more than two conjuncts");
        }
        if self.predicate.len() == 2 && self.predicate[0].attribute() == self.predicate[1].attribute() {
            return bad("predicate repeats an attribute");
        }
        if (self.kind == QuestionKind::Attribute) != self.queried_attribute.is_some() {
            return bad("queried attribute present iff kind is attribute");
        }
        if self.relation.is_some() && (self.scope != Scope::PreviousTargets || self.kind != QuestionKind::Attribute) {
            return bad("relations are attribute questions over previous targets");
        }
        let needs = self.scope == Scope::PreviousTargets || self.relation.is_some();
        if self.requires_history != needs {
            return bad("requires_history inconsistent with scope/relation");
        }
        Ok(())
    }
}
