//! Synthetic visual dialogs over a 4×4 grid of attributed digits.

pub mod ast;
pub mod generator;
pub mod oracle;
pub mod render;
pub mod surface;
pub mod vocab;
pub mod world;

pub use ast::{AttrValue, Attribute, Direction, QuestionAst, QuestionKind, Scope};
pub use generator::{ambiguity_rate, generate_dialog, Dialog, GeneratorConfig, QaItem, DIALOG_LEN};
pub use oracle::{answer_oracle, Resolution};
pub use render::render;
pub use surface::realize_surface;
pub use vocab::{Answer, ANSWER_WORDS, NUM_ANSWERS, QUESTION_WORDS};
pub use world::{BgColor, Color, DigitCell, GridWorld, Pos, Style, CELLS, GRID};
