//! Closed answer and question vocabularies.

use super::world::{BgColor, Color, Style};

pub const NUM_ANSWERS: usize = 38;

/// Count words for 0..=15.
pub const COUNT_WORDS: [&str; 16] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    "thirteen", "fourteen", "fifteen",
];

pub const DIGIT_WORDS: [&str; 10] = ["0", "1", "2", "3", "4", "5", "6", "7", "8", "9"];

/// Answer words in index order: colours, background colours, digits, styles, counts.
pub const ANSWER_WORDS: [&str; NUM_ANSWERS] = [
    "red", "blue", "green", "purple", "brown", "cyan", "yellow", "white", "silver", "salmon", "0", "1", "2", "3",
    "4", "5", "6", "7", "8", "9", "flat", "stroke", "zero", "one", "two", "three", "four", "five", "six", "seven",
    "eight", "nine", "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen",
];

const COLOR_BASE: usize = 0;
const BG_BASE: usize = 5;
const DIGIT_BASE: usize = 10;
const STYLE_BASE: usize = 20;
const COUNT_BASE: usize = 22;

/// Index into [`ANSWER_WORDS`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Answer(u8);

impl Answer {
    pub fn from_index(i: usize) -> Option<Self> {
        (i < NUM_ANSWERS).then_some(Self(i as u8))
    }

    pub fn from_word(word: &str) -> Option<Self> {
        ANSWER_WORDS.iter().position(|w| *w == word).map(|i| Self(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn word(self) -> &'static str {
        ANSWER_WORDS[self.0 as usize]
    }

    pub fn color(c: Color) -> Self {
        Self((COLOR_BASE + c.index()) as u8)
    }

    pub fn bgcolor(c: BgColor) -> Self {
        Self((BG_BASE + c.index()) as u8)
    }

    pub fn number(n: u8) -> Self {
        debug_assert!(n < 10);
        Self((DIGIT_BASE + n as usize) as u8)
    }

    pub fn style(s: Style) -> Self {
        Self((STYLE_BASE + s.index()) as u8)
    }

    /// Count word, `None` beyond fifteen.
    pub fn count(n: usize) -> Option<Self> {
        (n < COUNT_WORDS.len()).then(|| Self((COUNT_BASE + n) as u8))
    }

    pub fn is_count(self) -> bool {
        self.index() >= COUNT_BASE
    }
}

/// Every token the question grammar can emit, in embedding-table order.
pub const QUESTION_WORDS: [&str; 49] = [
    "how", "many", "are", "there", "in", "the", "image", "?", "among", "them", "what", "is", "of", "digit",
    "digits", "s", "on", "background", "at", "it", "left", "right", "above", "below", "color", "number", "style",
    "red", "blue", "green", "purple", "brown", "cyan", "yellow", "white", "silver", "salmon", "0", "1", "2", "3",
    "4", "5", "6", "7", "8", "9", "flat", "stroke",
];

/// Index of a question token in [`QUESTION_WORDS`].
pub fn question_token(word: &str) -> Option<usize> {
    QUESTION_WORDS.iter().position(|w| *w == word)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answer_vocab_is_38_distinct_words() {
        for (i, a) in ANSWER_WORDS.iter().enumerate() {
            assert!(!ANSWER_WORDS[..i].contains(a));
        }
        assert_eq!(ANSWER_WORDS.len(), 38);
        assert_eq!(Answer::color(Color::Red).word(), "red");
        assert_eq!(Answer::bgcolor(BgColor::Salmon).word(), "salmon");
        assert_eq!(Answer::number(4).word(), "4");
        assert_eq!(Answer::style(Style::Stroke).word(), "stroke");
        assert_eq!(Answer::count(15).unwrap().word(), "fifteen");
        assert_eq!(Answer::count(16), None);
    }

    #[test]
    fn question_vocab_is_distinct() {
        for (i, w) in QUESTION_WORDS.iter().enumerate() {
            assert!(!QUESTION_WORDS[..i].contains(w), "{w}");
        }
    }
}
