use crate::rng::SplitMix64;

pub const GRID: usize = 4;
pub const CELLS: usize = GRID * GRID;

macro_rules! word_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $word:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        #[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
        pub enum $name {
            $(#[cfg_attr(feature = "serde", serde(rename = $word))] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn word(self) -> &'static str {
                match self {
                    $($name::$variant => $word),+
                }
            }

            pub fn from_word(word: &str) -> Option<Self> {
                match word {
                    $($word => Some($name::$variant),)+
                    _ => None,
                }
            }

            pub fn index(self) -> usize {
                self as usize
            }
        }
    };
}

word_enum!(
    /// Foreground colour of a digit.
    Color { Red => "red", Blue => "blue", Green => "green", Purple => "purple", Brown => "brown" }
);
word_enum!(
    /// Background colour of a cell.
    BgColor { Cyan => "cyan", Yellow => "yellow", White => "white", Silver => "silver", Salmon => "salmon" }
);
word_enum!(
    Style { Flat => "flat", Stroke => "stroke" }
);

/// Grid coordinate; row 0 is the top, column 0 the left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pos {
    pub row: u8,
    pub col: u8,
}

impl Pos {
    pub fn new(row: usize, col: usize) -> Self {
        debug_assert!(row < GRID && col < GRID);
        Self {
            row: row as u8,
            col: col as u8,
        }
    }

    /// Row-major cell index `0..16`.
    pub fn index(self) -> usize {
        self.row as usize * GRID + self.col as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::new(i / GRID, i % GRID)
    }
}

/// The four attributes of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DigitCell {
    pub color: Color,
    pub bgcolor: BgColor,
    pub number: u8,
    pub style: Style,
}

/// A 4×4 arrangement of attributed digits, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridWorld {
    pub seed: u64,
    pub cells: [DigitCell; CELLS],
}

impl GridWorld {
    /// Independently uniform attributes for all 16 cells from a SplitMix64 stream.
    pub fn generate(seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let cells = core::array::from_fn(|_| DigitCell {
            color: Color::ALL[rng.below(Color::ALL.len())],
            bgcolor: BgColor::ALL[rng.below(BgColor::ALL.len())],
            number: rng.below(10) as u8,
            style: Style::ALL[rng.below(Style::ALL.len())],
        });
        Self { seed, cells }
    }

    pub fn cell(&self, pos: Pos) -> &DigitCell {
        &self.cells[pos.index()]
    }

    pub fn positions() -> impl Iterator<Item = Pos> {
        (0..CELLS).map(Pos::from_index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_world() {
        assert_eq!(GridWorld::generate(42), GridWorld::generate(42));
        assert_ne!(GridWorld::generate(42), GridWorld::generate(43));
    }

    #[test]
    fn words_round_trip() {
        for c in Color::ALL {
            assert_eq!(Color::from_word(c.word()), Some(*c));
        }
        assert_eq!(BgColor::from_word("salmon"), Some(BgColor::Salmon));
        assert_eq!(Style::from_word("bold"), None);
    }

    #[test]
    fn attribute_marginals_are_uniform() {
        // 10,000 worlds × 16 cells; every category count within 3σ of its binomial mean.
        let n_worlds = 10_000;
        let mut colors = [0usize; 5];
        let mut bgs = [0usize; 5];
        let mut numbers = [0usize; 10];
        let mut styles = [0usize; 2];
        for seed in 0..n_worlds {
            for c in GridWorld::generate(seed as u64).cells {
                colors[c.color.index()] += 1;
                bgs[c.bgcolor.index()] += 1;
                numbers[c.number as usize] += 1;
                styles[c.style.index()] += 1;
            }
        }
        let total = (n_worlds * CELLS) as f64;
        let check = |counts: &[usize]| {
            let p = 1.0 / counts.len() as f64;
            let mean = total * p;
            let sigma = (total * p * (1.0 - p)).sqrt();
            for &c in counts {
                assert!((c as f64 - mean).abs() < 3.0 * sigma, "{counts:?}");
            }
        };
        check(&colors);
        check(&bgs);
        check(&numbers);
        check(&styles);
    }
}
