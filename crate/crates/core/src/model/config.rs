use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dialog::{NUM_ANSWERS, QUESTION_WORDS};
use crate::error::{Error, Result};

/// Architecture sizes and ablation switches.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ModelConfig {
    /// Feed the dialog history encoder into the context vector.
    pub use_history: bool,
    /// Add the learnable recency term to memory addressing.
    pub use_seq_preference: bool,
    /// `false` gives the plain attention baseline.
    pub use_memory: bool,
    pub word_dim: usize,
    pub hidden_dim: usize,
    pub key_dim: usize,
    /// Joint space of the tentative attention projections.
    pub joint_dim: usize,
    /// Output channels of the four conv stages; the last one is the feature size.
    pub conv_channels: Vec<usize>,
    /// Side of the square input image; four pooling stages divide it by 16.
    pub image_px: usize,
    pub dpl_candidates: usize,
    pub comb_conv_channels: usize,
    pub encoding_dim: usize,
    pub question_vocab: usize,
    pub num_answers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            use_history: true,
            use_seq_preference: true,
            use_memory: true,
            word_dim: 32,
            hidden_dim: 64,
            key_dim: 64,
            joint_dim: 64,
            conv_channels: vec![32, 32, 64, 64],
            image_px: 64,
            dpl_candidates: 512,
            comb_conv_channels: 8,
            encoding_dim: 128,
            question_vocab: QUESTION_WORDS.len(),
            num_answers: NUM_ANSWERS,
        }
    }
}

/// Named ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Variant {
    Att,
    AttH,
    Amem,
    AmemH,
    AmemSeq,
    AmemHSeq,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Att,
        Variant::AttH,
        Variant::Amem,
        Variant::AmemH,
        Variant::AmemSeq,
        Variant::AmemHSeq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Att => "att",
            Variant::AttH => "att_h",
            Variant::Amem => "amem",
            Variant::AmemH => "amem_h",
            Variant::AmemSeq => "amem_seq",
            Variant::AmemHSeq => "amem_h_seq",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }

    /// `(use_history, use_seq_preference, use_memory)`.
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            Variant::Att => (false, false, false),
            Variant::AttH => (true, false, false),
            Variant::Amem => (false, false, true),
            Variant::AmemH => (true, false, true),
            Variant::AmemSeq => (false, true, true),
            Variant::AmemHSeq => (true, true, true),
        }
    }

    pub fn of(config: &ModelConfig) -> Option<Self> {
        let flags = (config.use_history, config.use_seq_preference, config.use_memory);
        Self::ALL.into_iter().find(|v| v.flags() == flags)
    }
}

impl ModelConfig {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        let (h, s, m) = variant.flags();
        self.use_history = h;
        self.use_seq_preference = s;
        self.use_memory = m;
        self
    }

    /// Small network on a 2×2 grid used by the gradient checks.
    pub fn tiny() -> Self {
        Self {
            word_dim: 4,
            hidden_dim: 8,
            key_dim: 6,
            joint_dim: 5,
            conv_channels: vec![2, 3, 3, 4],
            image_px: 32,
            dpl_candidates: 16,
            comb_conv_channels: 2,
            encoding_dim: 7,
            ..Self::default()
        }
    }

    pub fn grid_side(&self) -> usize {
        self.image_px / 16
    }

    pub fn cells(&self) -> usize {
        self.grid_side() * self.grid_side()
    }

    pub fn feature_dim(&self) -> usize {
        self.conv_channels.last().copied().unwrap_or(0)
    }

    pub fn variant(&self) -> Option<Variant> {
        Variant::of(self)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("word_dim", self.word_dim),
            ("hidden_dim", self.hidden_dim),
            ("key_dim", self.key_dim),
            ("joint_dim", self.joint_dim),
            ("dpl_candidates", self.dpl_candidates),
            ("comb_conv_channels", self.comb_conv_channels),
            ("encoding_dim", self.encoding_dim),
            ("question_vocab", self.question_vocab),
            ("num_answers", self.num_answers),
        ];
        let mut bad: Vec<String> = dims
            .iter()
            .filter(|(_, v)| *v == 0)
            .map(|(n, _)| format!("{n} must be positive"))
            .collect();
        if self.conv_channels.len() != 4 || self.conv_channels.contains(&0) {
            bad.push(format!("conv_channels must be four positive sizes, got {:?}", self.conv_channels));
        }
        if self.image_px == 0 || self.image_px % 16 != 0 {
            bad.push(format!("image_px must be a positive multiple of 16, got {}", self.image_px));
        }
        if self.question_vocab < QUESTION_WORDS.len() {
            bad.push(format!("question_vocab must cover {} words", QUESTION_WORDS.len()));
        }
        if self.num_answers != NUM_ANSWERS {
            bad.push(format!("num_answers must be {NUM_ANSWERS}"));
        }
        if self.use_seq_preference && !self.use_memory {
            bad.push("use_seq_preference needs use_memory".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::from_name(v.name()), Some(v));
            assert_eq!(ModelConfig::default().with_variant(v).variant(), Some(v));
        }
        assert_eq!(Variant::from_name("amem_seq_h"), None);
    }

    #[test]
    fn defaults_and_tiny_validate() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::tiny().validate().unwrap();
        assert_eq!(ModelConfig::default().cells(), 16);
        assert_eq!(ModelConfig::tiny().cells(), 4);
    }

    #[test]
    fn baseline_cannot_prefer_recent_entries() {
        let mut c = ModelConfig::default().with_variant(Variant::Att);
        c.use_seq_preference = true;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
