//! Causal effect identifiers and constraint sets.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// The three canonical pathway effects of the standard fairness model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EffectId {
    /// Natural direct effect, X → Y.
    Direct,
    /// Natural indirect effect, X → W → Y.
    Indirect,
    /// Spurious effect, along the X ↔ Z backdoor.
    Spurious,
}

impl EffectId {
    /// Canonical 1-based index: D=1, I=2, S=3.
    pub fn index(self) -> usize {
        match self {
            EffectId::Direct => 1,
            EffectId::Indirect => 2,
            EffectId::Spurious => 3,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            EffectId::Direct => "D",
            EffectId::Indirect => "I",
            EffectId::Spurious => "S",
        }
    }

    pub fn parse(s: &str) -> Option<EffectId> {
        match s.trim().to_ascii_lowercase().as_str() {
            "d" | "de" | "direct" => Some(EffectId::Direct),
            "i" | "ie" | "indirect" => Some(EffectId::Indirect),
            "s" | "se" | "spurious" => Some(EffectId::Spurious),
            _ => None,
        }
    }
}

impl fmt::Display for EffectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// A subset of the effect positions `{0..m}` (0-based), stored as a bitmask.
///
/// Position k corresponds to the k-th entry of whatever effect list is in
/// play; for the canonical three-effect case positions 0, 1, 2 are D, I, S,
/// matching the 1-based indices 1..=3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EffectSet {
    mask: u32,
}

impl EffectSet {
    pub const MAX_EFFECTS: usize = 6;

    pub fn empty() -> Self {
        EffectSet { mask: 0 }
    }

    pub fn full(m: usize) -> Result<Self> {
        if m == 0 || m > Self::MAX_EFFECTS {
            return Err(Error::EffectCountOutOfRange(m));
        }
        Ok(EffectSet {
            mask: (1u32 << m) - 1,
        })
    }

    pub const fn from_mask(mask: u32) -> Self {
        EffectSet { mask }
    }

    pub fn mask(self) -> u32 {
        self.mask
    }

    pub fn contains(self, pos: usize) -> bool {
        self.mask & (1 << pos) != 0
    }

    pub fn with(self, pos: usize) -> Self {
        EffectSet {
            mask: self.mask | (1 << pos),
        }
    }

    pub fn len(self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.mask == 0
    }

    pub fn is_subset_of(self, other: EffectSet) -> bool {
        self.mask & !other.mask == 0
    }

    /// Member positions in canonical ascending order.
    pub fn members(self) -> impl Iterator<Item = usize> {
        let mask = self.mask;
        (0..Self::MAX_EFFECTS).filter(move |pos| mask & (1 << pos) != 0)
    }

    /// `{D,I}`-style label given the effect names for each position.
    pub fn label(self, names: &[&str]) -> String {
        let inner: Vec<&str> = self.members().map(|p| names[p]).collect();
        format!("{{{}}}", inner.join(","))
    }

    /// Bit string such as `110` (one char per position, 1 = constrained).
    pub fn bit_string(self, m: usize) -> String {
        (0..m)
            .map(|p| if self.contains(p) { '1' } else { '0' })
            .collect()
    }
}
