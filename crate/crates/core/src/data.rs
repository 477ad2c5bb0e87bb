//! Training-ready sentence-pair records and dataset splits.

use crate::deptree::DepTree;
use crate::error::{Error, Result};

/// The three textual-entailment classes, in their fixed index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EntailmentLabel {
    Contradiction,
    Neutral,
    Entailment,
}

impl EntailmentLabel {
    /// Index into the K = 3 class distribution.
    pub fn index(&self) -> usize {
        match self {
            EntailmentLabel::Contradiction => 0,
            EntailmentLabel::Neutral => 1,
            EntailmentLabel::Entailment => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(EntailmentLabel::Contradiction),
            1 => Some(EntailmentLabel::Neutral),
            2 => Some(EntailmentLabel::Entailment),
            _ => None,
        }
    }

    /// Parse a label string, tolerating any letter case.
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CONTRADICTION" => Ok(EntailmentLabel::Contradiction),
            "NEUTRAL" => Ok(EntailmentLabel::Neutral),
            "ENTAILMENT" => Ok(EntailmentLabel::Entailment),
            other => Err(Error::Data(format!("unknown entailment label {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EntailmentLabel::Contradiction => "CONTRADICTION",
            EntailmentLabel::Neutral => "NEUTRAL",
            EntailmentLabel::Entailment => "ENTAILMENT",
        }
    }
}

/// One sentence pair with both supervision signals attached.
#[derive(Clone, Debug)]
pub struct PairExample {
    pub tree_a: DepTree,
    pub tree_b: DepTree,
    /// Gold relatedness in [1, 5].
    pub relatedness: f64,
    pub entailment: EntailmentLabel,
}

/// Train/dev/test partition of pair examples.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub train: Vec<PairExample>,
    pub dev: Vec<PairExample>,
    pub test: Vec<PairExample>,
}

impl Dataset {
    pub fn new(train: Vec<PairExample>, dev: Vec<PairExample>, test: Vec<PairExample>) -> Self {
        Dataset { train, dev, test }
    }
}
