//! Binary class labels and the two encodings they appear under.
//!
//! Original data uses `{0, +1}`. Data relabeled by conformal critical set
//! membership uses `{-1, +1}`. Both are binary problems with the same
//! positive class, so algorithms work on [`Label`] and only the encoding
//! differs; a `-1` is never the same thing as a `0`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    /// `0` in the original encoding, `-1` after CCS relabeling.
    Negative,
    /// `+1`, the critical/target class.
    Positive,
}

impl Label {
    pub const BOTH: [Label; 2] = [Label::Negative, Label::Positive];

    pub fn opposite(self) -> Label {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSpace {
    /// `{0, +1}`.
    #[default]
    ZeroOne,
    /// `{-1, +1}`: conformal-critical versus everything else.
    PlusMinusOne,
}

impl LabelSpace {
    pub fn encode(self, label: Label) -> i8 {
        match (self, label) {
            (_, Label::Positive) => 1,
            (LabelSpace::ZeroOne, Label::Negative) => 0,
            (LabelSpace::PlusMinusOne, Label::Negative) => -1,
        }
    }

    pub fn decode(self, value: i64) -> Result<Label> {
        match (self, value) {
            (_, 1) => Ok(Label::Positive),
            (LabelSpace::ZeroOne, 0) => Ok(Label::Negative),
            (LabelSpace::PlusMinusOne, -1) => Ok(Label::Negative),
            _ => Err(Error::invalid(format!(
                "label {value} is not valid in the {self} label space"
            ))),
        }
    }
}

impl fmt::Display for LabelSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelSpace::ZeroOne => f.write_str("{0,+1}"),
            LabelSpace::PlusMinusOne => f.write_str("{-1,+1}"),
        }
    }
}
