//! Image-level labels and their class-index conventions.
//!
//! Binary models use damage = 0, no_damage = 1. Three-class models use
//! severe = 0, mild = 1, none = 2. Class 0 is always the damage (or most
//! severe) class, which is the target of the damage detection map.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Class index of the damage class in every scheme.
pub const DAMAGE_CLASS: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Severe,
    Mild,
    None,
    Damage,
    NoDamage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelScheme {
    /// severe / mild / none
    Severity,
    /// damage / no_damage
    Binary,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Severe => "severe",
            Label::Mild => "mild",
            Label::None => "none",
            Label::Damage => "damage",
            Label::NoDamage => "no_damage",
        }
    }

    pub fn scheme(self) -> LabelScheme {
        match self {
            Label::Severe | Label::Mild | Label::None => LabelScheme::Severity,
            Label::Damage | Label::NoDamage => LabelScheme::Binary,
        }
    }

    /// Collapses severity labels onto the binary scheme: severe and mild
    /// become damage, none becomes no_damage.
    pub fn merged(self) -> Label {
        match self {
            Label::Severe | Label::Mild | Label::Damage => Label::Damage,
            Label::None | Label::NoDamage => Label::NoDamage,
        }
    }

    pub fn class_index(self) -> usize {
        match self {
            Label::Severe | Label::Damage => 0,
            Label::Mild | Label::NoDamage => 1,
            Label::None => 2,
        }
    }

    pub fn is_damage(self) -> bool {
        self.merged() == Label::Damage
    }
}

impl LabelScheme {
    pub fn labels(self) -> &'static [Label] {
        match self {
            LabelScheme::Severity => &[Label::Severe, Label::Mild, Label::None],
            LabelScheme::Binary => &[Label::Damage, Label::NoDamage],
        }
    }

    pub fn num_classes(self) -> usize {
        self.labels().len()
    }

    pub fn from_index(self, index: usize) -> Option<Label> {
        self.labels().get(index).copied()
    }

    pub fn for_classes(n: usize) -> Option<LabelScheme> {
        match n {
            2 => Some(LabelScheme::Binary),
            3 => Some(LabelScheme::Severity),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "severe" => Ok(Label::Severe),
            "mild" => Ok(Label::Mild),
            "none" => Ok(Label::None),
            "damage" => Ok(Label::Damage),
            "no_damage" | "no-damage" => Ok(Label::NoDamage),
            other => Err(Error::invalid("label", format!("unknown label `{other}`"))),
        }
    }
}
