//! Morphology categories shared by the classifiers, the sheet and the
//! annotation service. Declaration order is the tie-break order.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A closed set of string-named classes.
pub trait Category: Copy + Eq + Ord + fmt::Debug + Send + Sync + 'static {
    const ALL: &'static [Self];
    /// Column or field name of the category in sheets and label records.
    const FIELD: &'static str;

    fn as_str(self) -> &'static str;

    fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::UnknownCategory(format!("{s} (field {})", Self::FIELD)))
    }

    /// Position in declaration order.
    fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).expect("listed")
    }

    fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|c| c.as_str()).collect()
    }
}

macro_rules! category {
    ($(#[$meta:meta])* $name:ident, $field:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl Category for $name {
            const ALL: &'static [Self] = &[$($name::$variant),+];
            const FIELD: &'static str = $field;

            fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl std::str::FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                <Self as Category>::parse(s)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                <Self as Category>::parse(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

category!(LeafColor, "leaf_color", {
    LightGreen => "light_green",
    DarkGreen => "dark_green",
    YellowGreen => "yellow_green",
    Yellow => "yellow",
});

category!(LeafShape, "leaf_shape", {
    Ovate => "ovate",
    Lanceolate => "lanceolate",
    Elliptical => "elliptical",
    Oblong => "oblong",
});

category!(
    /// Brown-splotch level; ordinal, `none` = 0 through `high` = 3.
    Splotches, "brown_splotches", {
    None => "none",
    Low => "low",
    Medium => "medium",
    High => "high",
});

/// Ordinal level of a splotch class.
pub fn ordinal_encode(level: Splotches) -> u8 {
    level.index() as u8
}

/// The (color, shape, splotch level) triple of one leaf or image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MorphologyLabel {
    pub color: LeafColor,
    pub shape: LeafShape,
    pub splotches: Splotches,
}

impl MorphologyLabel {
    pub const TARGETS: [&'static str; 3] = ["color", "shape", "splotches"];

    pub fn new(color: LeafColor, shape: LeafShape, splotches: Splotches) -> Self {
        MorphologyLabel {
            color,
            shape,
            splotches,
        }
    }

    pub fn as_strs(&self) -> [&'static str; 3] {
        [self.color.as_str(), self.shape.as_str(), self.splotches.as_str()]
    }

    pub fn from_strs(color: &str, shape: &str, splotches: &str) -> Result<Self> {
        Ok(MorphologyLabel {
            color: LeafColor::parse(color)?,
            shape: LeafShape::parse(shape)?,
            splotches: Splotches::parse(splotches)?,
        })
    }
}

/// Suitability verdicts in annotation order.
pub const SUITABILITY: [&str; 2] = ["good", "bad"];

/// The enum contract shared with the annotation front end.
pub const CONTRACT_JSON: &str = include_str!("../contract/label_enums.json");
