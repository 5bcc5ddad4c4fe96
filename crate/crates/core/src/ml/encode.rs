use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bijection between class names and indices; classes are kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEncoder {
    classes: Vec<String>,
}

impl LabelEncoder {
    pub fn fit<S: AsRef<str>>(values: impl IntoIterator<Item = S>) -> Self {
        let set: BTreeSet<String> = values.into_iter().map(|s| s.as_ref().to_owned()).collect();
        LabelEncoder {
            classes: set.into_iter().collect(),
        }
    }

    /// Encoder for bare class indices `0..n`, named by zero-padded decimals
    /// so lexicographic and numeric order agree.
    pub fn indices(n: usize) -> Self {
        let width = n.saturating_sub(1).to_string().len();
        LabelEncoder {
            classes: (0..n).map(|i| format!("{i:0width$}")).collect(),
        }
    }

    /// Rebuild from a stored class list, which must be sorted and unique.
    pub fn from_classes(classes: Vec<String>) -> Result<Self> {
        if classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("encoder classes must be sorted and unique".into()));
        }
        Ok(LabelEncoder { classes })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn encode(&self, value: &str) -> Result<usize> {
        self.classes
            .binary_search_by(|c| c.as_str().cmp(value))
            .map_err(|_| Error::UnknownCategory(value.to_owned()))
    }

    pub fn decode(&self, index: usize) -> Result<&str> {
        self.classes
            .get(index)
            .map(String::as_str)
            .ok_or_else(|| Error::InvalidInput(format!("class index {index} out of range")))
    }
}

/// Indicator matrix: row `r` has a single 1 at the position of its value in
/// `categories`.
pub fn one_hot<S: AsRef<str>, C: AsRef<str>>(column: &[S], categories: &[C]) -> Result<Vec<Vec<u8>>> {
    column
        .iter()
        .map(|v| {
            let v = v.as_ref();
            let pos = categories
                .iter()
                .position(|c| c.as_ref() == v)
                .ok_or_else(|| Error::UnknownCategory(v.to_owned()))?;
            let mut row = vec![0u8; categories.len()];
            row[pos] = 1;
            Ok(row)
        })
        .collect()
}
