//! Field extraction from raw label text.
//!
//! Plant tags carry a treatment letter (`C` control, `D` drought), a block
//! `B<n>`, a row `R<n>`, a position `P<n>` and a genotype such as
//! `BESC-417_LM`. Every field is parsed independently and may be missing.

use std::fmt;
use std::sync::OnceLock;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

pub const GENOTYPE_PATTERN: &str = r"[A-Z]{2,}(-\d+)+(_\d+)*(_[A-Z]+)?";

/// Punctuation OCR tends to glue onto the treatment letter.
const TREATMENT_PUNCT: &[char] = &['.', ',', ':', ';', '|'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Treatment {
    C,
    D,
}

impl Treatment {
    pub const ALL: [Treatment; 2] = [Treatment::C, Treatment::D];

    pub fn as_str(self) -> &'static str {
        match self {
            Treatment::C => "C",
            Treatment::D => "D",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "C" => Some(Treatment::C),
            "D" => Some(Treatment::D),
            _ => None,
        }
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One image's parsed tag fields.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub filename: String,
    pub treatment: Option<Treatment>,
    pub block: Option<u32>,
    pub row: Option<u32>,
    pub position: Option<u32>,
    pub genotype: Option<String>,
}

impl LabelRecord {
    pub fn empty(filename: impl Into<String>) -> Self {
        LabelRecord {
            filename: filename.into(),
            ..Default::default()
        }
    }

    pub fn with_filename(mut self, filename: impl Into<String>) -> Self {
        self.filename = filename.into();
        self
    }

    /// True when at least one field parsed.
    pub fn any_field(&self) -> bool {
        self.treatment.is_some()
            || self.block.is_some()
            || self.row.is_some()
            || self.position.is_some()
            || self.genotype.is_some()
    }

    /// The tag text this record would have been printed from, fields
    /// separated by single spaces and missing fields omitted.
    pub fn canonical_text(&self) -> String {
        let mut parts = Vec::new();
        if let Some(t) = self.treatment {
            parts.push(t.to_string());
        }
        if let Some(b) = self.block {
            parts.push(format!("B{b}"));
        }
        if let Some(r) = self.row {
            parts.push(format!("R{r}"));
        }
        if let Some(p) = self.position {
            parts.push(format!("P{p}"));
        }
        if let Some(g) = &self.genotype {
            parts.push(g.clone());
        }
        parts.join(" ")
    }
}

/// Compiled field grammar.
#[derive(Debug, Clone)]
pub struct LabelParser {
    block: Regex,
    row: Regex,
    position: Regex,
    genotype: Regex,
    genotype_exact: Regex,
}

impl Default for LabelParser {
    fn default() -> Self {
        Self::new()
    }
}

/// `\d` means 0-9 only, so Unicode matching is disabled.
fn ascii_regex(pattern: &str) -> Regex {
    RegexBuilder::new(pattern)
        .unicode(false)
        .build()
        .expect("valid pattern")
}

impl LabelParser {
    pub fn new() -> Self {
        LabelParser {
            block: ascii_regex(r"B(\d+)"),
            row: ascii_regex(r"R(\d+)"),
            position: ascii_regex(r"P(\d+)"),
            genotype: ascii_regex(GENOTYPE_PATTERN),
            genotype_exact: ascii_regex(&format!("^(?:{GENOTYPE_PATTERN})$")),
        }
    }

    /// Parse every field from raw OCR text; the returned record has an empty
    /// filename. Never fails: unmatched fields are `None`.
    pub fn parse_fields(&self, raw_text: &str) -> LabelRecord {
        // Digit runs too long for u32 are treated as unread.
        let number = |re: &Regex| -> Option<u32> {
            re.captures(raw_text).and_then(|caps| caps[1].parse().ok())
        };
        let block = number(&self.block);
        let row = number(&self.row);
        let position = number(&self.position);

        // Blank out every B/R/P match so e.g. `P32` can never seed a genotype.
        let mut masked = raw_text.as_bytes().to_vec();
        for re in [&self.block, &self.row, &self.position] {
            for m in re.find_iter(raw_text) {
                masked[m.range()].fill(b' ');
            }
        }
        let masked = String::from_utf8(masked).expect("ASCII-only replacement keeps UTF-8 valid");
        let genotype = self.genotype.find(&masked).map(|m| m.as_str().to_owned());

        LabelRecord {
            filename: String::new(),
            treatment: parse_treatment(raw_text),
            block,
            row,
            position,
            genotype,
        }
    }

    /// True iff the entire candidate is a genotype.
    pub fn genotype_matches(&self, candidate: &str) -> bool {
        self.genotype_exact.is_match(candidate)
    }
}

/// First whitespace-separated token equal to `C` or `D` once surrounding
/// punctuation is stripped.
pub fn parse_treatment(text: &str) -> Option<Treatment> {
    text.split_whitespace()
        .find_map(|tok| Treatment::parse(tok.trim_matches(TREATMENT_PUNCT)))
}

/// Shared parser instance.
pub fn default_parser() -> &'static LabelParser {
    static PARSER: OnceLock<LabelParser> = OnceLock::new();
    PARSER.get_or_init(LabelParser::new)
}

/// Convenience wrapper over the shared parser.
pub fn parse_fields(raw_text: &str) -> LabelRecord {
    default_parser().parse_fields(raw_text)
}

pub fn genotype_matches(candidate: &str) -> bool {
    default_parser().genotype_matches(candidate)
}
