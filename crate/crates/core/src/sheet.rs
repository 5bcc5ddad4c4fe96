//! The results sheet: one row per image, persisted as CSV.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label_parser::{LabelRecord, Treatment};
use crate::labels::{Category, LeafColor, LeafShape, MorphologyLabel, Splotches};

pub const COLUMNS: [&str; 10] = [
    "filename",
    "treatment",
    "block",
    "row",
    "position",
    "genotype",
    "leaf_color",
    "leaf_shape",
    "brown_splotches",
    "treatment_source",
];

/// Where a row's treatment came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentSource {
    Ocr,
    Predicted,
}

impl TreatmentSource {
    pub fn as_str(self) -> &'static str {
        match self {
            TreatmentSource::Ocr => "ocr",
            TreatmentSource::Predicted => "predicted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ocr" => Some(TreatmentSource::Ocr),
            "predicted" => Some(TreatmentSource::Predicted),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SheetRow {
    pub filename: String,
    pub treatment: Option<Treatment>,
    pub block: Option<u32>,
    pub row: Option<u32>,
    pub position: Option<u32>,
    pub genotype: Option<String>,
    pub leaf_color: Option<LeafColor>,
    pub leaf_shape: Option<LeafShape>,
    pub brown_splotches: Option<Splotches>,
    pub treatment_source: Option<TreatmentSource>,
}

impl SheetRow {
    pub fn from_label(rec: &LabelRecord) -> Self {
        SheetRow {
            filename: rec.filename.clone(),
            treatment: rec.treatment,
            block: rec.block,
            row: rec.row,
            position: rec.position,
            genotype: rec.genotype.clone(),
            treatment_source: rec.treatment.map(|_| TreatmentSource::Ocr),
            ..Default::default()
        }
    }

    pub fn label(&self) -> LabelRecord {
        LabelRecord {
            filename: self.filename.clone(),
            treatment: self.treatment,
            block: self.block,
            row: self.row,
            position: self.position,
            genotype: self.genotype.clone(),
        }
    }

    /// All three morphology cells, when every one is present.
    pub fn morphology(&self) -> Option<MorphologyLabel> {
        Some(MorphologyLabel::new(self.leaf_color?, self.leaf_shape?, self.brown_splotches?))
    }

    pub fn set_morphology(&mut self, m: Option<MorphologyLabel>) {
        self.leaf_color = m.map(|m| m.color);
        self.leaf_shape = m.map(|m| m.shape);
        self.brown_splotches = m.map(|m| m.splotches);
    }

    fn cells(&self) -> [Option<String>; 10] {
        [
            Some(self.filename.clone()),
            self.treatment.map(|t| t.to_string()),
            self.block.map(|v| v.to_string()),
            self.row.map(|v| v.to_string()),
            self.position.map(|v| v.to_string()),
            self.genotype.clone(),
            self.leaf_color.map(|v| v.to_string()),
            self.leaf_shape.map(|v| v.to_string()),
            self.brown_splotches.map(|v| v.to_string()),
            self.treatment_source.map(|v| v.as_str().to_owned()),
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultsSheet {
    pub rows: Vec<SheetRow>,
}

impl ResultsSheet {
    pub fn new(rows: Vec<SheetRow>) -> Result<Self> {
        let s = ResultsSheet { rows };
        s.check_unique()?;
        Ok(s)
    }

    pub fn from_labels(records: &[LabelRecord]) -> Result<Self> {
        Self::new(records.iter().map(SheetRow::from_label).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get_mut(&mut self, filename: &str) -> Option<&mut SheetRow> {
        self.rows.iter_mut().find(|r| r.filename == filename)
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, r) in self.rows.iter().enumerate() {
            if !seen.insert(r.filename.as_str()) {
                return Err(Error::Schema {
                    row: i + 1,
                    column: "filename".into(),
                    message: format!("duplicate filename `{}`", r.filename),
                });
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(COLUMNS)?;
        for r in &self.rows {
            w.write_record(r.cells().iter().map(|c| c.as_deref().unwrap_or("")))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("cells are UTF-8"))
    }

    /// Parse CSV text. The header may list any subset of the known columns
    /// (in any order) but must include `filename`; absent columns read as
    /// null.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.trim_start_matches('\u{feff}').as_bytes());
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let mut index = [None; 10];
        for (j, name) in header.iter().enumerate() {
            let k = COLUMNS.iter().position(|c| c == name).ok_or_else(|| Error::Schema {
                row: 0,
                column: name.clone(),
                message: "unknown column".into(),
            })?;
            if index[k].replace(j).is_some() {
                return Err(Error::Schema {
                    row: 0,
                    column: name.clone(),
                    message: "repeated column".into(),
                });
            }
        }
        if index[0].is_none() {
            return Err(Error::Schema {
                row: 0,
                column: "filename".into(),
                message: "missing required column".into(),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row_no = i + 1;
            let cell = |k: usize| -> Option<&str> {
                index[k].and_then(|j| rec.get(j)).filter(|s| !s.is_empty())
            };
            let bad = |k: usize, v: &str| Error::Schema {
                row: row_no,
                column: COLUMNS[k].into(),
                message: format!("illegal value `{v}`"),
            };
            let number = |k: usize| -> Result<Option<u32>> {
                cell(k).map(|v| parse_count(v).ok_or_else(|| bad(k, v))).transpose()
            };
            fn category<C: Category>(v: Option<&str>, err: impl Fn(&str) -> Error) -> Result<Option<C>> {
                v.map(|v| C::parse(v).map_err(|_| err(v))).transpose()
            }
            let filename = cell(0).ok_or_else(|| bad(0, ""))?.to_owned();
            let genotype = cell(5).map(str::to_owned);
            rows.push(SheetRow {
                filename,
                treatment: cell(1).map(|v| Treatment::parse(v).ok_or_else(|| bad(1, v))).transpose()?,
                block: number(2)?,
                row: number(3)?,
                position: number(4)?,
                genotype,
                leaf_color: category(cell(6), |v| bad(6, v))?,
                leaf_shape: category(cell(7), |v| bad(7, v))?,
                brown_splotches: category(cell(8), |v| bad(8, v))?,
                treatment_source: cell(9)
                    .map(|v| TreatmentSource::parse(v).ok_or_else(|| bad(9, v)))
                    .transpose()?,
            });
        }
        Self::new(rows)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Digit runs, optionally with a zero fraction as spreadsheet tools write
/// integer columns holding nulls.
fn parse_count(v: &str) -> Option<u32> {
    let digits = match v.split_once('.') {
        Some((d, frac)) if !frac.is_empty() && frac.bytes().all(|b| b == b'0') => d,
        Some(_) => return None,
        None => v,
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ColumnInfo {
    pub name: &'static str,
    pub non_null: usize,
    pub dtype: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InfoSummary {
    pub entries: usize,
    pub columns: Vec<ColumnInfo>,
}

impl InfoSummary {
    pub fn non_null(&self, column: &str) -> Option<usize> {
        self.columns.iter().find(|c| c.name == column).map(|c| c.non_null)
    }

    /// Keep only the named columns, in the given order.
    pub fn select(&self, names: &[&str]) -> InfoSummary {
        InfoSummary {
            entries: self.entries,
            columns: names
                .iter()
                .filter_map(|n| self.columns.iter().find(|c| c.name == *n).cloned())
                .collect(),
        }
    }
}

/// Non-null count per column.
pub fn info_summary(sheet: &ResultsSheet) -> InfoSummary {
    let n = sheet.rows.len();
    let mut counts = [0usize; 10];
    for r in &sheet.rows {
        for (c, cell) in counts.iter_mut().zip(r.cells()) {
            *c += usize::from(cell.is_some());
        }
    }
    let columns = COLUMNS
        .iter()
        .zip(counts)
        .enumerate()
        .map(|(k, (&name, non_null))| ColumnInfo {
            name,
            non_null,
            dtype: match k {
                2..=4 if non_null < n => "float64",
                2..=4 => "int64",
                _ => "object",
            },
        })
        .collect();
    InfoSummary { entries: n, columns }
}

impl fmt::Display for InfoSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.entries == 0 {
            writeln!(f, "RangeIndex: 0 entries")?;
        } else {
            writeln!(f, "RangeIndex: {} entries, 0 to {}", self.entries, self.entries - 1)?;
        }
        writeln!(f, "Data columns (total {} columns):", self.columns.len())?;
        let w = self.columns.iter().map(|c| c.name.len()).max().unwrap_or(0).max(6);
        writeln!(f, " #   {:<w$}  Non-Null Count  Dtype  ", "Column")?;
        writeln!(f, "---  {:<w$}  --------------  -----  ", "------")?;
        for (i, c) in self.columns.iter().enumerate() {
            let count = format!("{} non-null", c.non_null);
            writeln!(f, " {i:<3} {:<w$}  {count:<14}  {:<7}", c.name, c.dtype)?;
        }
        Ok(())
    }
}
