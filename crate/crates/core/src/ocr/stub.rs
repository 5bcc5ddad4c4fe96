use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use image::RgbImage;

use super::{OcrBackend, OcrSource, TextFragment};
use crate::error::{Error, Result};

/// Section separator inside a sidecar script.
const SECTION_BREAK: &str = "---";
/// A section consisting of this line makes the backend fail.
const FAIL_MARKER: &str = "!error";

/// Scripted backend for weight-free runs.
///
/// The script is a list of sections; the n-th `recognize` call answers with
/// the n-th section (the last one repeats). Each non-empty line is one
/// fragment with confidence 1.
#[derive(Debug)]
pub struct StubBackend {
    sections: Vec<String>,
    calls: AtomicUsize,
}

impl StubBackend {
    pub fn from_sections<S: Into<String>>(sections: impl IntoIterator<Item = S>) -> Self {
        StubBackend {
            sections: sections.into_iter().map(Into::into).collect(),
            calls: AtomicUsize::new(0),
        }
    }

    /// Parse a sidecar script; sections are separated by `---` lines.
    pub fn from_script(script: &str) -> Self {
        let mut sections = vec![String::new()];
        for line in script.lines() {
            if line.trim() == SECTION_BREAK {
                sections.push(String::new());
            } else {
                let cur = sections.last_mut().expect("non-empty");
                if !cur.is_empty() {
                    cur.push('\n');
                }
                cur.push_str(line);
            }
        }
        Self::from_sections(sections)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl OcrBackend for StubBackend {
    fn recognize(&self, _image: &RgbImage) -> Result<Vec<TextFragment>> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        let Some(section) = self.sections.get(n).or(self.sections.last()) else {
            return Ok(Vec::new());
        };
        if section.trim() == FAIL_MARKER {
            return Err(Error::Backend("scripted failure".into()));
        }
        Ok(section
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| TextFragment::new(l, 1.0))
            .collect())
    }
}

/// Reads `<dir>/<image stem>.txt` scripts; images without a sidecar read
/// as empty text.
#[derive(Debug, Clone)]
pub struct StubSource {
    dir: PathBuf,
}

impl StubSource {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        StubSource { dir: dir.into() }
    }

    pub fn sidecar_path(&self, filename: &str) -> PathBuf {
        let stem = Path::new(filename)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.dir.join(format!("{stem}.txt"))
    }
}

impl OcrSource for StubSource {
    fn backend_for(&self, filename: &str) -> Result<Arc<dyn OcrBackend>> {
        let path = self.sidecar_path(filename);
        let script = match std::fs::read_to_string(&path) {
            Ok(s) => s,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(Error::io(path, e)),
        };
        Ok(Arc::new(StubBackend::from_script(&script)))
    }
}
