use crate::error::{Error, Result};

/// Fraction of pairs whose prediction equals the truth.
///
/// A null prediction never matches. With `skip_nulls`, pairs with a null
/// prediction leave the denominator instead.
pub fn accuracy_score<T: PartialEq>(truth: &[Option<T>], predicted: &[Option<T>], skip_nulls: bool) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} truths, {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut hits = 0usize;
    let mut total = 0usize;
    for (t, p) in truth.iter().zip(predicted) {
        if p.is_none() && skip_nulls {
            continue;
        }
        total += 1;
        if p.is_some() && p == t {
            hits += 1;
        }
    }
    if total == 0 {
        return Err(Error::InvalidInput("accuracy over an empty denominator".into()));
    }
    Ok(hits as f64 / total as f64)
}

/// `m[i][j]` counts pairs with truth `i` predicted as `j`.
pub fn confusion_matrix(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<Vec<Vec<u64>>> {
    if truth.len() != predicted.len() {
        return Err(Error::InvalidInput("length mismatch".into()));
    }
    let mut m = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::InvalidInput(format!(
                "class {} out of range for {n_classes} classes",
                t.max(p)
            )));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// Diagonal share of a confusion matrix.
pub fn matrix_accuracy(m: &[Vec<u64>]) -> f64 {
    let total: u64 = m.iter().flatten().sum();
    let trace: u64 = (0..m.len()).map(|i| m[i][i]).sum();
    trace as f64 / total as f64
}

/// Plain-text rendering with class names on both axes (rows = truth).
pub fn render_confusion(m: &[Vec<u64>], classes: &[String]) -> String {
    let width = classes
        .iter()
        .map(String::len)
        .chain(m.iter().flatten().map(|v| v.to_string().len()))
        .max()
        .unwrap_or(1);
    let mut out = format!("{:width$}", "");
    for c in classes {
        out.push_str(&format!("  {c:>width$}"));
    }
    out.push('\n');
    for (c, row) in classes.iter().zip(m) {
        out.push_str(&format!("{c:>width$}"));
        for v in row {
            out.push_str(&format!("  {v:>width$}"));
        }
        out.push('\n');
    }
    out
}
