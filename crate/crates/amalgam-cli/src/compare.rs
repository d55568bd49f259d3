//! Side-by-side summary of several run directories.

use std::path::Path;

use amalgam_core::error::{Error, Result};

/// Parses an eval report (`metric,value` rows, `#` comments) into pairs.
fn read_eval(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|_| Error::InvalidConfig(format!("missing eval report `{}`", path.display())))?;
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == "metric,value" {
            continue;
        }
        if let Some((k, v)) = line.split_once(',') {
            rows.push((k.to_string(), v.to_string()));
        }
    }
    Ok(rows)
}

/// Builds the summary CSV: one row per run directory, columns are
/// `run,clean_acc` plus the union of the per-attack accuracy metrics in
/// first-seen order.
pub fn compare(dirs: &[String]) -> Result<String> {
    if dirs.is_empty() {
        return Err(Error::InvalidConfig("compare needs at least one run directory".into()));
    }
    let mut columns: Vec<String> = vec!["clean_acc".to_string()];
    let mut runs: Vec<(String, Vec<(String, String)>)> = Vec::new();
    for dir in dirs {
        let rows = read_eval(&Path::new(dir).join("eval.csv"))?;
        for (k, _) in &rows {
            if k.starts_with("acc_") && !columns.contains(k) {
                columns.push(k.clone());
            }
        }
        let name = Path::new(dir)
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.clone());
        runs.push((name, rows));
    }

    let mut out = String::from("run");
    for c in &columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (name, rows) in &runs {
        out.push_str(name);
        for c in &columns {
            out.push(',');
            match rows.iter().find(|(k, _)| k == c) {
                Some((_, v)) => out.push_str(v),
                None => out.push_str("na"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}
