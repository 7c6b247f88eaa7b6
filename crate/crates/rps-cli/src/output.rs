//! Byte-stable writers. Every numeric file carries a comment header with the
//! tool version, seed, and config digest; floats print in shortest
//! round-trip form so identical (config, seed) reruns are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub struct FileHeader<'a> {
    pub seed: u64,
    pub digest: &'a str,
}

impl FileHeader<'_> {
    fn render(&self, extra: &[(&str, String)]) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# rps {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "# seed={} config={}", self.seed, self.digest);
        for (k, v) in extra {
            let _ = writeln!(s, "# {k}={v}");
        }
        s
    }
}

/// Writes a CSV with comment header, column row, and LF line endings.
pub fn write_csv(
    path: &Path,
    header: &FileHeader,
    extra: &[(&str, String)],
    columns: &[&str],
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut s = header.render(extra);
    let _ = writeln!(s, "{}", columns.join(","));
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(s, "{}", line.join(","));
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).context("serializing JSON")?;
    s.push('\n');
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Resolves an output path against the configured directory.
pub fn resolve(out_dir: Option<&str>, file: &str) -> PathBuf {
    match out_dir {
        Some(dir) => Path::new(dir).join(file),
        None => PathBuf::from(file),
    }
}
