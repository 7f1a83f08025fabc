//! Run directories, manifests and comma-separated records.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::config::ExperimentConfig;

pub const DEFAULT_OUT: &str = "runs";

/// Creates `<root>/<stem>-NNN` with the first free index.
///
/// `create_dir` fails on an existing directory, so concurrent or repeated
/// runs never share (or overwrite) a directory.
pub fn fresh_run_dir(root: &Path, stem: &str) -> Result<PathBuf> {
    fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
    for index in 1.. {
        let dir = root.join(format!("{stem}-{index:03}"));
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).with_context(|| format!("cannot create {}", dir.display())),
        }
    }
    unreachable!("run index space exhausted")
}

/// Writes the resolved config as a reusable TOML file, refusing to replace one.
pub fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let path = dir.join("manifest.toml");
    let mut f = OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    writeln!(f, "# dikernel {} {command}", env!("CARGO_PKG_VERSION"))?;
    f.write_all(cfg.to_toml()?.as_bytes())?;
    Ok(path)
}

/// Append-only CSV writer; the header is written only to a new file.
pub struct Records {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Records {
    pub fn open(path: PathBuf, header: &[&str]) -> Result<Self> {
        let fresh = !path.exists();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("cannot open {}", path.display()))?;
        let mut out = BufWriter::new(file);
        if fresh {
            writeln!(out, "{}", header.join(","))?;
        }
        Ok(Records { path, out })
    }

    /// Writes one row and flushes, so partial results survive a later failure.
    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        writeln!(self.out, "{}", fields.join(","))?;
        self.out
            .flush()
            .with_context(|| format!("cannot write {}", self.path.display()))
    }
}

/// Fixed-width table for the terminal.
pub fn print_table(header: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        println!("{}", padded.join("  "));
    };
    line(header.to_vec());
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_dirs_get_increasing_suffixes() {
        let root = tempfile::tempdir().unwrap();
        let a = fresh_run_dir(root.path(), "train").unwrap();
        let b = fresh_run_dir(root.path(), "train").unwrap();
        assert!(a.ends_with("train-001") && b.ends_with("train-002"));
    }

    #[test]
    fn manifests_are_never_replaced() {
        let root = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::default();
        write_manifest(root.path(), "train", &cfg).unwrap();
        assert!(write_manifest(root.path(), "train", &cfg).is_err());
    }

    #[test]
    fn records_append() {
        let root = tempfile::tempdir().unwrap();
        let path = root.path().join("r.csv");
        Records::open(path.clone(), &["a", "b"])
            .unwrap()
            .row(&["1".into(), "2".into()])
            .unwrap();
        Records::open(path.clone(), &["a", "b"])
            .unwrap()
            .row(&["3".into(), "4".into()])
            .unwrap();
        assert_eq!(fs::read_to_string(path).unwrap(), "a,b\n1,2\n3,4\n");
    }
}
