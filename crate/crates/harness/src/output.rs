//! Artifact emission: CSV tables with 17 significant digits and the
//! manifest with content hashes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

/// Float cell with 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// A CSV file in the making; every row must match the header width.
pub struct Table {
    header: Vec<&'static str>,
    body: String,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            body: String::new(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.header.len(), "row width differs from header");
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    pub fn render(&self) -> String {
        format!("{}\n{}", self.header.join(","), self.body)
    }

    pub fn write(&self, path: &Path) -> Result<PathBuf> {
        fs::write(path, self.render()).with_context(|| format!("writing {}", path.display()))?;
        Ok(path.to_path_buf())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// manifest.toml next to the outputs: config hash, seed, versions and one
/// entry per file with its SHA-256.
pub fn write_manifest(dir: &Path, subcommand: &str, config_bytes: &[u8], seed: u64, files: &[PathBuf]) -> Result<PathBuf> {
    let mut s = String::new();
    writeln!(s, "subcommand = \"{subcommand}\"")?;
    writeln!(s, "config_sha256 = \"{}\"", sha256_hex(config_bytes))?;
    writeln!(s, "seed = {seed}")?;
    writeln!(s, "kmv_version = \"{}\"", env!("CARGO_PKG_VERSION"))?;
    writeln!(s, "kmv_core_version = \"{}\"", kmv_core::VERSION)?;
    let mut sorted: Vec<&PathBuf> = files.iter().collect();
    sorted.sort();
    for f in sorted {
        let bytes = fs::read(f).with_context(|| format!("hashing {}", f.display()))?;
        let rel = f.strip_prefix(dir).unwrap_or(f);
        writeln!(s, "\n[[file]]")?;
        writeln!(s, "path = \"{}\"", rel.display().to_string().replace('\\', "/"))?;
        writeln!(s, "sha256 = \"{}\"", sha256_hex(&bytes))?;
        writeln!(s, "bytes = {}", bytes.len())?;
    }
    let path = dir.join("manifest.toml");
    fs::write(&path, s)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        let x = 0.1f64 + 0.2;
        assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn manifest_lists_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "x\n1\n").unwrap();
        let m = write_manifest(dir.path(), "simulate", b"cfg", 3, &[p]).unwrap();
        let text = fs::read_to_string(m).unwrap();
        assert!(text.contains("path = \"a.csv\""));
        assert!(text.contains(&sha256_hex(b"x\n1\n")));
    }
}
