//! Deterministic file output: CSV fields with 17 significant digits, JSON
//! manifests with content hashes, and the write-once profile cache.

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

use dipole_core::{Extension, Field, Grid};

pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Track files written during one run so a failure can clean them up.
#[derive(Default)]
pub struct OutputSet {
    written: Vec<PathBuf>,
}

impl OutputSet {
    pub fn write(&mut self, path: &Path, contents: &str) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.written
    }

    /// Remove everything written so far (used on failure).
    pub fn discard(&mut self) {
        for p in self.written.drain(..) {
            let _ = fs::remove_file(p);
        }
    }
}

pub fn field_csv(f: &Field) -> String {
    let g = f.grid();
    let mut s = String::with_capacity(f.len() * 48);
    s.push_str("x,value\n");
    for (i, v) in f.values().iter().enumerate() {
        s.push_str(&fmt17(g.x(i)));
        s.push(',');
        s.push_str(&fmt17(*v));
        s.push('\n');
    }
    s
}

/// Rebuild a field from its (x, value) CSV; the grid is implied by the
/// x column.
pub fn field_from_csv(text: &str, extension: Extension) -> Result<Field> {
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
            continue;
        }
        let mut cols = line.split(',');
        xs.push(cols.next().context("missing x")?.trim().parse::<f64>()?);
        vs.push(cols.next().context("missing value")?.trim().parse::<f64>()?);
    }
    anyhow::ensure!(xs.len() >= 2, "field CSV needs at least two rows");
    let h = xs[1] - xs[0];
    for w in xs.windows(2) {
        anyhow::ensure!(
            ((w[1] - w[0]) - h).abs() < 1e-9 * h.abs(),
            "field CSV must be uniformly spaced"
        );
    }
    Ok(Field::new(Grid::new(xs[0], h, xs.len()), vs, extension))
}

pub fn grid_json(g: &Grid) -> serde_json::Value {
    serde_json::json!({
        "x_min": g.x_min(),
        "x_max": g.x_max(),
        "h": g.h(),
        "nodes": g.len(),
    })
}

pub fn sha256_hex(data: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(data);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Content-addressed cache with write-once semantics.
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: PathBuf) -> Self {
        Cache { dir }
    }

    pub fn path_for(&self, kind: &str, key: &str) -> PathBuf {
        let h = sha256_hex(key.as_bytes());
        self.dir.join(format!("{kind}-{}.csv", &h[..16]))
    }

    pub fn load_field(&self, kind: &str, key: &str, ext: Extension) -> Option<Field> {
        let p = self.path_for(kind, key);
        let text = fs::read_to_string(p).ok()?;
        field_from_csv(&text, ext).ok()
    }

    pub fn store_field(&self, kind: &str, key: &str, f: &Field) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let p = self.path_for(kind, key);
        if !p.exists() {
            let tmp = p.with_extension("tmp");
            fs::write(&tmp, field_csv(f))?;
            fs::rename(tmp, p)?;
        }
        Ok(())
    }
}
