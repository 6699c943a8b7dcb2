//! CSV and JSON encoding. Writing to disk happens once, after the
//! experiment finished, so artifacts never interleave.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::{Artifact, RunError, RunManifest};

/// Accumulates CSV rows in memory.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(header.iter().map(|h| h.as_ref()))
            .expect("in-memory write");
        Self { writer }
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        self.writer
            .write_record(cells.iter().map(|c| c.as_ref()))
            .expect("in-memory write");
    }

    pub fn finish(self, name: &str) -> Artifact {
        Artifact {
            name: name.to_string(),
            bytes: self.writer.into_inner().expect("in-memory flush"),
        }
    }
}

/// Shortest round-trip representation.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// `prefix_1 .. prefix_d`.
pub fn columns(prefix: &str, dim: usize) -> Vec<String> {
    (1..=dim).map(|j| format!("{prefix}_{j}")).collect()
}

pub fn json<T: Serialize>(name: &str, value: &T) -> Result<Artifact, RunError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| RunError::Output(format!("cannot encode {name}: {e}")))?;
    bytes.push(b'\n');
    Ok(Artifact {
        name: name.to_string(),
        bytes,
    })
}

pub fn write_all(
    dir: &Path,
    artifacts: &[Artifact],
    manifest: &RunManifest,
) -> Result<(), RunError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        fs::write(&path, &a.bytes).map_err(io(&path))?;
    }
    let m = json("manifest.json", manifest)?;
    let path = dir.join(&m.name);
    fs::write(&path, &m.bytes).map_err(io(&path))
}
