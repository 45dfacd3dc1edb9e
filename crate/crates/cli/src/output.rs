//! CSV tables, manifest and summary files.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentId;
use crate::error::CliResult;

pub const TOOL: &str = "evidence-cli";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One CSV file, already encoded.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub bytes: Vec<u8>,
}

/// Encode rows with a header taken from the row type's field names.
pub fn table<T: Serialize>(file: &str, rows: &[T]) -> CliResult<Table> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let bytes = w
        .into_inner()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(Table {
        file: file.to_string(),
        bytes,
    })
}

/// Everything an experiment produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub tables: Vec<Table>,
    pub summary: Value,
}

pub fn manifest(experiment: ExperimentId, seed: u64, config: &Value) -> Value {
    json!({
        "tool": TOOL,
        "version": VERSION,
        "experiment": experiment.name(),
        "seed": seed,
        "config": config,
    })
}

pub fn write_all(out: &Path, manifest: &Value, artifacts: &Artifacts) -> CliResult<Vec<String>> {
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> CliResult<()> {
        fs::write(out.join(name), bytes)?;
        written.push(name.to_string());
        Ok(())
    };
    put("manifest.json", &pretty(manifest)?)?;
    for t in &artifacts.tables {
        put(&t.file, &t.bytes)?;
    }
    put("summary.json", &pretty(&artifacts.summary)?)?;
    Ok(written)
}

fn pretty(v: &Value) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        a: f64,
        b: Option<usize>,
        error: String,
    }

    #[test]
    fn csv_schema() {
        let t = table(
            "t.csv",
            &[
                Row {
                    a: 0.5,
                    b: Some(2),
                    error: String::new(),
                },
                Row {
                    a: 1e-3,
                    b: None,
                    error: "boom".into(),
                },
            ],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(t.bytes).unwrap(),
            "a,b,error\n0.5,2,\n0.001,,boom\n"
        );
    }
}
