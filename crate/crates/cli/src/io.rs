use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::CliError;

pub fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Writes through a temp file in the target directory, then renames.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<&mut NamedTempFile>) -> Result<(), String>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let io_err = |e: std::io::Error| CliError::Data(format!("{}: {e}", path.display()));
    fs::create_dir_all(&dir).map_err(io_err)?;
    let mut tmp = NamedTempFile::new_in(&dir).map_err(io_err)?;
    {
        let mut w = BufWriter::new(&mut tmp);
        fill(&mut w).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        w.flush().map_err(io_err)?;
    }
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Machine-readable record of one invocation.
pub struct RunLog {
    subcommand: &'static str,
    seed: Option<u64>,
    inputs: Vec<Value>,
    outputs: Vec<String>,
    counts: Map<String, Value>,
    extra: Map<String, Value>,
}

impl RunLog {
    pub fn new(subcommand: &'static str) -> Self {
        RunLog {
            subcommand,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            counts: Map::new(),
            extra: Map::new(),
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let digest = sha256_file(path)?;
        self.inputs.push(json!({ "path": path.display().to_string(), "sha256": digest }));
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn count(&mut self, key: &str, value: impl Into<Value>) {
        self.counts.insert(key.to_string(), value.into());
    }

    pub fn field(&mut self, key: &str, value: impl Into<Value>) {
        self.extra.insert(key.to_string(), value.into());
    }

    pub fn emit(self, target: Option<&Path>) -> Result<(), CliError> {
        let mut doc = Map::new();
        doc.insert("tool".into(), json!(format!("pinsim {}", env!("CARGO_PKG_VERSION"))));
        doc.insert("subcommand".into(), json!(self.subcommand));
        doc.insert("started_at".into(), json!(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)));
        doc.insert("seed".into(), json!(self.seed));
        doc.insert("inputs".into(), Value::Array(self.inputs));
        doc.insert("outputs".into(), json!(self.outputs));
        doc.insert("counts".into(), Value::Object(self.counts));
        doc.extend(self.extra);
        let doc = Value::Object(doc);
        match target {
            Some(path) => write_atomic(path, |w| {
                serde_json::to_writer_pretty(&mut *w, &doc).map_err(|e| e.to_string())?;
                w.write_all(b"\n").map_err(|e| e.to_string())
            }),
            None => {
                eprintln!("{doc}");
                Ok(())
            }
        }
    }
}
