//! Result files and the run manifest.
//!
//! Every table is written to `<name>.partial` and renamed once the pipeline
//! has finished, so an interrupted run leaves only `.partial` files and no
//! manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, ExperimentConfig};
use crate::error::HarnessError;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "SYMRM_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "symrm-out";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}

/// Output directory of a run. Relative `output_dir` values resolve against
/// `root`; without one the directory is `<root>/<pipeline>-<config hash>`.
pub fn resolve_output_dir(config: &ExperimentConfig, root: &Path) -> PathBuf {
    match &config.output_dir {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => root.join(p),
        None => root.join(format!("{}-{}", config.pipeline.name(), &config.hash()[..12])),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub pipeline: String,
    pub config_hash: String,
    pub code_version: String,
    pub master_seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub stages: Vec<StageTime>,
    pub files: Vec<FileEntry>,
}

pub struct Outputs {
    pub dir: PathBuf,
    pending: Vec<String>,
    stages: Vec<StageTime>,
    started: u64,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl Outputs {
    pub fn create(dir: PathBuf) -> Result<Self, HarnessError> {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let stale = dir.join("manifest.json");
        if stale.exists() {
            fs::remove_file(&stale).map_err(io_err(&stale))?;
        }
        Ok(Self { dir, pending: Vec::new(), stages: Vec::new(), started: unix_now() })
    }

    fn partial_path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.partial"))
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>, HarnessError> {
        let path = self.partial_path(name);
        let f = File::create(&path).map_err(io_err(&path))?;
        self.pending.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    pub fn csv(&mut self, name: &str, header: &[&str]) -> Result<CsvTable, HarnessError> {
        let path = self.partial_path(name);
        let mut w = csv::Writer::from_writer(self.open(name)?);
        w.write_record(header).map_err(|e| csv_err(&path, e))?;
        Ok(CsvTable { w, path, width: header.len() })
    }

    pub fn jsonl(&mut self, name: &str) -> Result<JsonLines, HarnessError> {
        let path = self.partial_path(name);
        Ok(JsonLines { w: self.open(name)?, path })
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), HarnessError> {
        let path = self.partial_path(name);
        let mut w = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| HarnessError::Io { path: path.display().to_string(), source: e.into() })?;
        w.write_all(b"\n").map_err(io_err(&path))?;
        w.flush().map_err(io_err(&path))
    }

    /// Time a stage and record it for the manifest.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T, HarnessError>) -> Result<T, HarnessError> {
        let t = Instant::now();
        let out = f(self)?;
        self.stages.push(StageTime { stage: name.to_string(), seconds: t.elapsed().as_secs_f64() });
        Ok(out)
    }

    /// Promote all partial files and write the manifest atomically.
    pub fn finish(self, config: &ExperimentConfig) -> Result<RunManifest, HarnessError> {
        let mut files = Vec::new();
        for name in &self.pending {
            let from = self.partial_path(name);
            let to = self.dir.join(name);
            fs::rename(&from, &to).map_err(io_err(&from))?;
            let bytes = fs::read(&to).map_err(io_err(&to))?;
            files.push(FileEntry { path: name.clone(), bytes: bytes.len() as u64, sha256: hex(&Sha256::digest(&bytes)) });
        }
        let manifest = RunManifest {
            pipeline: config.pipeline.name().to_string(),
            config_hash: config.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: config.master_seed,
            started_unix: self.started,
            finished_unix: unix_now(),
            stages: self.stages,
            files,
        };
        let tmp = self.dir.join("manifest.json.tmp");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(&tmp, text).map_err(io_err(&tmp))?;
        let dst = self.dir.join("manifest.json");
        fs::rename(&tmp, &dst).map_err(io_err(&tmp))?;
        Ok(manifest)
    }
}

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::Io { path: path.display().to_string(), source: std::io::Error::other(e.to_string()) }
}

pub struct CsvTable {
    w: csv::Writer<BufWriter<File>>,
    path: PathBuf,
    width: usize,
}

/// A CSV cell. Floats use the shortest representation that round-trips.
pub enum Cell {
    S(String),
    U(u64),
    F(f64),
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::S(s.to_string())
    }
}
impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::S(s)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v as u64)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::U(v)
    }
}
impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::S(s) => s.clone(),
            Cell::U(v) => v.to_string(),
            Cell::F(v) if v.is_nan() => "nan".into(),
            Cell::F(v) if v.is_infinite() => if *v > 0.0 { "inf".into() } else { "-inf".into() },
            Cell::F(v) if *v == 0.0 => "0e0".into(),
            Cell::F(v) => format!("{v:e}"),
        }
    }
}

impl CsvTable {
    pub fn row(&mut self, cells: Vec<Cell>) -> Result<(), HarnessError> {
        assert_eq!(cells.len(), self.width, "row width");
        let rec: Vec<String> = cells.iter().map(Cell::render).collect();
        self.w.write_record(&rec).map_err(|e| csv_err(&self.path, e))
    }

    pub fn close(mut self) -> Result<(), HarnessError> {
        self.w.flush().map_err(io_err(&self.path))
    }
}

pub struct JsonLines {
    w: BufWriter<File>,
    path: PathBuf,
}

impl JsonLines {
    pub fn push<T: Serialize>(&mut self, value: &T) -> Result<(), HarnessError> {
        let line = serde_json::to_string(value).expect("record serializes");
        writeln!(self.w, "{line}").map_err(io_err(&self.path))
    }

    pub fn close(mut self) -> Result<(), HarnessError> {
        self.w.flush().map_err(io_err(&self.path))
    }
}

#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($crate::output::Cell::from($x)),*] };
}
