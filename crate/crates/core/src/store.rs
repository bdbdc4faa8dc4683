//! Flat-file persistence: JSONL datasets, atomic writes, run manifests, and
//! the pipeline configuration file.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::PuzzleSpec;
use crate::llm::LlmConfig;
use crate::synthesis::compile_constraints;

/// Environment variable overriding manifest timestamps, for reproducible
/// byte-identical outputs across runs.
pub const EPOCH_ENV: &str = "LOGIGEN_EPOCH";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("bad config: {0}")]
    Config(String),
}

/// Writes bytes via a temporary file in the target directory, then renames
/// into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Serializes items one JSON object per line.
pub fn save_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), StoreError> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)
            .map_err(|e| StoreError::Config(e.to_string()))?;
        out.push(b'\n');
    }
    write_atomic(path, &out)?;
    Ok(())
}

/// Reads one JSON object per line; blank lines are skipped.
pub fn load_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let text = std::fs::read_to_string(path)?;
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| StoreError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

pub fn save_puzzles(path: &Path, puzzles: &[PuzzleSpec]) -> Result<(), StoreError> {
    save_jsonl(path, puzzles)
}

/// Loads puzzles and fully revalidates each line: structural invariants,
/// schema/domain agreement, example conformance, and every constraint
/// expression parsing and type-checking.
pub fn load_puzzles(path: &Path) -> Result<Vec<PuzzleSpec>, StoreError> {
    let text = std::fs::read_to_string(path)?;
    let mut puzzles = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| StoreError::Schema {
            line: i + 1,
            message,
        };
        let puzzle: PuzzleSpec =
            serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        puzzle.validate().map_err(|e| fail(e.to_string()))?;
        compile_constraints(&puzzle).map_err(|e| fail(e.to_string()))?;
        puzzles.push(puzzle);
    }
    Ok(puzzles)
}

pub fn file_digest(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Seconds since the Unix epoch, or the `LOGIGEN_EPOCH` override.
pub fn current_epoch() -> u64 {
    if let Ok(v) = std::env::var(EPOCH_ENV) {
        if let Ok(n) = v.parse() {
            return n;
        }
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Everything needed to reproduce a run with the scripted backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// (template name, sha256 of template text)
    pub template_hashes: Vec<(String, String)>,
    pub backend: String,
    /// path → sha256 of every input file.
    pub inputs: BTreeMap<String, String>,
    /// path → sha256 of every output file.
    pub outputs: BTreeMap<String, String>,
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            config,
            seeds: Vec::new(),
            template_hashes: Vec::new(),
            backend: String::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timestamp: current_epoch(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> std::io::Result<()> {
        self.inputs
            .insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) -> std::io::Result<()> {
        self.outputs
            .insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    /// Writes the manifest beside the primary output as
    /// `<output>.manifest.json`.
    pub fn write_beside(&self, primary_output: &Path) -> Result<PathBuf, StoreError> {
        let mut name = primary_output.as_os_str().to_owned();
        name.push(".manifest.json");
        let path = PathBuf::from(name);
        let mut bytes = serde_json::to_vec_pretty(self)
            .map_err(|e| StoreError::Config(e.to_string()))?;
        bytes.push(b'\n');
        write_atomic(&path, &bytes)?;
        Ok(path)
    }
}

/// The pipeline configuration file (TOML).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_trials")]
    pub trials: u32,
    #[serde(default = "default_eval_temperature")]
    pub eval_temperature: f64,
    #[serde(default = "default_rounds")]
    pub sample_rounds: u32,
}

fn default_retries() -> u32 {
    crate::synthesis::DEFAULT_RETRIES
}

fn default_max_attempts() -> u32 {
    crate::augment::DEFAULT_MAX_ATTEMPTS
}

fn default_trials() -> u32 {
    5
}

fn default_eval_temperature() -> f64 {
    0.2
}

fn default_rounds() -> u32 {
    crate::training::DEFAULT_ROUNDS
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig, StoreError> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| StoreError::Config(e.to_string()))
    }

    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{athletes_puzzle, islands_puzzle};

    #[test]
    fn puzzles_round_trip_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("puzzles.jsonl");
        let puzzles = vec![islands_puzzle(), athletes_puzzle()];
        save_puzzles(&path, &puzzles).unwrap();
        let loaded = load_puzzles(&path).unwrap();
        assert_eq!(loaded, puzzles);
    }

    #[test]
    fn bad_dsl_line_is_reported_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("puzzles.jsonl");
        let good = islands_puzzle();
        let mut bad = athletes_puzzle();
        bad.constraints[0].expr = "pos(colors, S) = 1".into();
        save_puzzles(&path, &[good, bad]).unwrap();
        match load_puzzles(&path).unwrap_err() {
            StoreError::Schema { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_file_loads_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(load_puzzles(&path).unwrap().is_empty());
    }

    #[test]
    fn cn_text_survives_round_trip_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cn.jsonl");
        let mut puzzle = islands_puzzle();
        puzzle.language = crate::domain::Language::Cn;
        puzzle.background = "五座火山岛 E、F、G、H、I 自北向南排成一条直线。".into();
        puzzle.constraints[0].text = "F 与 H 相邻，且位于 H 的北侧。".into();
        save_puzzles(&path, std::slice::from_ref(&puzzle)).unwrap();
        let loaded = load_puzzles(&path).unwrap();
        assert_eq!(loaded[0].background, puzzle.background);
        assert_eq!(loaded[0].constraints[0].text, puzzle.constraints[0].text);
    }

    #[test]
    fn manifest_writes_beside_output() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("puzzles.jsonl");
        save_puzzles(&out, &[islands_puzzle()]).unwrap();
        let mut manifest = RunManifest::new("synthesize", serde_json::json!({}));
        manifest.timestamp = 1_700_000_000;
        manifest.record_output(&out).unwrap();
        let path = manifest.write_beside(&out).unwrap();
        assert_eq!(path, dir.path().join("puzzles.jsonl.manifest.json"));
        let loaded: RunManifest =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(loaded, manifest);
    }

    #[test]
    fn atomic_write_replaces_existing_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
    }

    #[test]
    fn config_parses_with_defaults() {
        let cfg: PipelineConfig = toml::from_str("").unwrap();
        assert_eq!(cfg.retries, 3);
        assert_eq!(cfg.max_attempts, 8);
        assert_eq!(cfg.trials, 5);
        assert_eq!(cfg.sample_rounds, 8);

        let cfg: PipelineConfig = toml::from_str(
            r#"
            seed = 7
            [llm.backend]
            kind = "http"
            url = "https://example.invalid/v1/chat"
            model = "my-model"
            key_env = "MY_KEY"
            [llm.retry]
            max = 5
            base_ms = 10
            [llm.concurrency]
            max_in_flight = 2
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.llm.backend.kind, "http");
        assert_eq!(cfg.llm.retry.max, 5);
        assert_eq!(cfg.llm.concurrency.max_in_flight, 2);
    }
}
