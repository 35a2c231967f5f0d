//! Run configuration, snapshots and CSV exports.
//!
//! A snapshot is one JSON document `{version, config, state}` holding the
//! effective configuration and the complete [`RunState`], genome sources
//! included. Writes go to a sibling temp file that is renamed into place, so
//! a reader sees either the previous generation or the new one.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{GenomeId, NetworkGenome, NetworkIndividual, Origin, PromptIndividual};
use crate::eval::{EvaluatorConfig, EvaluatorKind};
use crate::llm::{BackendConfig, BackendKind};
use crate::operators::{extract_genome, seed_genome, PromptCatalog};
use crate::qd::CvtArchive;
use crate::search::{GenerationLog, RunState, SearchConfig};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("snapshot version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One file drives a whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default = "default_backend")]
    pub backend: BackendConfig,
    #[serde(default = "EvaluatorConfig::surrogate")]
    pub evaluator: EvaluatorConfig,
    /// JSON prompt catalog replacing the built-in one.
    #[serde(default)]
    pub prompt_catalog: Option<PathBuf>,
    /// File containing the starting network class.
    #[serde(default)]
    pub seed_genome: Option<PathBuf>,
}

fn default_backend() -> BackendConfig {
    BackendConfig::scripted(0)
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            backend: default_backend(),
            evaluator: EvaluatorConfig::surrogate(),
            prompt_catalog: None,
            seed_genome: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, PersistError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| PersistError::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    /// All field-level problems, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = self.search.validate() {
            out.push(e.to_string());
        }
        if let Err(e) = self.backend.validate() {
            out.push(e.to_string());
        }
        if let Err(e) = self.evaluator.validate() {
            out.push(e.to_string());
        }
        for (name, path) in [("prompt_catalog", &self.prompt_catalog), ("seed_genome", &self.seed_genome)] {
            if let Some(p) = path {
                if !p.is_file() {
                    out.push(format!("{name}: {} does not exist", p.display()));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), PersistError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PersistError::Invalid(problems.join("; ")))
        }
    }

    pub fn catalog(&self) -> Result<PromptCatalog, PersistError> {
        match &self.prompt_catalog {
            None => Ok(PromptCatalog::default()),
            Some(p) => PromptCatalog::load(p).map_err(|e| PersistError::Invalid(e.to_string())),
        }
    }

    pub fn seed(&self) -> Result<NetworkGenome, PersistError> {
        match &self.seed_genome {
            None => Ok(seed_genome(GenomeId(0))),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(io_err(p))?;
                extract_genome(&text, GenomeId(0), vec![], Origin::Seed)
                    .map_err(|e| PersistError::Invalid(format!("{}: {e}", p.display())))
            }
        }
    }

    /// sha256 of the canonical JSON form. Object keys are sorted, so the
    /// hash does not depend on field order in the source file.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u32,
    pub config: RunConfig,
    pub state: RunState,
}

impl Snapshot {
    pub fn new(config: RunConfig, state: RunState) -> Self {
        Self {
            version: SNAPSHOT_VERSION,
            config,
            state,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self, PersistError> {
        let parse = |msg: String| PersistError::Parse {
            path: origin.to_path_buf(),
            msg,
        };
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse(e.to_string()))?;
        let found = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| parse("missing snapshot version".into()))?;
        if found != SNAPSHOT_VERSION as u64 {
            return Err(PersistError::VersionMismatch {
                found,
                expected: SNAPSHOT_VERSION,
            });
        }
        serde_json::from_value(value).map_err(|e| parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PersistError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<(), PersistError> {
        write_atomic(path, self.to_json().as_bytes())
    }
}

/// Writes `bytes` to `path` through a temp file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PersistError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn log_line(log: &GenerationLog) -> String {
    serde_json::to_string(log).expect("log serializes")
}

/// Run bookkeeping written next to the logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub seed_genome_path: Option<PathBuf>,
    pub backend_kind: BackendKind,
    pub evaluator_kind: EvaluatorKind,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn new(config: &RunConfig, started_at: String) -> Self {
        Self {
            config_hash: config.hash(),
            code_version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
            started_at,
            finished_at: None,
            seed_genome_path: config.seed_genome.clone(),
            backend_kind: config.backend.kind,
            evaluator_kind: config.evaluator.kind,
            config: config.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportTarget {
    NetworkArchive,
    PromptArchive,
    Curve,
}

impl std::str::FromStr for ExportTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "network-archive" => Ok(Self::NetworkArchive),
            "prompt-archive" => Ok(Self::PromptArchive),
            "curve" => Ok(Self::Curve),
            _ => Err(format!(
                "unknown export target {s:?}; expected network-archive, prompt-archive or curve"
            )),
        }
    }
}

#[derive(Serialize)]
struct NetworkRow {
    centroid_index: usize,
    centroid_x: f64,
    centroid_y: f64,
    descriptor_x: f64,
    descriptor_y: f64,
    score: f64,
    occupant_id: String,
    depth: u64,
    width: u64,
    flops: f64,
}

#[derive(Serialize)]
struct PromptRow {
    centroid_index: usize,
    centroid_x: f64,
    centroid_y: f64,
    descriptor_x: f64,
    descriptor_y: f64,
    score: f64,
    occupant_id: String,
    prompt_id: u8,
    temperature: f64,
    curiosity: f64,
}

#[derive(Serialize)]
struct CurveRow {
    generation: u64,
    operator: crate::search::Operator,
    best_loss: Option<f64>,
    trainable_count: usize,
}

fn to_csv<R: Serialize>(rows: impl IntoIterator<Item = R>, header: &[&str]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn centroid<T>(a: &CvtArchive<T>, i: usize) -> (f64, f64) {
    let c = a.centroid_set().centroids[i];
    (c.x(), c.y())
}

/// One row per filled cell.
pub fn network_archive_csv(a: &CvtArchive<NetworkIndividual>) -> String {
    let rows = a.cells().map(|c| {
        let (cx, cy) = centroid(a, c.centroid_index);
        NetworkRow {
            centroid_index: c.centroid_index,
            centroid_x: cx,
            centroid_y: cy,
            descriptor_x: c.descriptor.x(),
            descriptor_y: c.descriptor.y(),
            score: c.score,
            occupant_id: c.occupant.genome.id.to_string(),
            depth: c.occupant.metrics.depth,
            width: c.occupant.metrics.width,
            flops: c.occupant.metrics.flops,
        }
    });
    to_csv(
        rows,
        &[
            "centroid_index", "centroid_x", "centroid_y", "descriptor_x", "descriptor_y", "score",
            "occupant_id", "depth", "width", "flops",
        ],
    )
}

pub fn prompt_archive_csv(a: &CvtArchive<PromptIndividual>) -> String {
    let rows = a.cells().map(|c| {
        let (cx, cy) = centroid(a, c.centroid_index);
        PromptRow {
            centroid_index: c.centroid_index,
            centroid_x: cx,
            centroid_y: cy,
            descriptor_x: c.descriptor.x(),
            descriptor_y: c.descriptor.y(),
            score: c.score,
            occupant_id: format!("p{}@{}", c.occupant.prompt_id, c.occupant.temperature),
            prompt_id: c.occupant.prompt_id,
            temperature: c.occupant.temperature,
            curiosity: c.occupant.curiosity,
        }
    });
    to_csv(
        rows,
        &[
            "centroid_index", "centroid_x", "centroid_y", "descriptor_x", "descriptor_y", "score",
            "occupant_id", "prompt_id", "temperature", "curiosity",
        ],
    )
}

pub fn curve_csv(history: &[GenerationLog]) -> String {
    let rows = history.iter().map(|l| CurveRow {
        generation: l.generation,
        operator: l.operator,
        best_loss: l.best_loss.is_finite().then_some(l.best_loss),
        trainable_count: l.batch_trainable_count,
    });
    to_csv(rows, &["generation", "operator", "best_loss", "trainable_count"])
}

pub fn export(state: &RunState, target: ExportTarget) -> String {
    match target {
        ExportTarget::NetworkArchive => network_archive_csv(&state.network_archive),
        ExportTarget::PromptArchive => prompt_archive_csv(&state.prompt_archive),
        ExportTarget::Curve => curve_csv(&state.history),
    }
}
