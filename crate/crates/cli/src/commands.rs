use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::Path;

use qdnas_core::eval::{Evaluator, WorkerConfig};
use qdnas_core::llm::CompletionBackend;
use qdnas_core::persist::{export as export_view, log_line, write_atomic, ExportTarget, RunConfig, RunManifest, Snapshot};
use qdnas_core::qd::generate_centroids;
use qdnas_core::search::{RunState, Search};

use crate::{CliError, Overrides};

const SNAPSHOT_FILE: &str = "snapshot.json";
const LOG_FILE: &str = "generations.jsonl";
const MANIFEST_FILE: &str = "manifest.json";
const CONFIG_FILE: &str = "config.json";

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Config file (or defaults) with command-line overrides applied, validated.
fn effective_config(o: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = match &o.config {
        Some(path) if !path.is_file() => {
            return Err(CliError::Usage(format!("config file {} not found", path.display())));
        }
        Some(path) => RunConfig::load(path).map_err(|e| CliError::Usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(m) = o.mode {
        cfg.search.mode = m;
    }
    if let Some(s) = o.seed {
        cfg.search.rng_seed = s;
    }
    if let Some(g) = o.generations {
        cfg.search.generations = g;
    }
    if let Some(b) = o.batch_size {
        cfg.search.batch_size = b;
    }
    if let Some(k) = o.backend {
        cfg.backend.kind = k;
    }
    if let Some(k) = o.evaluator {
        cfg.evaluator.kind = k;
    }
    if let Some(cmd) = &o.worker_cmd {
        match &mut cfg.evaluator.worker {
            Some(w) => w.command = cmd.clone(),
            None => cfg.evaluator.worker = Some(WorkerConfig::new(cmd.clone())),
        }
    }
    let problems = cfg.problems();
    if !problems.is_empty() {
        let mut msg = String::from("invalid configuration:");
        for p in problems {
            msg.push_str("\n  ");
            msg.push_str(&p);
        }
        return Err(CliError::Usage(msg));
    }
    Ok(cfg)
}

pub fn validate_config(o: &Overrides) -> Result<(), CliError> {
    let cfg = effective_config(o)?;
    emit(&format!("{}\n", serde_json::to_string_pretty(&cfg).expect("config serializes")))
}

pub fn run(o: &Overrides, out: &Path) -> Result<(), CliError> {
    let cfg = effective_config(o)?;
    fs::create_dir_all(out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    let mut manifest = RunManifest::new(&cfg, now());
    write_json(&out.join(CONFIG_FILE), &cfg)?;
    write_json(&out.join(MANIFEST_FILE), &manifest)?;

    let backend = cfg.backend.build().map_err(runtime)?;
    let evaluator = cfg.evaluator.build().map_err(runtime)?;
    let search = build_search(&cfg, backend.as_ref(), evaluator.as_ref())?;
    let mut state = search.initial_state().map_err(runtime)?;
    File::create(out.join(LOG_FILE)).map_err(runtime)?;
    Snapshot::new(cfg.clone(), state.clone())
        .save(&out.join(SNAPSHOT_FILE))
        .map_err(runtime)?;

    drive(&search, &cfg, &mut state, out)?;
    manifest.finished_at = Some(now());
    write_json(&out.join(MANIFEST_FILE), &manifest)
}

pub fn resume(snapshot: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let snap = Snapshot::load(snapshot).map_err(runtime)?;
    let cfg = snap.config;
    let mut state = snap.state;
    if state.finished(&cfg.search) {
        eprintln!(
            "run already finished at generation {}; nothing to do",
            state.generation
        );
        return Ok(());
    }
    let out = match out {
        Some(o) => o.to_path_buf(),
        None => snapshot
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| ".".into()),
    };
    fs::create_dir_all(&out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    // The log is rebuilt from the snapshot so it never runs ahead of it.
    let mut log = String::new();
    for l in &state.history {
        log.push_str(&log_line(l));
        log.push('\n');
    }
    write_atomic(&out.join(LOG_FILE), log.as_bytes()).map_err(runtime)?;

    let backend = cfg.backend.build().map_err(runtime)?;
    let evaluator = cfg.evaluator.build().map_err(runtime)?;
    let search = build_search(&cfg, backend.as_ref(), evaluator.as_ref())?;
    drive(&search, &cfg, &mut state, &out)?;

    let manifest_path = out.join(MANIFEST_FILE);
    let mut manifest = fs::read_to_string(&manifest_path)
        .ok()
        .and_then(|t| serde_json::from_str::<RunManifest>(&t).ok())
        .unwrap_or_else(|| RunManifest::new(&cfg, now()));
    manifest.finished_at = Some(now());
    write_json(&manifest_path, &manifest)
}

pub fn export(snapshot: &Path, target: ExportTarget, out: Option<&Path>) -> Result<(), CliError> {
    let snap = Snapshot::load(snapshot).map_err(runtime)?;
    let csv = export_view(&snap.state, target);
    match out {
        Some(p) => fs::write(p, csv).map_err(|e| runtime(format!("{}: {e}", p.display()))),
        None => emit(&csv),
    }
}

pub fn gen_centroids(k: usize, samples: usize, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    let set = generate_centroids(k, samples, seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let json = serde_json::to_string_pretty(&set).expect("centroids serialize");
    match out {
        Some(p) => fs::write(p, json).map_err(|e| runtime(format!("{}: {e}", p.display()))),
        None => emit(&format!("{json}\n")),
    }
}

fn build_search<'a>(
    cfg: &RunConfig,
    backend: &'a dyn CompletionBackend,
    evaluator: &'a dyn Evaluator,
) -> Result<Search<'a>, CliError> {
    let catalog = cfg.catalog().map_err(|e| CliError::Usage(e.to_string()))?;
    let seed = cfg.seed().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Search::new(cfg.search.clone(), backend, evaluator)
        .map_err(|e| CliError::Usage(e.to_string()))?
        .with_catalog(catalog)
        .with_seed_genome(seed)
        .with_budget(cfg.evaluator.budget.clone()))
}

/// Runs to completion, appending a log line and replacing the snapshot after
/// every generation.
fn drive(search: &Search<'_>, cfg: &RunConfig, state: &mut RunState, out: &Path) -> Result<(), CliError> {
    let log_path = out.join(LOG_FILE);
    let snap_path = out.join(SNAPSHOT_FILE);
    let mut log = OpenOptions::new()
        .append(true)
        .create(true)
        .open(&log_path)
        .map_err(|e| runtime(format!("{}: {e}", log_path.display())))?;
    search
        .run_from(state, |st, entry| {
            writeln!(log, "{}", log_line(entry)).map_err(|e| e.to_string())?;
            log.flush().map_err(|e| e.to_string())?;
            Snapshot::new(cfg.clone(), st.clone())
                .save(&snap_path)
                .map_err(|e| e.to_string())
        })
        .map_err(|e| {
            runtime(format!(
                "{e} (last good snapshot: {})",
                snap_path.display()
            ))
        })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    write_atomic(path, text.as_bytes()).map_err(runtime)
}

/// Stdout writer that treats a closed pipe (`| head`) as success.
fn emit(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(runtime(e)),
        _ => Ok(()),
    }
}
