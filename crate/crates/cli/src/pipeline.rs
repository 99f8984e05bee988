//! Stage orchestration.
//!
//! Runs the selected stages in a fixed topological order, reuses cached
//! artifacts keyed by a checksum over the tool version, the resolved
//! configuration, and the dependency artifacts, and records every stage
//! and emitted file in `manifest.json`. A failed stage is recorded and
//! its dependents are skipped; unrelated stages still run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::artifacts::{
    ConvergeDoc, DarcyDoc, EffectiveDoc, FileRecordDoc, ManifestDoc, PermeabilityDoc,
    ReportDocOut, StageRecordDoc, ToolDoc,
};
use crate::config::{ConfigError, ResolvedConfig};
use crate::stages::{self, StageError, SCHEMA_MANIFEST};

pub const TOOL_NAME: &str = "permlayer";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

/// Pipeline stages in execution order. The order is topological for the
/// dependency graph, so dependencies always run (or resolve from cache)
/// before their dependents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    Cell = 0,
    Effective = 1,
    Darcy = 2,
    Transport = 3,
    Micro = 4,
    Converge = 5,
    Report = 6,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Cell,
        Stage::Effective,
        Stage::Darcy,
        Stage::Transport,
        Stage::Micro,
        Stage::Converge,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Cell => "cell",
            Stage::Effective => "effective",
            Stage::Darcy => "darcy",
            Stage::Transport => "transport",
            Stage::Micro => "micro",
            Stage::Converge => "converge",
            Stage::Report => "report",
        }
    }

    pub fn deps(self) -> &'static [Stage] {
        match self {
            Stage::Cell | Stage::Effective | Stage::Micro | Stage::Converge => &[],
            Stage::Darcy => &[Stage::Cell],
            Stage::Transport => &[Stage::Effective, Stage::Darcy],
            Stage::Report => &[Stage::Converge],
        }
    }

    /// The JSON document dependents read.
    pub fn primary_artifact(self) -> &'static str {
        match self {
            Stage::Cell => "permeability.json",
            Stage::Effective => "effective_diffusion.json",
            Stage::Darcy => "darcy.json",
            Stage::Transport => "transport.json",
            Stage::Micro => "micro.json",
            Stage::Converge => "converge.json",
            Stage::Report => "report.json",
        }
    }

    pub fn parse(text: &str) -> Option<Stage> {
        Stage::ALL.iter().copied().find(|s| s.name() == text)
    }
}

/// Expands a stage selection to its dependency closure, returned in
/// execution order.
pub fn close_selection(initial: &[Stage]) -> Vec<Stage> {
    let mut selected = [false; Stage::ALL.len()];
    let mut work: Vec<Stage> = initial.to_vec();
    while let Some(s) = work.pop() {
        if !selected[s as usize] {
            selected[s as usize] = true;
            work.extend_from_slice(s.deps());
        }
    }
    Stage::ALL
        .iter()
        .copied()
        .filter(|s| selected[*s as usize])
        .collect()
}

/// Cross-checks the configuration against the stages about to run, so a
/// selection that cannot succeed is rejected before any solver starts.
pub fn check_stage_requirements(
    cfg: &ResolvedConfig,
    selection: &[Stage],
) -> Result<(), ConfigError> {
    let mut violations = Vec::new();
    let has = |s: Stage| selection.contains(&s);
    if (has(Stage::Converge) || has(Stage::Report)) && cfg.epsilons.len() < 2 {
        violations.push(
            "scales.epsilons: the convergence study needs at least two periods to fit scaling \
             slopes"
                .to_string(),
        );
    }
    if has(Stage::Transport) && cfg.transport.is_none() {
        violations.push(
            "physics: the transport stage needs a time grid; set physics.dt and physics.t_end"
                .to_string(),
        );
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(ConfigError::Validation(violations))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o failure: {0}")]
    Io(String),
}

pub struct PipelineOptions {
    pub out_dir: PathBuf,
    /// Requested stages; the dependency closure is added automatically.
    pub stages: Vec<Stage>,
    pub threads: usize,
    /// Cache directory; defaults to `{out_dir}/.cache`.
    pub cache_dir: Option<PathBuf>,
}

pub struct PipelineOutcome {
    /// The closed stage selection that ran, in execution order.
    pub selection: Vec<Stage>,
    pub any_failed: bool,
    /// Whether the report's acceptance checks passed, when that stage ran.
    pub report_checks_passed: Option<bool>,
    pub manifest_path: PathBuf,
    /// The per-stage records as written to the manifest.
    pub stage_records: Vec<StageRecordDoc>,
}

fn io_ctx(what: &str, path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Io(format!("{what} {}: {e}", path.display()))
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn to_json_bytes<T: Serialize>(doc: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(doc).expect("artifact documents serialize");
    text.push('\n');
    text.into_bytes()
}

fn parse_dep<T: DeserializeOwned>(
    primary: &BTreeMap<&'static str, Vec<u8>>,
    dep: Stage,
) -> Result<T, StageError> {
    let bytes = primary
        .get(dep.name())
        .ok_or_else(|| StageError(format!("missing {} artifact", dep.name())))?;
    serde_json::from_slice(bytes)
        .map_err(|e| StageError(format!("could not read the {} artifact: {e}", dep.name())))
}

/// Runs one stage and returns its output files as `(relative path, bytes)`
/// pairs with the primary JSON document first.
fn execute_stage(
    stage: Stage,
    cfg: &ResolvedConfig,
    threads: usize,
    primary: &BTreeMap<&'static str, Vec<u8>>,
) -> Result<Vec<(String, Vec<u8>)>, StageError> {
    let main_name = stage.primary_artifact().to_string();
    match stage {
        Stage::Cell => {
            let doc = stages::run_cell(cfg)?;
            Ok(vec![(main_name, to_json_bytes(&doc))])
        }
        Stage::Effective => {
            let doc = stages::run_effective(cfg)?;
            Ok(vec![(main_name, to_json_bytes(&doc))])
        }
        Stage::Darcy => {
            let perm: PermeabilityDoc = parse_dep(primary, Stage::Cell)?;
            let (doc, dumps) = stages::run_darcy(cfg, &perm)?;
            let mut files = vec![(main_name, to_json_bytes(&doc))];
            files.extend(dumps.into_iter().map(|d| (d.rel_path, d.bytes)));
            Ok(files)
        }
        Stage::Transport => {
            let eff: EffectiveDoc = parse_dep(primary, Stage::Effective)?;
            let darcy: DarcyDoc = parse_dep(primary, Stage::Darcy)?;
            let (doc, dumps) = stages::run_transport(cfg, &eff, &darcy)?;
            let mut files = vec![(main_name, to_json_bytes(&doc))];
            files.extend(dumps.into_iter().map(|d| (d.rel_path, d.bytes)));
            Ok(files)
        }
        Stage::Micro => {
            let (doc, dumps) = stages::run_micro(cfg)?;
            let mut files = vec![(main_name, to_json_bytes(&doc))];
            files.extend(dumps.into_iter().map(|d| (d.rel_path, d.bytes)));
            Ok(files)
        }
        Stage::Converge => {
            let doc = stages::run_converge(cfg, threads)?;
            Ok(vec![(main_name, to_json_bytes(&doc))])
        }
        Stage::Report => {
            let conv: ConvergeDoc = parse_dep(primary, Stage::Converge)?;
            let (doc, csv) = stages::run_report(cfg, &conv)?;
            Ok(vec![
                (main_name, to_json_bytes(&doc)),
                ("sweep.csv".to_string(), csv),
            ])
        }
    }
}

fn write_files(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<(), PipelineError> {
    for (rel, bytes) in files {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_ctx("creating", parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| io_ctx("writing", &path, e))?;
    }
    Ok(())
}

/// Reads a cache entry back as sorted `(relative path, bytes)` pairs.
/// Any problem is treated as a miss.
fn load_cache_entry(root: &Path, primary: &str) -> Option<Vec<(String, Vec<u8>)>> {
    if !root.is_dir() {
        return None;
    }
    let mut out = Vec::new();
    let mut dirs = vec![PathBuf::new()];
    while let Some(rel_dir) = dirs.pop() {
        let entries = fs::read_dir(root.join(&rel_dir)).ok()?;
        for entry in entries {
            let entry = entry.ok()?;
            let rel = rel_dir.join(entry.file_name());
            let kind = entry.file_type().ok()?;
            if kind.is_dir() {
                dirs.push(rel);
            } else {
                let bytes = fs::read(entry.path()).ok()?;
                out.push((rel.to_string_lossy().into_owned(), bytes));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    if out.iter().any(|(p, _)| p == primary) {
        Some(out)
    } else {
        None
    }
}

/// Stores a fresh stage result in the cache. Best effort: a cache write
/// failure only disables reuse, so it is ignored.
fn store_cache_entry(cache_dir: &Path, entry_name: &str, files: &[(String, Vec<u8>)]) {
    let tmp = cache_dir.join(format!(".tmp-{}-{}", entry_name, std::process::id()));
    let _ = fs::remove_dir_all(&tmp);
    if write_files(&tmp, files).is_err() {
        let _ = fs::remove_dir_all(&tmp);
        return;
    }
    let final_dir = cache_dir.join(entry_name);
    if fs::rename(&tmp, &final_dir).is_err() {
        let _ = fs::remove_dir_all(&tmp);
    }
}

pub fn run_pipeline(
    cfg: &ResolvedConfig,
    opts: &PipelineOptions,
) -> Result<PipelineOutcome, PipelineError> {
    let selection = close_selection(&opts.stages);
    check_stage_requirements(cfg, &selection)?;

    let out_dir = &opts.out_dir;
    fs::create_dir_all(out_dir).map_err(|e| io_ctx("creating", out_dir, e))?;
    let cache_dir = opts
        .cache_dir
        .clone()
        .unwrap_or_else(|| out_dir.join(".cache"));
    fs::create_dir_all(&cache_dir).map_err(|e| io_ctx("creating", &cache_dir, e))?;

    let config_doc =
        serde_json::to_value(cfg.document()).expect("configuration document serializes");
    let config_key = serde_json::to_string(&config_doc).expect("configuration document serializes");

    // Primary JSON bytes per completed stage: dependents deserialize from
    // these, so cached and fresh artifacts are interchangeable.
    let mut primary: BTreeMap<&'static str, Vec<u8>> = BTreeMap::new();
    let mut primary_hash: BTreeMap<&'static str, String> = BTreeMap::new();
    let mut completed = [false; Stage::ALL.len()];
    let mut records: Vec<StageRecordDoc> = Vec::new();
    let mut inventory: BTreeMap<String, (u64, String)> = BTreeMap::new();

    for &stage in &selection {
        let started = Instant::now();
        if let Some(dep) = stage
            .deps()
            .iter()
            .copied()
            .find(|d| !completed[*d as usize])
        {
            records.push(StageRecordDoc {
                name: stage.name().to_string(),
                status: "skipped".to_string(),
                cached: false,
                duration_ms: 0,
                artifacts: Vec::new(),
                error: Some(format!("dependency {} did not complete", dep.name())),
            });
            continue;
        }

        let mut hasher = Sha256::new();
        for part in [TOOL_NAME, TOOL_VERSION, stage.name(), config_key.as_str()] {
            hasher.update(part.as_bytes());
            hasher.update([0u8]);
        }
        for dep in stage.deps() {
            hasher.update(primary_hash[dep.name()].as_bytes());
            hasher.update([0u8]);
        }
        let key = hex(&hasher.finalize());
        let entry_name = format!("{}-{}", stage.name(), &key[..16]);
        let entry_dir = cache_dir.join(&entry_name);

        let (files, cached) = match load_cache_entry(&entry_dir, stage.primary_artifact()) {
            Some(files) => (Ok(files), true),
            None => (execute_stage(stage, cfg, opts.threads, &primary), false),
        };
        match files {
            Ok(files) => {
                write_files(out_dir, &files)?;
                if !cached {
                    store_cache_entry(&cache_dir, &entry_name, &files);
                }
                let mut artifact_names = Vec::new();
                for (rel, bytes) in &files {
                    artifact_names.push(rel.clone());
                    inventory.insert(rel.clone(), (bytes.len() as u64, sha256_hex(bytes)));
                    if rel == stage.primary_artifact() {
                        primary_hash.insert(stage.name(), sha256_hex(bytes));
                        primary.insert(stage.name(), bytes.clone());
                    }
                }
                completed[stage as usize] = true;
                records.push(StageRecordDoc {
                    name: stage.name().to_string(),
                    status: "ok".to_string(),
                    cached,
                    duration_ms: started.elapsed().as_millis() as u64,
                    artifacts: artifact_names,
                    error: None,
                });
            }
            Err(e) => {
                records.push(StageRecordDoc {
                    name: stage.name().to_string(),
                    status: "failed".to_string(),
                    cached: false,
                    duration_ms: started.elapsed().as_millis() as u64,
                    artifacts: Vec::new(),
                    error: Some(e.to_string()),
                });
            }
        }
    }

    let any_failed = records.iter().any(|r| r.status != "ok");
    let report_checks_passed = if completed[Stage::Report as usize] {
        let doc: ReportDocOut = parse_dep(&primary, Stage::Report)
            .map_err(|e| PipelineError::Io(e.to_string()))?;
        Some(doc.passed)
    } else {
        None
    };

    let files = inventory
        .into_iter()
        .map(|(path, (bytes, sha256))| FileRecordDoc {
            path,
            bytes,
            sha256,
        })
        .collect();
    let manifest = ManifestDoc {
        schema: SCHEMA_MANIFEST.to_string(),
        tool: ToolDoc {
            name: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
        },
        threads: opts.threads,
        config: config_doc,
        stages: records.clone(),
        files,
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, to_json_bytes(&manifest))
        .map_err(|e| io_ctx("writing", &manifest_path, e))?;

    Ok(PipelineOutcome {
        selection,
        any_failed,
        report_checks_passed,
        manifest_path,
        stage_records: records,
    })
}
