//! On-disk layout: one directory per (suite, dimension) holding the instance
//! manifest, one trajectory file per optimizer and one feature file per ELA
//! budget factor. `manifest.json` records a hash of the data-relevant
//! configuration and of every file, so reruns skip finished work.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::GridConfig;
use super::pipeline::{self, SuiteData};
use crate::error::{Error, Result};
use crate::features::{read_feature_csv, write_feature_csv};
use crate::optimizers::{read_trajectories, write_trajectories, OptimizerId};
use crate::seed::fnv1a;
use crate::suites::{InstanceRecord, InstanceSet, SuiteId};

const MANIFEST: &str = "manifest.json";
const INSTANCES: &str = "instances.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub config_hash: String,
    pub suite: SuiteId,
    pub d: usize,
    /// Relative path to FNV-1a hash of the file bytes.
    pub files: BTreeMap<String, String>,
}

/// The part of the configuration that determines stored data.
#[derive(Serialize)]
struct DataKey<'a> {
    suite: SuiteId,
    d: usize,
    optimizers: Vec<OptimizerId>,
    n_reps: u32,
    max_budget_factor: usize,
    checkpoints: Vec<usize>,
    ela_factors: Vec<usize>,
    instances: &'a super::config::InstanceCounts,
    master_seed: u64,
}

pub fn config_hash(cfg: &GridConfig, suite: SuiteId, dimension: usize) -> String {
    let key = DataKey {
        suite,
        d: dimension,
        optimizers: cfg.optimizers(),
        n_reps: cfg.n_reps,
        max_budget_factor: cfg.max_budget_factor,
        checkpoints: cfg.checkpoints(dimension),
        ela_factors: cfg.used_ela_factors(),
        instances: &cfg.instances,
        master_seed: cfg.master_seed,
    };
    hex(fnv1a(&serde_json::to_vec(&key).expect("serializable")))
}

fn hex(v: u64) -> String {
    format!("{v:016x}")
}

pub fn suite_dir(root: &Path, suite: SuiteId, dimension: usize) -> PathBuf {
    root.join(format!("{suite}_d{dimension}"))
}

pub fn trajectory_file(opt: OptimizerId) -> String {
    format!("trajectories/{opt}.csv")
}

pub fn feature_file(ela_factor: usize) -> String {
    format!("features/bela_{ela_factor}.csv")
}

fn expected_files(cfg: &GridConfig) -> Vec<String> {
    let mut f = vec![INSTANCES.to_string()];
    f.extend(cfg.optimizers().into_iter().map(trajectory_file));
    f.extend(cfg.used_ela_factors().into_iter().map(feature_file));
    f
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(fnv1a(&bytes)))
}

fn read_manifest(dir: &Path) -> Result<Option<StoreManifest>> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(Some(serde_json::from_str(&text)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn check_hash(m: &StoreManifest, expected: &str, dir: &Path) -> Result<()> {
    if m.config_hash != expected {
        return Err(Error::Config(format!(
            "{} holds data from a different configuration (hash {}, current {expected}); \
             use a fresh output directory or restore the original configuration",
            dir.display(),
            m.config_hash
        )));
    }
    Ok(())
}

/// What a `run-suite` pass did for one (suite, dimension).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub generated: Vec<String>,
    pub reused: Vec<String>,
}

/// Generates missing or damaged files for one (suite, dimension).
pub fn run_suite(cfg: &GridConfig, suite: SuiteId, dimension: usize) -> Result<RunSummary> {
    let dir = suite_dir(&cfg.output_dir, suite, dimension);
    let hash = config_hash(cfg, suite, dimension);
    let mut manifest = match read_manifest(&dir)? {
        Some(m) => {
            check_hash(&m, &hash, &dir)?;
            m
        }
        None => StoreManifest {
            config_hash: hash,
            suite,
            d: dimension,
            files: BTreeMap::new(),
        },
    };
    for sub in ["trajectories", "features"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }

    let mut summary = RunSummary::default();
    let mut todo = Vec::new();
    for name in expected_files(cfg) {
        let path = dir.join(&name);
        let intact = path.exists() && manifest.files.get(&name).is_some_and(|h| hash_file(&path).is_ok_and(|a| &a == h));
        if intact {
            summary.reused.push(name);
        } else {
            manifest.files.remove(&name);
            todo.push(name);
        }
    }
    // Persist the hash before any work so an interrupted run is recognized.
    write_json(&dir.join(MANIFEST), &manifest)?;
    if todo.is_empty() {
        return Ok(summary);
    }

    let set = pipeline::instance_set(cfg, suite, dimension)?;
    let checkpoints = cfg.checkpoints(dimension);
    for name in todo {
        let path = dir.join(&name);
        if name == INSTANCES {
            write_json(&path, &set.records())?;
        } else if let Some(opt) = cfg.optimizers().into_iter().find(|o| trajectory_file(*o) == name) {
            let runs = pipeline::run_trajectories(cfg, &set, &[opt])?;
            write_trajectories(&path, &runs, Some(&checkpoints))?;
        } else if let Some(e) = cfg.used_ela_factors().into_iter().find(|e| feature_file(*e) == name) {
            let rows = pipeline::feature_rows(&set, e * dimension, cfg.n_reps, cfg.master_seed)?;
            write_feature_csv(&path, &rows)?;
        }
        manifest.files.insert(name.clone(), hash_file(&path)?);
        write_json(&dir.join(MANIFEST), &manifest)?;
        summary.generated.push(name);
    }
    Ok(summary)
}

/// Loads a complete store, or reports what is missing.
pub fn load_suite(cfg: &GridConfig, suite: SuiteId, dimension: usize) -> Result<SuiteData> {
    let dir = suite_dir(&cfg.output_dir, suite, dimension);
    let missing = |what: String| Error::MissingDependency(format!("{what}; run `pias run-suite` first"));
    let manifest = read_manifest(&dir)?.ok_or_else(|| missing(format!("no data in {}", dir.display())))?;
    check_hash(&manifest, &config_hash(cfg, suite, dimension), &dir)?;
    for name in expected_files(cfg) {
        if !manifest.files.contains_key(&name) || !dir.join(&name).exists() {
            return Err(missing(format!("{} is missing", dir.join(&name).display())));
        }
    }
    let path = dir.join(INSTANCES);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let records: Vec<InstanceRecord> = serde_json::from_str(&text)?;
    let set = InstanceSet::from_records(&records)?;
    let mut trajectories = Vec::new();
    for opt in cfg.optimizers() {
        trajectories.extend(read_trajectories(&dir.join(trajectory_file(opt)))?);
    }
    let table = pipeline::performance_table(cfg, &set, &trajectories)?;
    let features = cfg
        .used_ela_factors()
        .into_iter()
        .map(|e| Ok((e, read_feature_csv(&dir.join(feature_file(e)))?)))
        .collect::<Result<_>>()?;
    Ok(SuiteData {
        set,
        trajectories,
        table,
        features,
    })
}
