//! Grid orchestration behind the `pias` command line.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod store;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::portfolio::PortfolioManifest;
use crate::selector::{ScenarioResult, CSV_HEADER, FLAG_FAILED, FLAG_UNDEFINED_GAP};
use crate::suites::SuiteId;

pub use config::{GridConfig, PortfolioSize};

/// Runs `f` on a pool of `jobs` threads, or the global pool when `None`.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn grid(cfg: &GridConfig) -> Vec<(SuiteId, usize)> {
    let mut suites = cfg.suites.clone();
    suites.sort_unstable();
    suites.dedup();
    let mut dims = cfg.dimensions.clone();
    dims.sort_unstable();
    dims.dedup();
    suites.iter().flat_map(|&s| dims.iter().map(move |&d| (s, d))).collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn cmd_run_suite(cfg: &GridConfig) -> Result<Vec<(SuiteId, usize, store::RunSummary)>> {
    cfg.validate()?;
    with_jobs(cfg.jobs, || {
        grid(cfg)
            .into_iter()
            .map(|(s, d)| Ok((s, d, store::run_suite(cfg, s, d)?)))
            .collect()
    })?
}

pub fn portfolio_path(root: &Path, suite: SuiteId, dimension: usize, b_factor: usize, size: usize) -> PathBuf {
    root.join("portfolios").join(format!("{suite}_d{dimension}_B{b_factor}_k{size}.json"))
}

pub fn cmd_build_portfolio(cfg: &GridConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    with_jobs(cfg.jobs, || {
        let mut written = Vec::new();
        for (s, d) in grid(cfg) {
            let data = store::load_suite(cfg, s, d)?;
            for (k, m) in pipeline::portfolios(cfg, &data.table)? {
                let path = portfolio_path(&cfg.output_dir, s, d, m.b_factor, k);
                write_text(&path, &to_json(&m)?)?;
                written.push(path);
            }
        }
        Ok(written)
    })?
}

fn load_portfolios(cfg: &GridConfig, suite: SuiteId, dimension: usize) -> Result<Vec<(usize, PortfolioManifest)>> {
    let mut out = Vec::new();
    for k in cfg.searched_sizes() {
        for b in cfg.budget_factors() {
            let path = portfolio_path(&cfg.output_dir, suite, dimension, b, k);
            let text = fs::read_to_string(&path).map_err(|_| {
                Error::MissingDependency(format!("{} is missing; run `pias build-portfolio` first", path.display()))
            })?;
            out.push((k, serde_json::from_str(&text)?));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectSummary {
    pub scenarios: usize,
    pub count_formula: String,
    pub failed: usize,
    pub undefined_gap: usize,
}

pub fn results_dir(root: &Path) -> PathBuf {
    root.join("results")
}

pub fn result_file_name(r: &ScenarioResult) -> String {
    let s = &r.scenario;
    format!(
        "{}_d{}_p{}_B{}_E{}.json",
        s.suite, s.dimension, s.portfolio_label, s.b_factor, s.b_ela_factor
    )
}

/// Evaluates every scenario of the grid. Per-scenario failures are written as
/// flagged rows; only missing inputs abort.
pub fn cmd_select(cfg: &GridConfig) -> Result<SelectSummary> {
    cfg.validate()?;
    let dir = results_dir(&cfg.output_dir);
    with_jobs(cfg.jobs, || {
        let mut all = Vec::new();
        for (s, d) in grid(cfg) {
            let data = store::load_suite(cfg, s, d)?;
            let manifests = load_portfolios(cfg, s, d)?;
            let scenarios = pipeline::scenarios(cfg, s, d, &manifests)?;
            all.extend(pipeline::evaluate_all(cfg, &data, &scenarios));
        }
        let mut csv = format!("{CSV_HEADER}\n");
        for r in &all {
            write_text(&dir.join(result_file_name(r)), &to_json(r)?)?;
            csv.push_str(&r.csv_row());
            csv.push('\n');
        }
        write_text(&dir.join("results.csv"), &csv)?;
        let g = grid(cfg);
        let n_suites = g.iter().map(|p| p.0).collect::<BTreeSet<_>>().len();
        let n_dims = g.iter().map(|p| p.1).collect::<BTreeSet<_>>().len();
        let summary = SelectSummary {
            scenarios: all.len(),
            count_formula: format!(
                "{n_suites} suites x {n_dims} dimensions x {} portfolio sizes x {} (B, B_ELA) pairs with B_ELA < B = {}",
                cfg.portfolio_sizes().len(),
                cfg.scenario_pairs().len(),
                cfg.scenario_count()
            ),
            failed: all.iter().filter(|r| r.has_flag(FLAG_FAILED)).count(),
            undefined_gap: all.iter().filter(|r| r.has_flag(FLAG_UNDEFINED_GAP)).count(),
        };
        write_text(&dir.join("summary.json"), &to_json(&summary)?)?;
        Ok(summary)
    })?
}

pub fn cmd_report(results: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    if !results.is_dir() {
        return Err(Error::MissingDependency(format!("no results directory at {}", results.display())));
    }
    let all = report::load_results(results)?;
    if all.is_empty() {
        return Err(Error::MissingDependency(format!("no scenario results in {}", results.display())));
    }
    report::write_report(&all, out)
}
