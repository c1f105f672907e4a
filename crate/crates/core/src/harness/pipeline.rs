//! In-memory pipeline for one (suite, dimension): instances, runs, features,
//! performance table, portfolios and scenario results.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::config::{GridConfig, PortfolioSize};
use crate::error::{Error, Result};
use crate::features::{compute_features, FeatureRow, Provenance, Sample};
use crate::optimizers::{run_capped, run_portfolio, run_seed, BlackBox, Counted, OptimizerId, Trajectory};
use crate::perfdb::{build_table, rog_normalize, Normalizer, PerformanceTable};
use crate::portfolio::{build_portfolio, PortfolioManifest};
use crate::sampling::{scale_to_box, sobol_points, SamplePlan};
use crate::seed::SeedKey;
use crate::selector::{
    evaluate_scenario, BudgetSplit, FeatureStore, ForestStrategy, InstanceMeta, Scenario, ScenarioResult,
};
use crate::suites::{InstanceSet, ProblemInstance, SuiteId};

pub fn instance_set(cfg: &GridConfig, suite: SuiteId, dimension: usize) -> Result<InstanceSet> {
    let c = &cfg.instances;
    match suite {
        SuiteId::BbobLite => InstanceSet::bbob(&c.bbob_functions, c.bbob_instances, dimension),
        SuiteId::MabbobLite => InstanceSet::mabbob(c.mabbob, cfg.master_seed, dimension),
        SuiteId::RogLite => InstanceSet::rog(c.rog, cfg.master_seed, dimension),
    }
}

/// Cross-validation groups: BBOB instances sharing an instance id stay
/// together, so every function contributes each id to one fold.
pub fn instance_meta(set: &InstanceSet) -> Vec<InstanceMeta> {
    set.instances
        .iter()
        .map(|i| InstanceMeta {
            key: i.key(),
            function_id: i.function_id(),
            group: i.instance_id(),
        })
        .collect()
}

/// Sobol design for one feature repetition, scaled to the suite box. The
/// same design is used on every instance of a (suite, dimension).
pub fn sample_points(master_seed: u64, suite: SuiteId, dimension: usize, count: usize, rep: u32) -> Result<Vec<Vec<f64>>> {
    let seed = SeedKey::new(master_seed, "ela-design")
        .str(suite.as_str())
        .u64(dimension as u64)
        .finish();
    let plan = SamplePlan::for_repetition(seed, dimension, count, rep);
    Ok(scale_to_box(&sobol_points(&plan)?, &vec![suite.bounds(); dimension]))
}

/// Feature rows for every instance and repetition at `b_ela` evaluations,
/// ordered by (instance key, repetition).
pub fn feature_rows(set: &InstanceSet, b_ela: usize, n_reps: u32, master_seed: u64) -> Result<Vec<FeatureRow>> {
    let designs = (0..n_reps)
        .map(|rep| sample_points(master_seed, set.suite, set.dimension, b_ela, rep))
        .collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for inst in &set.instances {
        for rep in 0..n_reps {
            jobs.push((inst, rep));
        }
    }
    let mut rows = jobs
        .into_par_iter()
        .map(|(inst, rep)| {
            let x = designs[rep as usize].clone();
            let y: Vec<f64> = x.iter().map(|p| inst.raw_value(p)).collect();
            let sample = Sample::new(x, y)?;
            let mut features = compute_features(&sample)?;
            features.provenance = Some(Provenance {
                instance: inst.key(),
                b_ela,
                repetition: rep,
            });
            Ok(FeatureRow {
                instance: inst.key(),
                repetition: rep,
                b_ela,
                sample_best: sample.best_value(),
                features,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| (r.instance, r.repetition));
    Ok(rows)
}

/// Attainment scoring for known optima; extrema over `[5d, max budget]`
/// otherwise.
pub fn normalizers(set: &InstanceSet, trajectories: &[Trajectory], max_budget: usize) -> Result<BTreeMap<u32, Normalizer>> {
    let mut by_instance: BTreeMap<u32, Vec<&Trajectory>> = BTreeMap::new();
    for t in trajectories {
        by_instance.entry(t.instance).or_default().push(t);
    }
    set.instances
        .iter()
        .map(|inst| {
            let norm = match inst.optimum_value() {
                Some(opt) => Normalizer::attainment(opt),
                None => {
                    let runs = by_instance
                        .get(&inst.key())
                        .ok_or_else(|| Error::IncompleteRunSet(format!("no runs on instance {}", inst.key())))?;
                    rog_normalize(runs, (5 * set.dimension, max_budget))?
                }
            };
            Ok((inst.key(), norm))
        })
        .collect()
}

pub fn performance_table(cfg: &GridConfig, set: &InstanceSet, trajectories: &[Trajectory]) -> Result<PerformanceTable> {
    let max_budget = cfg.max_budget_factor * set.dimension;
    let norms = normalizers(set, trajectories, max_budget)?;
    build_table(set.suite, set.dimension, trajectories, &cfg.checkpoints(set.dimension), &norms)
}

/// Everything `cmd_select` needs for one (suite, dimension).
#[derive(Debug, Clone)]
pub struct SuiteData {
    pub set: InstanceSet,
    pub trajectories: Vec<Trajectory>,
    pub table: PerformanceTable,
    /// Feature rows per ELA budget factor.
    pub features: BTreeMap<usize, Vec<FeatureRow>>,
}

pub fn run_trajectories(cfg: &GridConfig, set: &InstanceSet, optimizers: &[OptimizerId]) -> Result<Vec<Trajectory>> {
    run_portfolio(
        optimizers,
        set,
        cfg.max_budget_factor * set.dimension,
        cfg.n_reps,
        cfg.master_seed,
    )
}

pub fn generate(cfg: &GridConfig, suite: SuiteId, dimension: usize) -> Result<SuiteData> {
    let set = instance_set(cfg, suite, dimension)?;
    let trajectories = run_trajectories(cfg, &set, &cfg.optimizers())?;
    let table = performance_table(cfg, &set, &trajectories)?;
    let features = cfg
        .used_ela_factors()
        .into_iter()
        .map(|e| Ok((e, feature_rows(&set, e * dimension, cfg.n_reps, cfg.master_seed)?)))
        .collect::<Result<_>>()?;
    Ok(SuiteData {
        set,
        trajectories,
        table,
        features,
    })
}

pub fn portfolio_seed(master_seed: u64, suite: SuiteId, dimension: usize, b_factor: usize, size: usize) -> u64 {
    SeedKey::new(master_seed, "portfolio")
        .str(suite.as_str())
        .u64(dimension as u64)
        .u64(b_factor as u64)
        .u64(size as u64)
        .finish()
}

/// One manifest per searched size and budget factor.
pub fn portfolios(cfg: &GridConfig, table: &PerformanceTable) -> Result<Vec<(usize, PortfolioManifest)>> {
    let mut jobs = Vec::new();
    for k in cfg.searched_sizes() {
        for b in cfg.budget_factors() {
            jobs.push((k, b));
        }
    }
    jobs.into_par_iter()
        .map(|(k, b)| {
            let seed = portfolio_seed(cfg.master_seed, table.suite, table.dimension, b, k);
            let m = build_portfolio(
                table,
                b,
                k,
                cfg.portfolio_search.n_permutations,
                cfg.portfolio_search.iterations,
                seed,
            )?;
            Ok((k, m))
        })
        .collect()
}

/// Instances that take part in selection: degenerate and excluded ones are
/// dropped.
pub fn selectable(cfg: &GridConfig, set: &InstanceSet, table: &PerformanceTable) -> Vec<InstanceMeta> {
    let degenerate = table.degenerate_instances();
    let excluded = cfg.exclusions(set.suite);
    instance_meta(set)
        .into_iter()
        .filter(|m| !degenerate.contains(&m.key) && !excluded.contains(&m.key))
        .collect()
}

/// The scenario grid for one (suite, dimension), ordered by (portfolio size,
/// B factor, B_ELA factor).
pub fn scenarios(cfg: &GridConfig, suite: SuiteId, dimension: usize, manifests: &[(usize, PortfolioManifest)]) -> Result<Vec<Scenario>> {
    let mut out = Vec::new();
    for size in cfg.portfolio_sizes() {
        for (b, e) in cfg.scenario_pairs() {
            let members = match size {
                PortfolioSize::Members(k) if k < cfg.optimizers().len() => manifests
                    .iter()
                    .find(|(mk, m)| *mk == k && m.b_factor == b)
                    .map(|(_, m)| m.members.clone())
                    .ok_or_else(|| {
                        Error::MissingDependency(format!("no size-{k} portfolio for {suite} d={dimension} B={b}d"))
                    })?,
                _ => cfg.optimizers(),
            };
            let mut s = Scenario::new(suite, dimension, members, size.label(), b, e, cfg.master_seed)?;
            s.fold_count = cfg.folds;
            out.push(s);
        }
    }
    Ok(out)
}

/// Evaluates every scenario; failures become flagged results.
pub fn evaluate_all(cfg: &GridConfig, data: &SuiteData, scenarios: &[Scenario]) -> Vec<ScenarioResult> {
    let meta = selectable(cfg, &data.set, &data.table);
    let strategy = ForestStrategy(cfg.forest.clone());
    let stores: BTreeMap<usize, Result<FeatureStore>> = data
        .features
        .iter()
        .map(|(e, rows)| (*e, FeatureStore::from_rows(rows, data.table.normalizers())))
        .collect();
    scenarios
        .par_iter()
        .map(|s| {
            let result = match stores.get(&s.b_ela_factor) {
                Some(Ok(store)) => evaluate_scenario(s, &data.table, store, &meta, &strategy),
                Some(Err(e)) => Err(Error::invalid(e.to_string())),
                None => Err(Error::MissingDependency(format!("no features at B_ELA = {}d", s.b_ela_factor))),
            };
            result.unwrap_or_else(|e| ScenarioResult::failed(s.clone(), &e))
        })
        .collect()
}

/// Full in-memory grid for one (suite, dimension).
pub fn run_grid(cfg: &GridConfig, suite: SuiteId, dimension: usize) -> Result<(SuiteData, Vec<ScenarioResult>)> {
    let data = generate(cfg, suite, dimension)?;
    let manifests = portfolios(cfg, &data.table)?;
    let sc = scenarios(cfg, suite, dimension, &manifests)?;
    let results = evaluate_all(cfg, &data, &sc);
    Ok((data, results))
}

/// Outcome of one online PIAS episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub evaluations: u64,
    pub sample_best: f64,
    pub trace: Vec<f64>,
}

/// Spends `B_ELA` evaluations on the feature design, then hands `B_opt` to
/// `optimizer`, all through one counting wrapper.
pub fn replay(
    instance: &ProblemInstance,
    split: BudgetSplit,
    optimizer: OptimizerId,
    feature_rep: u32,
    algorithm_rep: u32,
    master_seed: u64,
    max_budget: usize,
) -> Result<Replay> {
    let counted = Counted::new(instance);
    let points = sample_points(master_seed, instance.suite(), instance.dimension(), split.ela(), feature_rep)?;
    let sample_best = points
        .iter()
        .map(|p| counted.tracked_value(p))
        .fold(f64::INFINITY, f64::min);
    let seed = run_seed(master_seed, instance, optimizer, algorithm_rep);
    let trace = run_capped(optimizer, &counted, max_budget, split.opt(), seed);
    Ok(Replay {
        evaluations: counted.calls(),
        sample_best,
        trace,
    })
}
