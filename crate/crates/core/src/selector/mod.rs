//! Budget accounting, SBS/VBS baselines, the forest selector, leave-instance-out
//! cross-validation and scenario evaluation.

pub mod forest;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{filter_features, FeatureRow, FeatureVector};
use crate::optimizers::OptimizerId;
use crate::perfdb::{Normalizer, PerformanceTable};
use crate::seed::{rng, SeedKey};
use crate::suites::SuiteId;

pub use forest::{ForestConfig, MaxFeatures, RandomForest};

pub const DEFAULT_FOLDS: usize = 5;

/// Total budget `B` split into feature sampling `B_ELA` and the remainder
/// `B_opt` left for the selected optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetSplit {
    #[serde(rename = "B")]
    total: usize,
    #[serde(rename = "B_ELA")]
    ela: usize,
    #[serde(rename = "B_opt")]
    opt: usize,
}

impl BudgetSplit {
    pub fn new(total: usize, ela: usize) -> Result<Self> {
        if ela == 0 || ela >= total {
            return Err(Error::invalid(format!("need 0 < B_ELA < B, got B_ELA {ela}, B {total}")));
        }
        Ok(BudgetSplit {
            total,
            ela,
            opt: total - ela,
        })
    }

    pub fn from_factors(dimension: usize, b_factor: usize, ela_factor: usize) -> Result<Self> {
        Self::new(b_factor * dimension, ela_factor * dimension)
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn ela(&self) -> usize {
        self.ela
    }

    pub fn opt(&self) -> usize {
        self.opt
    }

    pub fn ela_fraction(&self) -> f64 {
        self.ela as f64 / self.total as f64
    }
}

/// Index of the largest entry; the first one wins ties and NaN never wins.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

fn canonical(portfolio: &[OptimizerId]) -> Result<Vec<OptimizerId>> {
    let mut p = portfolio.to_vec();
    p.sort_unstable();
    p.dedup();
    if p.is_empty() {
        return Err(Error::EmptyInput("portfolio"));
    }
    Ok(p)
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    sum / n as f64
}

/// Single best solver: the portfolio member with the best mean performance at
/// `budget` over `training`, with its mean.
pub fn sbs_full(
    table: &PerformanceTable,
    training: &[u32],
    portfolio: &[OptimizerId],
    budget: usize,
) -> Result<(OptimizerId, f64)> {
    if training.is_empty() {
        return Err(Error::EmptyInput("training instances"));
    }
    let portfolio = canonical(portfolio)?;
    let means = portfolio
        .iter()
        .map(|&a| {
            let per: Result<Vec<f64>> = training.iter().map(|&i| table.mean_perf(i, a, budget)).collect();
            Ok(mean(per?))
        })
        .collect::<Result<Vec<f64>>>()?;
    let k = argmax_first(&means).ok_or(Error::invalid("no finite SBS candidate"))?;
    Ok((portfolio[k], means[k]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VbsEntry {
    pub instance: u32,
    pub best_perf: f64,
    pub best_algorithm: OptimizerId,
}

/// Virtual best solver per instance at `budget`.
pub fn vbs(table: &PerformanceTable, instances: &[u32], portfolio: &[OptimizerId], budget: usize) -> Result<Vec<VbsEntry>> {
    let portfolio = canonical(portfolio)?;
    instances
        .iter()
        .map(|&i| {
            let perfs = portfolio
                .iter()
                .map(|&a| table.mean_perf(i, a, budget))
                .collect::<Result<Vec<f64>>>()?;
            let k = argmax_first(&perfs).ok_or(Error::invalid("no finite VBS candidate"))?;
            Ok(VbsEntry {
                instance: i,
                best_perf: perfs[k],
                best_algorithm: portfolio[k],
            })
        })
        .collect()
}

pub fn pias_perf(ela_perf: f64, selected_perf: f64) -> f64 {
    ela_perf.max(selected_perf)
}

/// Gaps at or below this are treated as `vbs = sbs`.
pub const GAP_EPS: f64 = 1e-12;

/// Fraction of the SBS-VBS gap closed; may exceed 1.
pub fn gap_closed(sbs: f64, vbs: f64, pias: f64) -> Result<f64> {
    let gap = vbs - sbs;
    if gap.is_nan() || gap < -GAP_EPS {
        return Err(Error::invalid(format!("vbs {vbs} below sbs {sbs}")));
    }
    if gap <= GAP_EPS {
        return Err(Error::UndefinedGap(sbs));
    }
    Ok((pias - sbs) / gap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossDecomposition {
    pub budget_loss: f64,
    pub selection_loss: f64,
    /// `None` when PIAS matches or beats the full-budget VBS.
    pub relative_budget_loss: Option<f64>,
}

/// Splits `vbs_full - pias` into the part caused by the feature budget and the
/// part caused by imperfect selection. The relative budget loss is clipped to
/// at most 1, which only matters when PIAS beats `vbs_opt`.
pub fn decompose_loss(vbs_full: f64, vbs_opt: f64, pias: f64) -> LossDecomposition {
    let budget_loss = vbs_full - vbs_opt;
    let total = vbs_full - pias;
    LossDecomposition {
        budget_loss,
        selection_loss: vbs_opt - pias,
        relative_budget_loss: (total > 0.0).then(|| (budget_loss / total).min(1.0)),
    }
}

/// Partitions the distinct `ids` into `k` near-equal folds after a seeded
/// shuffle. Each fold is sorted.
pub fn cv_split(ids: &[u32], k: usize, seed: u64) -> Result<Vec<Vec<u32>>> {
    let mut ids = ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if k == 0 || ids.len() < k {
        return Err(Error::invalid(format!("cannot split {} ids into {k} folds", ids.len())));
    }
    ids.shuffle(&mut rng(seed));
    let mut folds = vec![Vec::new(); k];
    for (n, id) in ids.into_iter().enumerate() {
        folds[n % k].push(id);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// One training row: the features of one (instance, repetition) and the
/// instance's mean performance vector at `B_opt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRow {
    pub instance: u32,
    pub features: FeatureVector,
    pub target: Vec<f64>,
}

/// Trained forest over the retained features.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorModel {
    pub forest: RandomForest,
    pub retained: Vec<String>,
    pub portfolio: Vec<OptimizerId>,
    pub fold: Option<usize>,
    pub seed: u64,
}

impl SelectorModel {
    pub fn predict(&self, features: &FeatureVector) -> Result<Vec<f64>> {
        self.forest.predict(&features.select(&self.retained)?)
    }
}

/// `portfolio` must be ordered as the targets are.
pub fn train_selector(
    rows: &[TrainingRow],
    retained: &[String],
    portfolio: &[OptimizerId],
    config: &ForestConfig,
    seed: u64,
) -> Result<SelectorModel> {
    if retained.is_empty() {
        return Err(Error::NoUsableFeatures);
    }
    if rows.iter().any(|r| r.target.len() != portfolio.len()) {
        return Err(Error::invalid("target length differs from portfolio size"));
    }
    let x = rows
        .iter()
        .map(|r| r.features.select(retained))
        .collect::<Result<Vec<_>>>()?;
    let y: Vec<Vec<f64>> = rows.iter().map(|r| r.target.clone()).collect();
    Ok(SelectorModel {
        forest: RandomForest::fit(&x, &y, config, seed)?,
        retained: retained.to_vec(),
        portfolio: portfolio.to_vec(),
        fold: None,
        seed,
    })
}

pub fn predict_select(model: &SelectorModel, features: &FeatureVector) -> Result<OptimizerId> {
    let p = model.predict(features)?;
    let k = argmax_first(&p).ok_or(Error::invalid("prediction has no finite entry"))?;
    Ok(model.portfolio[k])
}

/// Anything that predicts a performance vector for a test instance.
pub trait Predictor: Send + Sync {
    fn predict(&self, instance: u32, features: &FeatureVector) -> Result<Vec<f64>>;
}

impl Predictor for SelectorModel {
    fn predict(&self, _instance: u32, features: &FeatureVector) -> Result<Vec<f64>> {
        SelectorModel::predict(self, features)
    }
}

pub struct TrainingContext<'a> {
    pub rows: &'a [TrainingRow],
    pub retained: &'a [String],
    /// Canonical order; predictions follow it.
    pub portfolio: &'a [OptimizerId],
    pub fold: usize,
    pub seed: u64,
}

/// Builds a predictor from one fold's training data.
pub trait SelectionStrategy: Sync {
    fn train(&self, ctx: &TrainingContext<'_>) -> Result<Box<dyn Predictor>>;
}

pub struct ForestStrategy(pub ForestConfig);

impl SelectionStrategy for ForestStrategy {
    fn train(&self, ctx: &TrainingContext<'_>) -> Result<Box<dyn Predictor>> {
        let mut m = train_selector(ctx.rows, ctx.retained, ctx.portfolio, &self.0, ctx.seed)?;
        m.fold = Some(ctx.fold);
        Ok(Box::new(m))
    }
}

/// Feature vectors and sampled-point performance of one instance repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEntry {
    pub repetition: u32,
    pub features: FeatureVector,
    pub ela_perf: f64,
}

/// Features for one `B_ELA`, keyed by instance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureStore {
    pub entries: BTreeMap<u32, Vec<FeatureEntry>>,
}

impl FeatureStore {
    pub fn from_rows(rows: &[FeatureRow], normalizers: &BTreeMap<u32, Normalizer>) -> Result<Self> {
        let mut entries: BTreeMap<u32, Vec<FeatureEntry>> = BTreeMap::new();
        for r in rows {
            let norm = normalizers
                .get(&r.instance)
                .ok_or_else(|| Error::invalid(format!("no normalizer for instance {}", r.instance)))?;
            entries.entry(r.instance).or_default().push(FeatureEntry {
                repetition: r.repetition,
                features: r.features.clone(),
                ela_perf: norm.score(norm.tracked(r.sample_best))?,
            });
        }
        for v in entries.values_mut() {
            v.sort_by_key(|e| e.repetition);
        }
        Ok(FeatureStore { entries })
    }
}

/// Identity of an instance within a scenario. Instances sharing a `group`
/// always land in the same fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub key: u32,
    pub function_id: u32,
    pub group: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub suite: SuiteId,
    pub dimension: usize,
    pub portfolio: Vec<OptimizerId>,
    /// `"4"` or `"full"`.
    pub portfolio_label: String,
    pub b_factor: usize,
    pub b_ela_factor: usize,
    pub split: BudgetSplit,
    pub fold_count: usize,
    pub master_seed: u64,
}

impl Scenario {
    pub fn new(
        suite: SuiteId,
        dimension: usize,
        portfolio: Vec<OptimizerId>,
        portfolio_label: impl Into<String>,
        b_factor: usize,
        b_ela_factor: usize,
        master_seed: u64,
    ) -> Result<Self> {
        Ok(Scenario {
            suite,
            dimension,
            portfolio: canonical(&portfolio)?,
            portfolio_label: portfolio_label.into(),
            b_factor,
            b_ela_factor,
            split: BudgetSplit::from_factors(dimension, b_factor, b_ela_factor)?,
            fold_count: DEFAULT_FOLDS,
            master_seed,
        })
    }

    pub fn cv_seed(&self) -> u64 {
        SeedKey::new(self.master_seed, "cv")
            .str(self.suite.as_str())
            .u64(self.dimension as u64)
            .finish()
    }

    pub fn model_seed(&self, fold: usize) -> u64 {
        SeedKey::new(self.master_seed, "forest")
            .str(self.suite.as_str())
            .u64(self.dimension as u64)
            .str(&self.portfolio_label)
            .u64(self.split.total() as u64)
            .u64(self.split.ela() as u64)
            .u64(fold as u64)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: u32,
    pub selected: OptimizerId,
    pub ela_perf: f64,
    pub a_star_perf: f64,
    pub pias_perf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub instance: u32,
    pub function_id: u32,
    pub fold: usize,
    pub reps: Vec<RepRecord>,
    pub ela_perf: f64,
    pub a_star_perf: f64,
    pub pias_perf: f64,
    pub sbs_algorithm: OptimizerId,
    pub sbs_perf: f64,
    pub vbs_full: f64,
    pub vbs_full_algorithm: OptimizerId,
    pub vbs_opt: f64,
    pub vbs_opt_algorithm: OptimizerId,
    pub budget_loss: f64,
    pub selection_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub test_instances: Vec<u32>,
    pub sbs_algorithm: OptimizerId,
    pub sbs_train_perf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub sbs_perf: f64,
    pub vbs_full: f64,
    pub vbs_opt: f64,
    pub ela_perf: f64,
    pub a_star_perf: f64,
    pub pias_perf: f64,
    pub gap_closed: Option<f64>,
    pub budget_loss: f64,
    pub selection_loss: f64,
    pub relative_budget_loss: Option<f64>,
}

pub const FLAG_UNDEFINED_GAP: &str = "undefined_gap";
pub const FLAG_NO_FEATURES: &str = "no_usable_features";
pub const FLAG_RELATIVE_UNDEFINED: &str = "relative_budget_loss_undefined";
pub const FLAG_FAILED: &str = "failed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub retained_features: Vec<String>,
    pub folds: Vec<FoldSummary>,
    pub records: Vec<InstanceResult>,
    pub aggregates: Option<Aggregates>,
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const CSV_HEADER: &str = "suite,d,portfolio_size,B_factor,B_ELA_factor,sbs_perf,vbs_full,vbs_opt,pias_perf,gap_closed,budget_loss,selection_loss,relative_budget_loss,flags";

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

impl ScenarioResult {
    /// A result carrying only the failure, so grids stay total.
    pub fn failed(scenario: Scenario, error: &Error) -> Self {
        ScenarioResult {
            scenario,
            retained_features: Vec::new(),
            folds: Vec::new(),
            records: Vec::new(),
            aggregates: None,
            flags: vec![FLAG_FAILED.to_string()],
            error: Some(error.to_string()),
        }
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    pub fn csv_row(&self) -> String {
        let s = &self.scenario;
        let size = if s.portfolio_label == "full" {
            s.portfolio.len().to_string()
        } else {
            s.portfolio_label.clone()
        };
        let mut out = format!("{},{},{size},{},{},", s.suite, s.dimension, s.b_factor, s.b_ela_factor);
        let a = self.aggregates.as_ref();
        let cols = [
            a.map(|a| a.sbs_perf),
            a.map(|a| a.vbs_full),
            a.map(|a| a.vbs_opt),
            a.map(|a| a.pias_perf),
            a.and_then(|a| a.gap_closed),
            a.map(|a| a.budget_loss),
            a.map(|a| a.selection_loss),
            a.and_then(|a| a.relative_budget_loss),
        ];
        for c in cols {
            let _ = write!(out, "{},", cell(c));
        }
        out.push_str(&self.flags.join(";"));
        out
    }
}

/// Runs leave-instance-out cross-validation of `strategy` on one scenario.
pub fn evaluate_scenario(
    scenario: &Scenario,
    table: &PerformanceTable,
    features: &FeatureStore,
    instances: &[InstanceMeta],
    strategy: &dyn SelectionStrategy,
) -> Result<ScenarioResult> {
    let split = scenario.split;
    let portfolio = canonical(&scenario.portfolio)?;
    for b in [split.total(), split.opt()] {
        if !table.has_budget(b) {
            return Err(Error::invalid(format!("table has no checkpoint at budget {b}")));
        }
    }
    if let Some(a) = portfolio.iter().find(|a| !table.optimizers().contains(a)) {
        return Err(Error::invalid(format!("table has no runs of {a}")));
    }
    let mut meta: Vec<InstanceMeta> = instances.to_vec();
    meta.sort_by_key(|m| m.key);
    meta.dedup_by_key(|m| m.key);
    if meta.is_empty() {
        return Err(Error::EmptyInput("scenario instances"));
    }
    for m in &meta {
        if features.entries.get(&m.key).is_none_or(Vec::is_empty) {
            return Err(Error::MissingFeature(format!("no feature rows for instance {}", m.key)));
        }
    }

    let all_vectors: Vec<FeatureVector> = meta
        .iter()
        .flat_map(|m| features.entries[&m.key].iter().map(|e| e.features.clone()))
        .collect();
    let retained = filter_features(&all_vectors)?;
    let mut flags = Vec::new();
    if retained.is_empty() {
        flags.push(FLAG_NO_FEATURES.to_string());
    }

    let groups: Vec<u32> = meta.iter().map(|m| m.group).collect();
    let folds = cv_split(&groups, scenario.fold_count, scenario.cv_seed())?;
    let fold_of: BTreeMap<u32, usize> = folds
        .iter()
        .enumerate()
        .flat_map(|(f, gs)| gs.iter().map(move |&g| (g, f)))
        .collect();

    let per_fold: Vec<(FoldSummary, Vec<InstanceResult>)> = (0..folds.len())
        .into_par_iter()
        .map(|f| evaluate_fold(scenario, table, features, &meta, &fold_of, f, &portfolio, &retained, strategy))
        .collect::<Result<_>>()?;

    let mut fold_summaries = Vec::new();
    let mut records = Vec::new();
    for (s, r) in per_fold {
        fold_summaries.push(s);
        records.extend(r);
    }

    let agg = |f: fn(&InstanceResult) -> f64| mean(records.iter().map(f));
    let (sbs, vbs_full, vbs_opt, pias) = (
        agg(|r| r.sbs_perf),
        agg(|r| r.vbs_full),
        agg(|r| r.vbs_opt),
        agg(|r| r.pias_perf),
    );
    let gap = match gap_closed(sbs, vbs_full, pias) {
        Ok(g) => Some(g),
        Err(Error::UndefinedGap(_)) => {
            flags.push(FLAG_UNDEFINED_GAP.to_string());
            None
        }
        Err(e) => return Err(e),
    };
    let loss = decompose_loss(vbs_full, vbs_opt, pias);
    if loss.relative_budget_loss.is_none() {
        flags.push(FLAG_RELATIVE_UNDEFINED.to_string());
    }
    Ok(ScenarioResult {
        scenario: scenario.clone(),
        retained_features: retained,
        folds: fold_summaries,
        aggregates: Some(Aggregates {
            sbs_perf: sbs,
            vbs_full,
            vbs_opt,
            ela_perf: agg(|r| r.ela_perf),
            a_star_perf: agg(|r| r.a_star_perf),
            pias_perf: pias,
            gap_closed: gap,
            budget_loss: loss.budget_loss,
            selection_loss: loss.selection_loss,
            relative_budget_loss: loss.relative_budget_loss,
        }),
        records,
        flags,
        error: None,
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate_fold(
    scenario: &Scenario,
    table: &PerformanceTable,
    features: &FeatureStore,
    meta: &[InstanceMeta],
    fold_of: &BTreeMap<u32, usize>,
    fold: usize,
    portfolio: &[OptimizerId],
    retained: &[String],
    strategy: &dyn SelectionStrategy,
) -> Result<(FoldSummary, Vec<InstanceResult>)> {
    let split = scenario.split;
    let (test, train): (Vec<&InstanceMeta>, Vec<&InstanceMeta>) = meta.iter().partition(|m| fold_of[&m.group] == fold);
    let train_keys: Vec<u32> = train.iter().map(|m| m.key).collect();
    let (sbs, sbs_train_perf) = sbs_full(table, &train_keys, portfolio, split.total())?;

    let model = if retained.is_empty() {
        None
    } else {
        let mut rows = Vec::new();
        for &k in &train_keys {
            let target = portfolio
                .iter()
                .map(|&a| table.mean_perf(k, a, split.opt()))
                .collect::<Result<Vec<f64>>>()?;
            for e in &features.entries[&k] {
                rows.push(TrainingRow {
                    instance: k,
                    features: e.features.clone(),
                    target: target.clone(),
                });
            }
        }
        let ctx = TrainingContext {
            rows: &rows,
            retained,
            portfolio,
            fold,
            seed: scenario.model_seed(fold),
        };
        Some(strategy.train(&ctx)?)
    };

    let test_keys: Vec<u32> = test.iter().map(|m| m.key).collect();
    let vbs_full = vbs(table, &test_keys, portfolio, split.total())?;
    let vbs_opt = vbs(table, &test_keys, portfolio, split.opt())?;
    let mut results = Vec::with_capacity(test.len());
    for ((m, vf), vo) in test.iter().zip(&vbs_full).zip(&vbs_opt) {
        let mut reps = Vec::new();
        for e in &features.entries[&m.key] {
            let selected = match &model {
                None => sbs,
                Some(p) => {
                    let pred = p.predict(m.key, &e.features)?;
                    if pred.len() != portfolio.len() {
                        return Err(Error::invalid("prediction length differs from portfolio size"));
                    }
                    portfolio[argmax_first(&pred).ok_or(Error::invalid("prediction has no finite entry"))?]
                }
            };
            let a_star_perf = table.mean_perf(m.key, selected, split.opt())?;
            reps.push(RepRecord {
                rep: e.repetition,
                selected,
                ela_perf: e.ela_perf,
                a_star_perf,
                pias_perf: pias_perf(e.ela_perf, a_star_perf),
            });
        }
        let pias = mean(reps.iter().map(|r| r.pias_perf));
        results.push(InstanceResult {
            instance: m.key,
            function_id: m.function_id,
            fold,
            ela_perf: mean(reps.iter().map(|r| r.ela_perf)),
            a_star_perf: mean(reps.iter().map(|r| r.a_star_perf)),
            pias_perf: pias,
            reps,
            sbs_algorithm: sbs,
            sbs_perf: table.mean_perf(m.key, sbs, split.total())?,
            vbs_full: vf.best_perf,
            vbs_full_algorithm: vf.best_algorithm,
            vbs_opt: vo.best_perf,
            vbs_opt_algorithm: vo.best_algorithm,
            budget_loss: vf.best_perf - vo.best_perf,
            selection_loss: vo.best_perf - pias,
        });
    }
    Ok((
        FoldSummary {
            fold,
            test_instances: test_keys,
            sbs_algorithm: sbs,
            sbs_train_perf,
        },
        results,
    ))
}

#[cfg(test)]
mod tests;
