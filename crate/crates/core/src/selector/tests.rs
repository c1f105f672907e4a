use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::optimizers::OptimizerId::{DeRand1Bin as DE, OnePlusOneEs as ES, RandomSearch as RS};

fn table(cells: &[(u32, OptimizerId, usize, f64)]) -> PerformanceTable {
    PerformanceTable::from_cells(SuiteId::BbobLite, 2, cells.iter().map(|&(i, o, b, v)| (i, o, 0, b, v))).unwrap()
}

#[test]
fn budget_split_requires_positive_remainder() {
    let s = BudgetSplit::from_factors(2, 25, 10).unwrap();
    assert_eq!((s.total(), s.ela(), s.opt()), (50, 20, 30));
    assert!(BudgetSplit::new(20, 20).is_err());
    assert!(BudgetSplit::new(20, 0).is_err());
}

#[test]
fn sbs_dominating_and_tied() {
    let t = table(&[(1, RS, 10, 0.1), (1, ES, 10, 0.9), (2, RS, 10, 0.2), (2, ES, 10, 0.8)]);
    assert_eq!(sbs_full(&t, &[1, 2], &[RS, ES], 10).unwrap().0, ES);
    let t = table(&[(1, RS, 10, 0.5), (1, ES, 10, 0.5)]);
    assert_eq!(sbs_full(&t, &[1], &[ES, RS], 10).unwrap().0, RS);
    assert!(sbs_full(&t, &[], &[RS], 10).is_err());
}

#[test]
fn sbs_matches_exhaustive_means() {
    let perf = [[0.3, 0.6, 0.1], [0.9, 0.2, 0.4], [0.2, 0.5, 0.8]];
    let algos = [RS, ES, DE];
    let mut cells = Vec::new();
    for (i, row) in perf.iter().enumerate() {
        for (a, &v) in algos.iter().zip(row) {
            cells.push((i as u32, *a, 10, v));
        }
    }
    let t = table(&cells);
    let means: Vec<f64> = (0..3).map(|a| perf.iter().map(|r| r[a]).sum::<f64>() / 3.0).collect();
    let mut best = 0;
    for a in 1..3 {
        if means[a] > means[best] {
            best = a;
        }
    }
    let (sbs, m) = sbs_full(&t, &[0, 1, 2], &algos, 10).unwrap();
    assert_eq!(sbs, algos[best]);
    assert!((m - means[best]).abs() < 1e-15);
}

#[test]
fn vbs_by_enumeration() {
    let t = table(&[(1, RS, 10, 0.3), (1, ES, 10, 0.7), (2, RS, 10, 0.6), (2, ES, 10, 0.4)]);
    let v = vbs(&t, &[1, 2], &[RS, ES], 10).unwrap();
    assert_eq!((v[0].best_algorithm, v[0].best_perf), (ES, 0.7));
    assert_eq!((v[1].best_algorithm, v[1].best_perf), (RS, 0.6));
    let single = vbs(&t, &[1, 2], &[RS], 10).unwrap();
    assert_eq!(single[0].best_perf, 0.3);
    let (_, sbs) = sbs_full(&t, &[1, 2], &[RS, ES], 10).unwrap();
    assert!((v[0].best_perf + v[1].best_perf) / 2.0 >= sbs);
}

#[test]
fn pias_gap_and_decomposition_examples() {
    assert_eq!(pias_perf(0.3, 0.7), 0.7);
    assert_eq!(pias_perf(0.7, 0.3), 0.7);
    assert_eq!(pias_perf(0.4, 0.4), 0.4);
    assert_eq!(gap_closed(0.4, 0.8, 0.8).unwrap(), 1.0);
    assert_eq!(gap_closed(0.4, 0.8, 0.4).unwrap(), 0.0);
    assert!((gap_closed(0.4, 0.8, 0.9).unwrap() - 1.25).abs() < 1e-12);
    assert!(matches!(gap_closed(0.5, 0.5, 0.6), Err(Error::UndefinedGap(_))));
    let l = decompose_loss(0.9, 0.85, 0.7);
    assert!((l.budget_loss - 0.05).abs() < 1e-12);
    assert!((l.selection_loss - 0.15).abs() < 1e-12);
    assert!((l.relative_budget_loss.unwrap() - 0.25).abs() < 1e-12);
    assert_eq!(decompose_loss(0.8, 0.8, 0.5).budget_loss, 0.0);
    assert_eq!(decompose_loss(0.8, 0.7, 0.8).relative_budget_loss, None);
    assert_eq!(decompose_loss(0.8, 0.7, 0.9).relative_budget_loss, None);
}

#[test]
fn argmax_tie_takes_first() {
    assert_eq!(argmax_first(&[0.2, 0.9, 0.9, 0.1]), Some(1));
    assert_eq!(argmax_first(&[f64::NAN, 0.1]), Some(1));
    assert_eq!(argmax_first(&[]), None);
}

proptest! {
    #[test]
    fn argmax_invariant_under_monotone_maps(v in prop::collection::vec(-5.0f64..5.0, 1..8), a in 0.1f64..10.0, b in -3.0f64..3.0) {
        let affine: Vec<f64> = v.iter().map(|x| a * x + b).collect();
        let cubed: Vec<f64> = v.iter().map(|x| x.powi(3)).collect();
        prop_assert_eq!(argmax_first(&v), argmax_first(&affine));
        prop_assert_eq!(argmax_first(&v), argmax_first(&cubed));
    }

    #[test]
    fn gap_closed_endpoints(sbs in 0.0f64..0.9, d in 0.01f64..0.1) {
        let vbs = sbs + d;
        prop_assert!((gap_closed(sbs, vbs, vbs).unwrap() - 1.0).abs() < 1e-12);
        prop_assert_eq!(gap_closed(sbs, vbs, sbs).unwrap(), 0.0);
    }
}

#[test]
fn cv_split_properties() {
    let ids: Vec<u32> = (1..=10).collect();
    let folds = cv_split(&ids, 5, 7).unwrap();
    assert_eq!(folds.len(), 5);
    assert!(folds.iter().all(|f| f.len() == 2));
    let mut all: Vec<u32> = folds.concat();
    all.sort_unstable();
    assert_eq!(all, ids);
    assert_eq!(folds, cv_split(&ids, 5, 7).unwrap());
    assert!(cv_split(&ids[..4], 5, 7).is_err());
    let uneven = cv_split(&(0..12).collect::<Vec<_>>(), 5, 1).unwrap();
    assert!(uneven.iter().all(|f| f.len() == 2 || f.len() == 3));
}

fn fv(x: &[f64]) -> FeatureVector {
    FeatureVector::from_pairs(x.iter().enumerate().map(|(i, &v)| (format!("f{i}"), v)))
}

#[test]
fn separable_toy_problem_is_solved() {
    let mut r = rng(11);
    let mut draw = |n: usize| -> Vec<(FeatureVector, usize)> {
        (0..n)
            .map(|_| {
                let side = r.random_bool(0.5);
                let x1 = if side { r.random_range(0.55..1.0) } else { r.random_range(0.0..0.45) };
                (fv(&[x1, r.random::<f64>()]), usize::from(side))
            })
            .collect()
    };
    let train = draw(60);
    let test = draw(40);
    let rows: Vec<TrainingRow> = train
        .iter()
        .enumerate()
        .map(|(i, (f, w))| TrainingRow {
            instance: i as u32,
            features: f.clone(),
            target: if *w == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] },
        })
        .collect();
    let names = vec!["f0".to_string(), "f1".to_string()];
    let m = train_selector(&rows, &names, &[RS, ES], &ForestConfig::default(), 3).unwrap();
    for (f, w) in &test {
        assert_eq!(predict_select(&m, f).unwrap(), [RS, ES][*w]);
    }
}

#[test]
fn exact_fit_selects_true_best_on_training_rows() {
    let cfg = ForestConfig {
        n_trees: 1,
        min_leaf: 1,
        max_depth: None,
        max_features: MaxFeatures::Sqrt,
        bootstrap: false,
    };
    let mut r = rng(5);
    let rows: Vec<TrainingRow> = (0..30)
        .map(|i| TrainingRow {
            instance: i,
            features: fv(&[r.random(), r.random(), r.random()]),
            target: (0..3).map(|_| r.random()).collect(),
        })
        .collect();
    let names: Vec<String> = (0..3).map(|i| format!("f{i}")).collect();
    let m = train_selector(&rows, &names, &[RS, ES, DE], &cfg, 0).unwrap();
    for row in &rows {
        let best = [RS, ES, DE][argmax_first(&row.target).unwrap()];
        assert_eq!(predict_select(&m, &row.features).unwrap(), best);
    }
}

#[test]
fn selector_errors() {
    let rows = vec![TrainingRow {
        instance: 0,
        features: fv(&[1.0]),
        target: vec![1.0],
    }];
    assert!(matches!(
        train_selector(&rows, &[], &[RS], &ForestConfig::default(), 0),
        Err(Error::NoUsableFeatures)
    ));
    let m = train_selector(&rows, &["f0".into()], &[RS], &ForestConfig::default(), 0).unwrap();
    assert_eq!(predict_select(&m, &fv(&[5.0])).unwrap(), RS);
    assert!(matches!(
        predict_select(&m, &FeatureVector::from_pairs([("g", 1.0)])),
        Err(Error::MissingFeature(_))
    ));
}

/// Random monotone table over `n` instances, 3 optimizers, 2 reps, budgets 10 and 20.
fn toy(n: u32, seed: u64) -> (PerformanceTable, FeatureStore, Vec<InstanceMeta>) {
    let mut r = rng(seed);
    let mut cells = Vec::new();
    for i in 0..n {
        for a in [RS, ES, DE] {
            for rep in 0..2 {
                let lo: f64 = r.random_range(0.0..0.6);
                cells.push((i, a, rep, 10, lo));
                cells.push((i, a, rep, 20, lo + r.random_range(0.0..0.4)));
            }
        }
    }
    let t = PerformanceTable::from_cells(SuiteId::BbobLite, 2, cells).unwrap();
    let mut store = FeatureStore::default();
    for i in 0..n {
        let entries = (0..3)
            .map(|rep| FeatureEntry {
                repetition: rep,
                features: fv(&[f64::from(i) + 0.1 * f64::from(rep), r.random()]),
                ela_perf: 0.0,
            })
            .collect();
        store.entries.insert(i, entries);
    }
    let meta = (0..n)
        .map(|i| InstanceMeta {
            key: i,
            function_id: 1 + i % 2,
            group: i,
        })
        .collect();
    (t, store, meta)
}

struct Oracle(Arc<PerformanceTable>, usize);
struct OraclePredictor(Arc<PerformanceTable>, usize, Vec<OptimizerId>);

impl SelectionStrategy for Oracle {
    fn train(&self, ctx: &TrainingContext<'_>) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(OraclePredictor(self.0.clone(), self.1, ctx.portfolio.to_vec())))
    }
}

impl Predictor for OraclePredictor {
    fn predict(&self, instance: u32, _f: &FeatureVector) -> Result<Vec<f64>> {
        self.2.iter().map(|&a| self.0.mean_perf(instance, a, self.1)).collect()
    }
}

struct FixedSbs(Arc<PerformanceTable>, usize);
struct OneHot(Vec<f64>);

impl SelectionStrategy for FixedSbs {
    fn train(&self, ctx: &TrainingContext<'_>) -> Result<Box<dyn Predictor>> {
        let mut train: Vec<u32> = ctx.rows.iter().map(|r| r.instance).collect();
        train.dedup();
        let (sbs, _) = sbs_full(&self.0, &train, ctx.portfolio, self.1)?;
        Ok(Box::new(OneHot(ctx.portfolio.iter().map(|&a| f64::from(u8::from(a == sbs))).collect())))
    }
}

impl Predictor for OneHot {
    fn predict(&self, _: u32, _: &FeatureVector) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

fn scenario() -> Scenario {
    Scenario::new(SuiteId::BbobLite, 2, vec![RS, ES, DE], "full", 10, 5, 42).unwrap()
}

#[test]
fn oracle_selector_reaches_vbs_opt() {
    let (t, store, meta) = toy(12, 1);
    let t = Arc::new(t);
    let res = evaluate_scenario(&scenario(), &t, &store, &meta, &Oracle(t.clone(), 10)).unwrap();
    let a = res.aggregates.unwrap();
    assert!((a.pias_perf - a.vbs_opt).abs() < 1e-12);
    assert_eq!(res.records.len(), 12);
}

#[test]
fn fixed_sbs_selector_never_closes_gap() {
    let (t, store, meta) = toy(12, 2);
    let t = Arc::new(t);
    let res = evaluate_scenario(&scenario(), &t, &store, &meta, &FixedSbs(t.clone(), 20)).unwrap();
    let a = res.aggregates.unwrap();
    assert!(a.gap_closed.unwrap() <= 0.0);
    for r in &res.records {
        assert!(r.reps.iter().all(|x| x.selected == r.sbs_algorithm));
    }
}

#[test]
fn forest_scenario_identities_and_reproducibility() {
    let (t, store, meta) = toy(15, 3);
    let strategy = ForestStrategy(ForestConfig::default());
    let res = evaluate_scenario(&scenario(), &t, &store, &meta, &strategy).unwrap();
    for r in &res.records {
        for x in &r.reps {
            assert_eq!(x.pias_perf, x.ela_perf.max(x.a_star_perf));
        }
        assert!(r.vbs_full >= r.vbs_opt);
        assert!((r.vbs_full - r.pias_perf - r.budget_loss - r.selection_loss).abs() < 1e-12);
    }
    let again = evaluate_scenario(&scenario(), &t, &store, &meta, &strategy).unwrap();
    assert_eq!(serde_json::to_string(&res).unwrap(), serde_json::to_string(&again).unwrap());
}

#[test]
fn hand_computed_two_instance_scenario() {
    let t = table(&[
        (1, RS, 10, 0.2),
        (1, RS, 20, 0.4),
        (1, ES, 10, 0.5),
        (1, ES, 20, 0.6),
        (2, RS, 10, 0.7),
        (2, RS, 20, 0.9),
        (2, ES, 10, 0.1),
        (2, ES, 20, 0.3),
    ]);
    let mut store = FeatureStore::default();
    for (i, x, ela) in [(1, 0.1, 0.3), (2, 0.9, 0.05)] {
        store.entries.insert(
            i,
            vec![FeatureEntry {
                repetition: 0,
                features: fv(&[x]),
                ela_perf: ela,
            }],
        );
    }
    let meta: Vec<InstanceMeta> = [1, 2]
        .iter()
        .map(|&k| InstanceMeta {
            key: k,
            function_id: k,
            group: k,
        })
        .collect();
    let mut sc = Scenario::new(SuiteId::BbobLite, 2, vec![RS, ES], "full", 10, 5, 0).unwrap();
    sc.fold_count = 2;
    let res = evaluate_scenario(&sc, &t, &store, &meta, &ForestStrategy(ForestConfig::default())).unwrap();
    let r1 = res.records.iter().find(|r| r.instance == 1).unwrap();
    let r2 = res.records.iter().find(|r| r.instance == 2).unwrap();
    // Instance 1 trains on instance 2 alone: SBS and prediction are RS.
    assert_eq!((r1.sbs_algorithm, r1.reps[0].selected), (RS, RS));
    assert_eq!((r1.sbs_perf, r1.a_star_perf, r1.pias_perf, r1.vbs_full, r1.vbs_opt), (0.4, 0.2, 0.3, 0.6, 0.5));
    assert_eq!((r2.sbs_algorithm, r2.reps[0].selected), (ES, ES));
    assert_eq!((r2.sbs_perf, r2.a_star_perf, r2.pias_perf, r2.vbs_full, r2.vbs_opt), (0.3, 0.1, 0.1, 0.9, 0.7));
    let a = res.aggregates.unwrap();
    let close = |x: f64, y: f64| (x - y).abs() < 1e-12;
    assert!(close(a.sbs_perf, 0.35));
    assert!(close(a.vbs_full, 0.75));
    assert!(close(a.vbs_opt, 0.6));
    assert!(close(a.pias_perf, 0.2));
    assert!(close(a.gap_closed.unwrap(), -0.375));
    assert!(close(a.budget_loss, 0.15));
    assert!(close(a.selection_loss, 0.4));
    assert!(close(a.relative_budget_loss.unwrap(), 0.15 / 0.55));
}

#[test]
fn flat_features_fall_back_to_sbs() {
    let (t, mut store, meta) = toy(10, 4);
    for v in store.entries.values_mut() {
        for e in v {
            e.features = fv(&[1.0, f64::NAN]);
        }
    }
    let res = evaluate_scenario(&scenario(), &t, &store, &meta, &ForestStrategy(ForestConfig::default())).unwrap();
    assert!(res.has_flag(FLAG_NO_FEATURES));
    assert!(res.records.iter().all(|r| r.reps.iter().all(|x| x.selected == r.sbs_algorithm)));
}

#[test]
fn equal_sbs_and_vbs_is_flagged() {
    let mut cells = Vec::new();
    for i in 0..6 {
        for a in [RS, ES] {
            cells.push((i, a, 0, 10, 0.5));
            cells.push((i, a, 0, 20, 0.5));
        }
    }
    let t = PerformanceTable::from_cells(SuiteId::BbobLite, 2, cells).unwrap();
    let (_, store, meta) = toy(6, 5);
    let sc = Scenario::new(SuiteId::BbobLite, 2, vec![RS, ES], "full", 10, 5, 0).unwrap();
    let res = evaluate_scenario(&sc, &t, &store, &meta, &ForestStrategy(ForestConfig::default())).unwrap();
    assert!(res.has_flag(FLAG_UNDEFINED_GAP));
    assert_eq!(res.aggregates.as_ref().unwrap().gap_closed, None);
    assert!(res.csv_row().contains("undefined_gap"));
}

#[test]
fn csv_row_has_header_arity() {
    let (t, store, meta) = toy(10, 6);
    let res = evaluate_scenario(&scenario(), &t, &store, &meta, &ForestStrategy(ForestConfig::default())).unwrap();
    assert_eq!(res.csv_row().split(',').count(), CSV_HEADER.split(',').count());
    let failed = ScenarioResult::failed(scenario(), &Error::NoUsableFeatures);
    assert_eq!(failed.csv_row().split(',').count(), CSV_HEADER.split(',').count());
}
