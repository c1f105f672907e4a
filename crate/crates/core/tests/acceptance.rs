//! Acceptance criteria, one line each. Runs as a plain binary so the lines
//! show up in `cargo test` output; exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;

use pias::features::FeatureVector;
use pias::harness::config::InstanceCounts;
use pias::harness::pipeline::{self, SuiteData};
use pias::harness::report::{relative_loss_groups, sign_test_p, spearman};
use pias::harness::{self, GridConfig, PortfolioSize};
use pias::optimizers::OptimizerId;
use pias::perfdb::{attainment_score, PerformanceTable};
use pias::portfolio::Complementarity;
use pias::sampling::{sobol_points, SamplePlan, SobolSequence};
use pias::seed::rng;
use pias::selector::{
    gap_closed, predict_select, train_selector, ForestConfig, MaxFeatures, RandomForest, ScenarioResult,
    TrainingRow,
};
use pias::suites::SuiteId;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn minimal_config() -> GridConfig {
    GridConfig {
        suites: vec![SuiteId::BbobLite, SuiteId::RogLite],
        dimensions: vec![2],
        budget_factors: vec![10, 25, 50],
        ela_budget_factors: vec![5, 10, 25],
        portfolio_sizes: vec![PortfolioSize::Members(2), PortfolioSize::Full],
        optimizers: vec![
            OptimizerId::RandomSearch,
            OptimizerId::OnePlusOneEs,
            OptimizerId::DeRand1Bin,
            OptimizerId::CmaDiag,
        ],
        n_reps: 2,
        max_budget_factor: 50,
        instances: InstanceCounts {
            bbob_functions: vec![1, 3, 7, 11],
            bbob_instances: 5,
            mabbob: 10,
            rog: 10,
        },
        master_seed: 1,
        ..GridConfig::default()
    }
}

fn minimal_grid() -> Vec<(SuiteData, Vec<ScenarioResult>)> {
    let cfg = minimal_config();
    cfg.suites
        .iter()
        .map(|&s| pipeline::run_grid(&cfg, s, 2).expect("minimal grid"))
        .collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let grid = minimal_grid();
    let tol = 1e-12;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for (_, results) in &grid {
        for r in results {
            let Some(a) = &r.aggregates else {
                return outcome(false, format!("scenario failed: {:?}", r.error));
            };
            for rec in &r.records {
                for x in &rec.reps {
                    worst = worst.max((x.pias_perf - x.ela_perf.max(x.a_star_perf)).abs());
                }
                worst = worst.max((rec.vbs_full - rec.pias_perf - rec.budget_loss - rec.selection_loss).abs());
                if rec.vbs_full < rec.vbs_opt {
                    return outcome(false, format!("VBS_full < VBS_opt on instance {}", rec.instance));
                }
                checked += 1;
            }
            worst = worst.max((a.vbs_full - a.pias_perf - a.budget_loss - a.selection_loss).abs());
            if a.vbs_full - a.sbs_perf > 1e-12 {
                worst = worst.max((gap_closed(a.sbs_perf, a.vbs_full, a.vbs_full).unwrap() - 1.0).abs());
                worst = worst.max(gap_closed(a.sbs_perf, a.vbs_full, a.sbs_perf).unwrap().abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= tol && secs < 60.0,
        format!("{checked} instance records, max deviation {worst:.1e}, {secs:.1} s"),
    )
}

fn criterion_2() -> Outcome {
    let a = attainment_score(1e2).unwrap();
    let b = attainment_score(1e-8).unwrap();
    let c = attainment_score(1e-3).unwrap();
    outcome(a == 0.0 && b == 1.0 && c == 0.5, format!("scores {a}, {b}, {c}"))
}

fn criterion_3() -> Outcome {
    let cfg = minimal_config();
    let (data, results) = pipeline::run_grid(&cfg, SuiteId::BbobLite, 2).expect("grid");
    let r = results
        .iter()
        .find(|r| r.scenario.b_factor == 50 && r.scenario.b_ela_factor == 10 && r.scenario.portfolio_label == "full")
        .expect("scenario present");
    let split = r.scenario.split;
    let max_budget = cfg.max_budget_factor * 2;
    let mut episodes = 0;
    for rec in &r.records {
        let inst = data.set.get(rec.instance).expect("instance");
        for x in &rec.reps {
            let replay =
                pipeline::replay(inst, split, x.selected, x.rep, 0, cfg.master_seed, max_budget).expect("replay");
            if replay.evaluations != split.total() as u64 {
                return outcome(false, format!("instance {} rep {}: {} evaluations", rec.instance, x.rep, replay.evaluations));
            }
            episodes += 1;
        }
    }
    outcome(true, format!("{episodes} episodes, each exactly B = {} evaluations", split.total()))
}

/// Every dyadic interval of width `2^-k` holds exactly one of the points.
fn stratified_1d(values: &[f64], k: u32) -> bool {
    let n = 1usize << k;
    let mut hits = vec![0; n];
    for &v in values {
        hits[(v * n as f64) as usize] += 1;
    }
    hits.iter().all(|&h| h == 1)
}

fn criterion_4() -> Outcome {
    let d1 = sobol_points(&SamplePlan::unscrambled(1, 3)).unwrap();
    let first: Vec<f64> = d1.iter().map(|p| p[0]).collect();
    if first != [0.5, 0.75, 0.25] {
        return outcome(false, format!("d=1 starts {first:?}"));
    }
    for d in 1..=8 {
        let seq = SobolSequence::new(d).unwrap();
        for k in 0..=6u32 {
            let n = 1u32 << k;
            let raw: Vec<Vec<f64>> = (0..n).map(|i| seq.point(i)).collect();
            let scrambled = sobol_points(&SamplePlan::scrambled(d, n as usize, 0, 77)).unwrap();
            for pts in [&raw, &scrambled] {
                for j in 0..d {
                    let col: Vec<f64> = pts.iter().map(|p| p[j]).collect();
                    if !stratified_1d(&col, k) {
                        return outcome(false, format!("d={d} k={k} coordinate {j} not stratified"));
                    }
                }
                // the first two coordinates form a (0, k, 2)-net
                if d >= 2 {
                    for a in 0..=k {
                        let (na, nb) = (1usize << a, 1usize << (k - a));
                        let mut hits = vec![0; na * nb];
                        for p in pts.iter() {
                            hits[(p[0] * na as f64) as usize * nb + (p[1] * nb as f64) as usize] += 1;
                        }
                        if hits.iter().any(|&h| h != 1) {
                            return outcome(false, format!("d={d} k={k} boxes 2^-{a} x 2^-{} not stratified", k - a));
                        }
                    }
                }
            }
        }
    }
    outcome(true, "d=1 prefix (0.5, 0.75, 0.25); stratified for k <= 6, d <= 8")
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn criterion_5() -> Outcome {
    let algos = [
        OptimizerId::RandomSearch,
        OptimizerId::OnePlusOneEs,
        OptimizerId::Pso,
        OptimizerId::CmaDiag,
    ];
    let perf = [
        [0.9, 0.1, 0.4, 0.3, 0.8, 0.2],
        [0.2, 0.8, 0.5, 0.1, 0.6, 0.3],
        [0.3, 0.2, 0.9, 0.7, 0.1, 0.5],
        [0.6, 0.6, 0.6, 0.6, 0.6, 0.6],
    ];
    let cells = algos
        .iter()
        .zip(&perf)
        .flat_map(|(&a, row)| row.iter().enumerate().map(move |(i, &v)| (i as u32, a, 0, 10, v)));
    let table = PerformanceTable::from_cells(SuiteId::BbobLite, 2, cells).unwrap();
    let g = Complementarity::from_table(&table, table.instances(), &algos, 10).unwrap();
    // v(S) from its definition, read straight off the matrix
    let v = |mask: u32| -> f64 {
        if mask == 0 {
            return 0.0;
        }
        let members: Vec<usize> = (0..4).filter(|a| mask >> a & 1 == 1).collect();
        let vbs = (0..6).map(|i| members.iter().map(|&a| perf[a][i]).fold(f64::MIN, f64::max)).sum::<f64>() / 6.0;
        let sbs = members.iter().map(|&a| perf[a].iter().sum::<f64>() / 6.0).fold(f64::MIN, f64::max);
        vbs - sbs
    };
    let exact: Vec<f64> = (0..4)
        .map(|a| {
            (0..16u32)
                .filter(|s| s >> a & 1 == 0)
                .map(|s| {
                    let k = s.count_ones() as usize;
                    factorial(k) * factorial(3 - k) / factorial(4) * (v(s | 1 << a) - v(s))
                })
                .sum()
        })
        .collect();
    let est = g.shapley_all_permutations().unwrap();
    let dev = exact.iter().zip(&est).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let eff = (exact.iter().sum::<f64>() - v(15)).abs();
    outcome(dev < 1e-12 && eff < 1e-12, format!("max |estimate - exact| {dev:.1e}, efficiency gap {eff:.1e}"))
}

fn criterion_6() -> Outcome {
    let mut r = rng(17);
    let x: Vec<Vec<f64>> = (0..80).map(|_| (0..5).map(|_| r.random()).collect()).collect();
    let y: Vec<Vec<f64>> = (0..80).map(|_| (0..4).map(|_| r.random()).collect()).collect();
    let cfg = ForestConfig {
        n_trees: 1,
        min_leaf: 1,
        max_depth: None,
        max_features: MaxFeatures::Sqrt,
        bootstrap: false,
    };
    let tree = RandomForest::fit(&x, &y, &cfg, 0).unwrap();
    let exact = x.iter().zip(&y).all(|(row, t)| tree.predict(row).unwrap() == *t);

    // The two winners occupy x1 <= 0.4 and x1 >= 0.6; x2 is noise.
    let fv = |a: f64, b: f64| FeatureVector::from_pairs([("x1", a), ("x2", b)]);
    let mut draw = |n: usize| -> Vec<(FeatureVector, usize)> {
        (0..n)
            .map(|_| {
                let side = r.random_bool(0.5);
                let x1: f64 = if side { r.random_range(0.6..=1.0) } else { r.random_range(0.0..=0.4) };
                (fv(x1, r.random()), usize::from(side))
            })
            .collect()
    };
    let train = draw(100);
    let test = draw(100);
    let algos = [OptimizerId::RandomSearch, OptimizerId::OnePlusOneEs];
    let rows: Vec<TrainingRow> = train
        .iter()
        .enumerate()
        .map(|(i, (f, w))| TrainingRow {
            instance: i as u32,
            features: f.clone(),
            target: if *w == 0 { vec![0.9, 0.2] } else { vec![0.3, 0.8] },
        })
        .collect();
    let model = train_selector(&rows, &["x1".into(), "x2".into()], &algos, &ForestConfig::default(), 5).unwrap();
    let correct = test.iter().filter(|(f, w)| predict_select(&model, f).unwrap() == algos[*w]).count();
    outcome(
        exact && correct == test.len(),
        format!("exact fit {exact}, held-out accuracy {correct}/{}", test.len()),
    )
}

fn trend_config(seed: u64) -> GridConfig {
    GridConfig {
        suites: vec![SuiteId::BbobLite],
        dimensions: vec![2],
        budget_factors: vec![250],
        ela_budget_factors: vec![5, 10, 25, 50, 100],
        portfolio_sizes: vec![PortfolioSize::Members(4)],
        max_budget_factor: 250,
        master_seed: seed,
        ..GridConfig::default()
    }
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let seeds = 10u64;
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..seeds {
        let (_, results) = pipeline::run_grid(&trend_config(seed), SuiteId::BbobLite, 2).expect("grid");
        let gap: BTreeMap<usize, f64> = results
            .iter()
            .filter_map(|r| Some((r.scenario.b_ela_factor, r.aggregates.as_ref()?.gap_closed?)))
            .collect();
        let large = gap.get(&100).copied().unwrap_or(f64::NAN);
        let best_small = gap.iter().filter(|(e, _)| **e < 100).map(|(_, g)| *g).fold(f64::NEG_INFINITY, f64::max);
        if large < best_small {
            wins += 1;
        }
        lines.push(format!("{large:.2}<{best_small:.2}"));
    }
    let p = sign_test_p(wins, seeds as usize);
    outcome(
        p < 0.05,
        format!(
            "{wins}/{seeds} seeds, sign test p = {p:.4}, {:.0} s [{}]",
            start.elapsed().as_secs_f64(),
            lines.join(" ")
        ),
    )
}

fn desk_config() -> GridConfig {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn criterion_8(desk: &[ScenarioResult]) -> Outcome {
    let groups = relative_loss_groups(desk);
    let all: Vec<&(String, f64, Vec<f64>)> = groups.iter().filter(|g| g.0 == "ALL").collect();
    let x: Vec<f64> = all.iter().map(|g| g.1).collect();
    let y: Vec<f64> = all.iter().map(|g| g.2.iter().sum::<f64>() / g.2.len() as f64).collect();
    let rho = spearman(&x, &y);
    let by_band = |lo: f64, hi: f64| {
        let v: Vec<f64> = all.iter().filter(|g| g.1 > lo && g.1 <= hi).flat_map(|g| g.2.iter().copied()).collect();
        100.0 * v.iter().sum::<f64>() / v.len() as f64
    };
    outcome(
        rho > 0.5,
        format!(
            "Spearman {rho:.3} over {} budget fractions; mean relative budget loss {:.0}% / {:.0}% / {:.0}% for fractions <= 0.1, <= 0.25, > 0.25 (reference 11/22/28%)",
            x.len(),
            by_band(0.0, 0.1),
            by_band(0.1, 0.25),
            by_band(0.25, 1.0)
        ),
    )
}

fn criterion_9(desk: &[ScenarioResult]) -> Outcome {
    let eligible: Vec<&ScenarioResult> = desk
        .iter()
        .filter(|r| {
            let s = &r.scenario;
            s.suite == SuiteId::BbobLite
                && s.portfolio_label == "4"
                && s.b_factor >= 100
                && s.split.ela_fraction() <= 0.25
                && r.aggregates.is_some()
        })
        .collect();
    let wins = eligible
        .iter()
        .filter(|r| {
            let a = r.aggregates.as_ref().unwrap();
            a.pias_perf > a.sbs_perf
        })
        .count();
    let p = sign_test_p(wins, eligible.len());
    outcome(p < 0.05, format!("PIAS > SBS in {wins}/{} scenarios, sign test p = {p:.4}", eligible.len()))
}

fn criterion_10() -> Outcome {
    let mut csvs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GridConfig {
            output_dir: dir.path().to_path_buf(),
            ..minimal_config()
        };
        harness::cmd_run_suite(&cfg).unwrap();
        harness::cmd_build_portfolio(&cfg).unwrap();
        harness::cmd_select(&cfg).unwrap();
        csvs.push(std::fs::read(harness::results_dir(dir.path()).join("results.csv")).unwrap());
    }
    outcome(csvs[0] == csvs[1], format!("{} bytes per results.csv", csvs[0].len()))
}

fn main() {
    let quick = std::env::args().any(|a| a == "--quick");
    let mut outcomes: Vec<(usize, &str, Outcome)> = vec![
        (1, "definition identities", criterion_1()),
        (2, "attainment anchors", criterion_2()),
        (3, "budget exactness", criterion_3()),
        (4, "Sobol correctness", criterion_4()),
        (5, "Shapley oracle", criterion_5()),
        (6, "forest oracle", criterion_6()),
    ];
    if !quick {
        outcomes.push((7, "trend: large feature budgets hurt", criterion_7()));
        let start = Instant::now();
        let cfg = desk_config();
        let desk: Vec<ScenarioResult> = cfg
            .suites
            .iter()
            .flat_map(|&s| cfg.dimensions.iter().map(move |&d| (s, d)))
            .flat_map(|(s, d)| pipeline::run_grid(&cfg, s, d).expect("desk grid").1)
            .collect();
        eprintln!("desk grid: {} scenarios in {:.0} s", desk.len(), start.elapsed().as_secs_f64());
        outcomes.push((8, "trend: relative budget loss grows", criterion_8(&desk)));
        outcomes.push((9, "PIAS beats SBS at modest budgets", criterion_9(&desk)));
    }
    outcomes.push((10, "end-to-end determinism", criterion_10()));
    outcomes.sort_by_key(|o| o.0);
    let mut failed = 0;
    for (n, name, o) in &outcomes {
        println!("criterion {n:>2} {:<4} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
