//! Plot-ready CSVs from a directory of scenario results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::selector::{ScenarioResult, FLAG_FAILED, FLAG_NO_FEATURES, FLAG_UNDEFINED_GAP};
use crate::suites::SuiteId;

/// Scenarios kept out of gap-closed and PIAS-vs-SBS views.
pub fn is_excluded(r: &ScenarioResult) -> bool {
    r.aggregates.is_none() || [FLAG_FAILED, FLAG_NO_FEATURES, FLAG_UNDEFINED_GAP].iter().any(|f| r.has_flag(f))
}

/// Reads every scenario JSON under `dir`, ordered by scenario key.
pub fn load_results(dir: &Path) -> Result<Vec<ScenarioResult>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != "summary.json"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        out.push(serde_json::from_str::<ScenarioResult>(&text)?);
    }
    out.sort_by_key(key);
    Ok(out)
}

fn key(r: &ScenarioResult) -> (SuiteId, usize, String, usize, usize) {
    let s = &r.scenario;
    (s.suite, s.dimension, s.portfolio_label.clone(), s.b_factor, s.b_ela_factor)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        String::new()
    }
}

/// Mean with a 95% normal-approximation interval; the interval is NaN for
/// fewer than two values.
pub fn mean_ci(v: &[f64]) -> (f64, f64, f64) {
    let m = mean(v);
    if v.len() < 2 {
        return (m, f64::NAN, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    let h = 1.96 * (var / v.len() as f64).sqrt();
    (m, m - h, m + h)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// One-sided binomial tail `P(X >= k)` for `X ~ Bin(n, 1/2)`.
pub fn sign_test_p(k: usize, n: usize) -> f64 {
    let mut p = 0.0;
    let mut c = 1.0f64;
    for i in 0..=n {
        if i > 0 {
            c = c * (n - i + 1) as f64 / i as f64;
        }
        if i >= k {
            p += c;
        }
    }
    p / 2f64.powi(n as i32)
}

fn reduce(a: usize, b: usize) -> (usize, usize) {
    let (mut x, mut y) = (a, b);
    while y != 0 {
        (x, y) = (y, x % y);
    }
    (a / x, b / x)
}

/// Rows of the relative-budget-loss curve: `(suite or "ALL", B_ELA/B, values)`.
pub fn relative_loss_groups(results: &[ScenarioResult]) -> Vec<(String, f64, Vec<f64>)> {
    let mut groups: BTreeMap<(String, (usize, usize)), Vec<f64>> = BTreeMap::new();
    for r in results {
        let Some(v) = r.aggregates.as_ref().and_then(|a| a.relative_budget_loss) else {
            continue;
        };
        let frac = reduce(r.scenario.b_ela_factor, r.scenario.b_factor);
        for label in [r.scenario.suite.to_string(), "ALL".to_string()] {
            groups.entry((label, frac)).or_default().push(v);
        }
    }
    let mut out: Vec<(String, f64, Vec<f64>)> = groups
        .into_iter()
        .map(|((label, (p, q)), v)| (label, p as f64 / q as f64, v))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out
}

pub const FIGURE_FILES: [&str; 5] = [
    "fig2_heatmap.csv",
    "fig3_gap_closed.csv",
    "fig5_pias_vs_sbs.csv",
    "fig6_decomposition.csv",
    "fig7_relative_budget_loss.csv",
];

fn scenario_cols(r: &ScenarioResult) -> String {
    let s = &r.scenario;
    format!("{},{},{},{},{}", s.suite, s.dimension, s.portfolio_label, s.b_factor, s.b_ela_factor)
}

/// Per-function PIAS and SBS means, plus a `mean` row over functions.
fn heatmap(results: &[ScenarioResult]) -> String {
    let mut out = String::from("suite,d,portfolio_size,B_factor,B_ELA_factor,function,pias_perf,sbs_perf,pias_minus_sbs\n");
    for r in results.iter().filter(|r| r.aggregates.is_some()) {
        let mut by_fn: BTreeMap<u32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for rec in &r.records {
            let e = by_fn.entry(rec.function_id).or_default();
            e.0.push(rec.pias_perf);
            e.1.push(rec.sbs_perf);
        }
        let mut rows: Vec<(String, f64, f64)> = by_fn
            .into_iter()
            .map(|(f, (p, s))| (f.to_string(), mean(&p), mean(&s)))
            .collect();
        let p: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let s: Vec<f64> = rows.iter().map(|r| r.2).collect();
        rows.push(("mean".into(), mean(&p), mean(&s)));
        for (f, p, s) in rows {
            let _ = writeln!(out, "{},{f},{},{},{}", scenario_cols(r), num(p), num(s), num(p - s));
        }
    }
    out
}

/// Writes the figure CSVs into `out_dir`.
pub fn write_report(results: &[ScenarioResult], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let kept: Vec<&ScenarioResult> = results.iter().filter(|r| !is_excluded(r)).collect();

    let mut gap = String::from("suite,d,portfolio_size,B_factor,B_ELA_factor,gap_closed\n");
    let mut scatter = String::from("suite,d,portfolio_size,B_factor,B_ELA_factor,sbs_perf,pias_perf,ela_fraction\n");
    for r in &kept {
        let a = r.aggregates.as_ref().expect("kept results have aggregates");
        let _ = writeln!(gap, "{},{}", scenario_cols(r), num(a.gap_closed.expect("defined gap")));
        let _ = writeln!(
            scatter,
            "{},{},{},{}",
            scenario_cols(r),
            num(a.sbs_perf),
            num(a.pias_perf),
            num(r.scenario.split.ela_fraction())
        );
    }
    let mut decomposition = String::from("suite,d,portfolio_size,B_factor,B_ELA_factor,budget_loss,selection_loss,relative_budget_loss\n");
    for r in results {
        if let Some(a) = &r.aggregates {
            let rel = a.relative_budget_loss.map(num).unwrap_or_default();
            let _ = writeln!(decomposition, "{},{},{},{rel}", scenario_cols(r), num(a.budget_loss), num(a.selection_loss));
        }
    }
    let mut curve = String::from("suite,ela_fraction,n,mean,ci_low,ci_high\n");
    for (label, frac, v) in relative_loss_groups(results) {
        let (m, lo, hi) = mean_ci(&v);
        let _ = writeln!(curve, "{label},{},{},{},{},{}", num(frac), v.len(), num(m), num(lo), num(hi));
    }

    let contents = [heatmap(results), gap, scatter, decomposition, curve];
    let mut written = Vec::new();
    for (name, text) in FIGURE_FILES.iter().zip(contents) {
        let path = out_dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
