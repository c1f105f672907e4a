//! Normalized anytime performance in [0, 1] with budget-prefix lookups.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::{OptimizerId, Trajectory};
use crate::suites::SuiteId;

/// Attainment bounds: errors at or above `10^2` score 0, at or below `10^-8`
/// score 1, log-linear in between.
pub const ATTAINMENT_UPPER_LOG10: f64 = 2.0;
pub const ATTAINMENT_LOWER_LOG10: f64 = -8.0;

pub fn attainment_score(error: f64) -> Result<f64> {
    if error.is_nan() || error < 0.0 {
        return Err(Error::invalid(format!("negative or NaN error {error}")));
    }
    let floor = 10f64.powf(ATTAINMENT_LOWER_LOG10);
    let span = ATTAINMENT_UPPER_LOG10 - ATTAINMENT_LOWER_LOG10;
    Ok(((ATTAINMENT_UPPER_LOG10 - error.max(floor).log10()) / span).clamp(0.0, 1.0))
}

/// Maps tracked values (error when the optimum is known, raw value
/// otherwise) to performance in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalizer {
    Attainment { optimum: f64 },
    Extrema { v_min: f64, v_max: f64 },
}

impl Normalizer {
    pub fn attainment(optimum: f64) -> Self {
        Normalizer::Attainment { optimum }
    }

    /// Converts a raw objective value into the tracked quantity.
    pub fn tracked(&self, raw: f64) -> f64 {
        match self {
            Normalizer::Attainment { optimum } => raw - optimum,
            Normalizer::Extrema { .. } => raw,
        }
    }

    pub fn score(&self, tracked: f64) -> Result<f64> {
        match *self {
            Normalizer::Attainment { .. } => attainment_score(tracked),
            Normalizer::Extrema { v_min, v_max } => {
                if v_max > v_min {
                    Ok(((v_max - tracked) / (v_max - v_min)).clamp(0.0, 1.0))
                } else {
                    Ok(0.5)
                }
            }
        }
    }

    /// True for extrema normalizers whose extrema coincide.
    pub fn is_degenerate(&self) -> bool {
        matches!(*self, Normalizer::Extrema { v_min, v_max } if !(v_max > v_min))
    }
}

/// Per-instance extrema normalizer from all runs on that instance, using
/// best-so-far values between evaluation `window.0` and `window.1`.
pub fn rog_normalize(trajectories: &[&Trajectory], window: (usize, usize)) -> Result<Normalizer> {
    if trajectories.is_empty() {
        return Err(Error::EmptyInput("trajectories"));
    }
    let (start, end) = window;
    if start < 1 || start > end {
        return Err(Error::invalid(format!("bad extrema window {start}..{end}")));
    }
    let mut v_min = f64::INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    for t in trajectories {
        v_max = v_max.max(t.value_at(start)?);
        v_min = v_min.min(t.value_at(end.min(t.len()))?);
    }
    Ok(Normalizer::Extrema { v_min, v_max })
}

pub fn perf_at(trajectory: &Trajectory, budget: usize, normalizer: &Normalizer) -> Result<f64> {
    normalizer.score(trajectory.value_at(budget)?)
}

/// Dense performance over (instance, optimizer, repetition, budget).
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceTable {
    pub suite: SuiteId,
    pub dimension: usize,
    instances: Vec<u32>,
    optimizers: Vec<OptimizerId>,
    reps: u32,
    budgets: Vec<usize>,
    values: Vec<f64>,
    normalizers: BTreeMap<u32, Normalizer>,
}

impl PerformanceTable {
    pub fn instances(&self) -> &[u32] {
        &self.instances
    }

    pub fn optimizers(&self) -> &[OptimizerId] {
        &self.optimizers
    }

    pub fn reps(&self) -> u32 {
        self.reps
    }

    pub fn budgets(&self) -> &[usize] {
        &self.budgets
    }

    pub fn normalizer(&self, instance: u32) -> Option<&Normalizer> {
        self.normalizers.get(&instance)
    }

    pub fn normalizers(&self) -> &BTreeMap<u32, Normalizer> {
        &self.normalizers
    }

    pub fn with_normalizers(mut self, normalizers: BTreeMap<u32, Normalizer>) -> Self {
        self.normalizers = normalizers;
        self
    }

    /// Instances whose normalizer is degenerate.
    pub fn degenerate_instances(&self) -> Vec<u32> {
        self.normalizers
            .iter()
            .filter(|(_, n)| n.is_degenerate())
            .map(|(k, _)| *k)
            .collect()
    }

    fn offset(&self, instance: u32, optimizer: OptimizerId, rep: u32, budget: usize) -> Option<usize> {
        let i = self.instances.binary_search(&instance).ok()?;
        let o = self.optimizers.binary_search(&optimizer).ok()?;
        let b = self.budgets.binary_search(&budget).ok()?;
        if rep >= self.reps {
            return None;
        }
        let nb = self.budgets.len();
        let nr = self.reps as usize;
        Some(((i * self.optimizers.len() + o) * nr + rep as usize) * nb + b)
    }

    pub fn get(&self, instance: u32, optimizer: OptimizerId, rep: u32, budget: usize) -> Option<f64> {
        self.offset(instance, optimizer, rep, budget).map(|k| self.values[k])
    }

    /// Mean over repetitions.
    pub fn mean_perf(&self, instance: u32, optimizer: OptimizerId, budget: usize) -> Result<f64> {
        let mut sum = 0.0;
        for rep in 0..self.reps {
            sum += self.get(instance, optimizer, rep, budget).ok_or_else(|| {
                Error::invalid(format!(
                    "no table cell for instance {instance}, {optimizer}, budget {budget}"
                ))
            })?;
        }
        Ok(sum / f64::from(self.reps))
    }

    pub fn has_budget(&self, budget: usize) -> bool {
        self.budgets.binary_search(&budget).is_ok()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Assembles a table from explicit cells; every combination of the given
    /// axes must be present.
    pub fn from_cells(
        suite: SuiteId,
        dimension: usize,
        cells: impl IntoIterator<Item = (u32, OptimizerId, u32, usize, f64)>,
    ) -> Result<Self> {
        let cells: Vec<_> = cells.into_iter().collect();
        let mut instances: Vec<u32> = cells.iter().map(|c| c.0).collect();
        let mut optimizers: Vec<OptimizerId> = cells.iter().map(|c| c.1).collect();
        let mut budgets: Vec<usize> = cells.iter().map(|c| c.3).collect();
        instances.sort_unstable();
        instances.dedup();
        optimizers.sort_unstable();
        optimizers.dedup();
        budgets.sort_unstable();
        budgets.dedup();
        let reps = cells.iter().map(|c| c.2 + 1).max().unwrap_or(0);
        let mut table = PerformanceTable {
            suite,
            dimension,
            values: vec![f64::NAN; instances.len() * optimizers.len() * reps as usize * budgets.len()],
            instances,
            optimizers,
            reps,
            budgets,
            normalizers: BTreeMap::new(),
        };
        if table.values.is_empty() {
            return Err(Error::EmptyInput("performance cells"));
        }
        for (i, o, r, b, v) in cells {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("performance {v} outside [0, 1]")));
            }
            let k = table.offset(i, o, r, b).expect("axes built from cells");
            if !table.values[k].is_nan() {
                return Err(Error::invalid(format!("duplicate cell ({i}, {o}, {r}, {b})")));
            }
            table.values[k] = v;
        }
        if table.values.iter().any(|v| v.is_nan()) {
            return Err(Error::IncompleteRunSet("missing performance cells".into()));
        }
        Ok(table)
    }

    /// Writes `suite,d,instance_id,optimizer,rep,budget,perf` rows with 17
    /// significant digits, which round-trips bit-exactly.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "suite,d,instance_id,optimizer,rep,budget,perf").map_err(io)?;
        for &i in &self.instances {
            for &o in &self.optimizers {
                for r in 0..self.reps {
                    for &b in &self.budgets {
                        let v = self.get(i, o, r, b).expect("dense table");
                        writeln!(w, "{},{},{i},{o},{r},{b},{v:.16e}", self.suite, self.dimension).map_err(io)?;
                    }
                }
            }
        }
        w.flush().map_err(io)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut suite = None;
        let mut dim = None;
        let mut cells = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let field = |k: usize| rec.get(k).ok_or_else(|| Error::invalid("short row"));
            let s: SuiteId = field(0)?.parse()?;
            let d: usize = field(1)?.parse().map_err(|_| Error::invalid("bad d"))?;
            if *suite.get_or_insert(s) != s || *dim.get_or_insert(d) != d {
                return Err(Error::invalid("table mixes suites or dimensions"));
            }
            cells.push((
                field(2)?.parse().map_err(|_| Error::invalid("bad instance"))?,
                field(3)?.parse()?,
                field(4)?.parse().map_err(|_| Error::invalid("bad rep"))?,
                field(5)?.parse().map_err(|_| Error::invalid("bad budget"))?,
                field(6)?.parse().map_err(|_| Error::invalid("bad perf"))?,
            ));
        }
        let suite = suite.ok_or(Error::EmptyInput("performance csv"))?;
        Self::from_cells(suite, dim.unwrap_or(0), cells)
    }
}

/// Builds the dense table at `budgets` from one trajectory per (instance,
/// optimizer, repetition), normalizing each instance with `normalizers`.
pub fn build_table(
    suite: SuiteId,
    dimension: usize,
    trajectories: &[Trajectory],
    budgets: &[usize],
    normalizers: &BTreeMap<u32, Normalizer>,
) -> Result<PerformanceTable> {
    if trajectories.is_empty() {
        return Err(Error::EmptyInput("trajectories"));
    }
    let mut budgets = budgets.to_vec();
    budgets.sort_unstable();
    budgets.dedup();
    if budgets.is_empty() || budgets[0] == 0 {
        return Err(Error::invalid("budget checkpoints must be positive"));
    }
    let mut instances: Vec<u32> = trajectories.iter().map(|t| t.instance).collect();
    instances.sort_unstable();
    instances.dedup();
    let mut optimizers: Vec<OptimizerId> = trajectories.iter().map(|t| t.optimizer).collect();
    optimizers.sort_unstable();
    optimizers.dedup();
    let reps = trajectories.iter().map(|t| t.repetition + 1).max().unwrap_or(0);

    let mut slots: Vec<Option<&Trajectory>> = vec![None; instances.len() * optimizers.len() * reps as usize];
    for t in trajectories {
        let i = instances.binary_search(&t.instance).expect("axis");
        let o = optimizers.binary_search(&t.optimizer).expect("axis");
        let k = (i * optimizers.len() + o) * reps as usize + t.repetition as usize;
        if slots[k].replace(t).is_some() {
            return Err(Error::invalid(format!(
                "duplicate run ({}, {}, rep {})",
                t.optimizer, t.instance, t.repetition
            )));
        }
    }
    if let Some(k) = slots.iter().position(Option::is_none) {
        let nr = reps as usize;
        let (io, rep) = (k / nr, k % nr);
        return Err(Error::IncompleteRunSet(format!(
            "no run for instance {}, {}, rep {rep}",
            instances[io / optimizers.len()],
            optimizers[io % optimizers.len()]
        )));
    }
    let values: Vec<f64> = slots
        .par_iter()
        .map(|t| {
            let t = t.expect("checked complete");
            let norm = normalizers
                .get(&t.instance)
                .ok_or_else(|| Error::invalid(format!("no normalizer for instance {}", t.instance)))?;
            budgets
                .iter()
                .map(|&b| perf_at(t, b, norm))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(PerformanceTable {
        suite,
        dimension,
        instances,
        optimizers,
        reps,
        budgets,
        values,
        normalizers: normalizers.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj(opt: OptimizerId, instance: u32, rep: u32, best: Vec<f64>) -> Trajectory {
        Trajectory::new(opt, instance, rep, 0, best)
    }

    #[test]
    fn attainment_anchors() {
        assert_eq!(attainment_score(1e2).unwrap(), 0.0);
        assert_eq!(attainment_score(1e-8).unwrap(), 1.0);
        assert_eq!(attainment_score(1e-3).unwrap(), 0.5);
        assert_eq!(attainment_score(0.0).unwrap(), 1.0);
        assert_eq!(attainment_score(1e7).unwrap(), 0.0);
        assert!(attainment_score(-1e-3).is_err());
    }

    proptest! {
        #[test]
        fn attainment_is_monotone(a in 0.0f64..1e4, b in 0.0f64..1e4) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(attainment_score(lo).unwrap() >= attainment_score(hi).unwrap());
        }
    }

    #[test]
    fn extrema_examples() {
        let t1 = traj(OptimizerId::RandomSearch, 1, 0, vec![9.0, 8.0, 4.0, 2.0]);
        let t2 = traj(OptimizerId::Pso, 1, 0, vec![7.0, 7.0, 6.0, 3.0]);
        let n = rog_normalize(&[&t1, &t2], (2, 4)).unwrap();
        assert_eq!(n, Normalizer::Extrema { v_min: 2.0, v_max: 8.0 });
        assert_eq!(n.score(2.0).unwrap(), 1.0);
        assert_eq!(n.score(8.0).unwrap(), 0.0);
        assert_eq!(n.score(5.0).unwrap(), 0.5);
        assert_eq!(n.score(100.0).unwrap(), 0.0);
        assert!(!n.is_degenerate());

        let flat = traj(OptimizerId::Pso, 1, 0, vec![1.0; 4]);
        let n = rog_normalize(&[&flat], (2, 4)).unwrap();
        assert!(n.is_degenerate());
        assert_eq!(n.score(1.0).unwrap(), 0.5);
        assert!(rog_normalize(&[], (1, 2)).is_err());
    }

    #[test]
    fn perf_at_budgets() {
        let t = traj(OptimizerId::RandomSearch, 1, 0, vec![1e2, 1e-3, 1e-3, 1e-9]);
        let n = Normalizer::attainment(0.0);
        assert_eq!(perf_at(&t, 1, &n).unwrap(), 0.0);
        assert_eq!(perf_at(&t, 2, &n).unwrap(), 0.5);
        assert_eq!(perf_at(&t, 4, &n).unwrap(), 1.0);
        assert!(perf_at(&t, 5, &n).is_err());
        assert!(perf_at(&t, 0, &n).is_err());
    }

    fn toy_runs() -> Vec<Trajectory> {
        let mut out = Vec::new();
        for (oi, opt) in [OptimizerId::RandomSearch, OptimizerId::OnePlusOneEs].into_iter().enumerate() {
            for inst in 1..=3u32 {
                for rep in 0..5u32 {
                    let start = 10f64.powi(2 + oi as i32);
                    let best: Vec<f64> = (0..40)
                        .map(|t| start * 0.5f64.powi(t * (inst as i32 + rep as i32)))
                        .collect();
                    out.push(traj(opt, inst, rep, best));
                }
            }
        }
        out
    }

    fn attainment_all(instances: &[u32]) -> BTreeMap<u32, Normalizer> {
        instances.iter().map(|&i| (i, Normalizer::attainment(0.0))).collect()
    }

    #[test]
    fn build_table_cardinality_and_range() {
        let runs = toy_runs();
        let table = build_table(SuiteId::BbobLite, 2, &runs, &[10, 5, 40, 20], &attainment_all(&[1, 2, 3])).unwrap();
        assert_eq!(table.len(), 120);
        assert_eq!(table.budgets(), &[5, 10, 20, 40]);
        for &i in table.instances() {
            for &o in table.optimizers() {
                for r in 0..5 {
                    let row: Vec<f64> = table.budgets().iter().map(|&b| table.get(i, o, r, b).unwrap()).collect();
                    assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
                    assert!(row.windows(2).all(|w| w[0] <= w[1]));
                }
            }
        }
    }

    #[test]
    fn missing_run_is_reported() {
        let mut runs = toy_runs();
        runs.remove(7);
        let err = build_table(SuiteId::BbobLite, 2, &runs, &[10], &attainment_all(&[1, 2, 3])).unwrap_err();
        assert!(matches!(err, Error::IncompleteRunSet(_)));
    }

    #[test]
    fn mean_over_reps_commutes_with_checkpoint_selection() {
        let runs = toy_runs();
        let norms = attainment_all(&[1, 2, 3]);
        let wide = build_table(SuiteId::BbobLite, 2, &runs, &[5, 10, 20, 40], &norms).unwrap();
        let narrow = build_table(SuiteId::BbobLite, 2, &runs, &[10, 40], &norms).unwrap();
        for &i in wide.instances() {
            for &o in wide.optimizers() {
                for b in [10, 40] {
                    assert_eq!(wide.mean_perf(i, o, b).unwrap(), narrow.mean_perf(i, o, b).unwrap());
                }
            }
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let runs = toy_runs();
        let table = build_table(SuiteId::RogLite, 3, &runs, &[3, 7, 40], &attainment_all(&[1, 2, 3])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("perf.csv");
        table.write_csv(&path).unwrap();
        let back = PerformanceTable::read_csv(&path).unwrap();
        assert_eq!(back.with_normalizers(table.normalizers().clone()), table);
    }
}
