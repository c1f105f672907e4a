//! Portfolio of seeded black-box optimizers.
//!
//! Every optimizer talks to the objective through [`Evaluator`], which clamps
//! points into the box, records the best-so-far value after each evaluation
//! and refuses evaluations past the cap. Optimizers loop until the evaluator
//! refuses, so each run consumes exactly its budget, and a run capped at `B'`
//! is a prefix of the same run capped at `B > B'`.

mod cma;
mod de;
mod es;
mod nelder_mead;
mod pso;
mod sa;
mod search;
mod store;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{rng, SeedKey};
use crate::suites::{Bounds, InstanceSet, ProblemInstance};

pub use store::{read_trajectories, write_trajectories};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OptimizerId {
    #[serde(rename = "RANDOM_SEARCH")]
    RandomSearch,
    #[serde(rename = "ONE_PLUS_ONE_ES")]
    OnePlusOneEs,
    #[serde(rename = "DE_RAND_1_BIN")]
    DeRand1Bin,
    #[serde(rename = "PSO")]
    Pso,
    #[serde(rename = "NELDER_MEAD_RESTART")]
    NelderMeadRestart,
    #[serde(rename = "SA_GAUSS")]
    SaGauss,
    #[serde(rename = "CMA_DIAG")]
    CmaDiag,
    #[serde(rename = "SOBOL_SEARCH")]
    SobolSearch,
}

impl OptimizerId {
    /// Canonical order, used for tie-breaking everywhere.
    pub const ALL: [OptimizerId; 8] = [
        OptimizerId::RandomSearch,
        OptimizerId::OnePlusOneEs,
        OptimizerId::DeRand1Bin,
        OptimizerId::Pso,
        OptimizerId::NelderMeadRestart,
        OptimizerId::SaGauss,
        OptimizerId::CmaDiag,
        OptimizerId::SobolSearch,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerId::RandomSearch => "RANDOM_SEARCH",
            OptimizerId::OnePlusOneEs => "ONE_PLUS_ONE_ES",
            OptimizerId::DeRand1Bin => "DE_RAND_1_BIN",
            OptimizerId::Pso => "PSO",
            OptimizerId::NelderMeadRestart => "NELDER_MEAD_RESTART",
            OptimizerId::SaGauss => "SA_GAUSS",
            OptimizerId::CmaDiag => "CMA_DIAG",
            OptimizerId::SobolSearch => "SOBOL_SEARCH",
        }
    }
}

impl fmt::Display for OptimizerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OptimizerId::ALL
            .into_iter()
            .find(|o| o.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown optimizer {s:?}")))
    }
}

/// What an optimizer can see of a problem.
pub trait BlackBox: Sync {
    fn dimension(&self) -> usize;
    fn bounds(&self) -> Bounds;
    /// Error when the optimum is known, raw value otherwise.
    fn tracked_value(&self, x: &[f64]) -> f64;
}

impl BlackBox for ProblemInstance {
    fn dimension(&self) -> usize {
        ProblemInstance::dimension(self)
    }

    fn bounds(&self) -> Bounds {
        ProblemInstance::bounds(self)
    }

    fn tracked_value(&self, x: &[f64]) -> f64 {
        ProblemInstance::tracked_value(self, x)
    }
}

/// Counts every objective call made through it.
pub struct Counted<'a, B: ?Sized> {
    inner: &'a B,
    calls: AtomicU64,
}

impl<'a, B: BlackBox + ?Sized> Counted<'a, B> {
    pub fn new(inner: &'a B) -> Self {
        Counted {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<B: BlackBox + ?Sized> BlackBox for Counted<'_, B> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn bounds(&self) -> Bounds {
        self.inner.bounds()
    }

    fn tracked_value(&self, x: &[f64]) -> f64 {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.tracked_value(x)
    }
}

/// Budget-enforcing evaluation port shared by all optimizers.
pub struct Evaluator<'a> {
    f: &'a dyn BlackBox,
    bounds: Bounds,
    cap: usize,
    best: f64,
    trace: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(f: &'a dyn BlackBox, cap: usize) -> Self {
        Evaluator {
            f,
            bounds: f.bounds(),
            cap,
            best: f64::INFINITY,
            trace: Vec::with_capacity(cap),
        }
    }

    pub fn dimension(&self) -> usize {
        self.f.dimension()
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn used(&self) -> usize {
        self.trace.len()
    }

    pub fn exhausted(&self) -> bool {
        self.trace.len() >= self.cap
    }

    /// Clamps `x` into the box in place and evaluates it. `None` once the
    /// budget is spent. NaN values count as +inf.
    pub fn eval(&mut self, x: &mut [f64]) -> Option<f64> {
        if self.exhausted() {
            return None;
        }
        for v in x.iter_mut() {
            *v = self.bounds.clamp(*v);
        }
        let mut v = self.f.tracked_value(x);
        if v.is_nan() {
            v = f64::INFINITY;
        }
        self.best = self.best.min(v);
        self.trace.push(self.best);
        Some(v)
    }

    pub fn into_trace(self) -> Vec<f64> {
        self.trace
    }
}

/// Population size for population-based methods: `4 + 2 floor(3 ln d)`,
/// capped at a tenth of the design budget and floored at 4.
pub fn population_size(dimension: usize, design_budget: usize) -> usize {
    let base = 4 + 2 * (3.0 * (dimension as f64).ln()).floor() as usize;
    base.min(design_budget / 10).max(4)
}

pub(crate) fn uniform_point(rng: &mut ChaCha8Rng, d: usize, b: Bounds) -> Vec<f64> {
    use rand::Rng;
    (0..d).map(|_| rng.random_range(b.lo..=b.hi)).collect()
}

pub(crate) fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    use rand::Rng;
    rng.sample(rand_distr::StandardNormal)
}

/// Runs `optimizer` sized for `design_budget`, stopping after `cap`
/// evaluations. Returns the best-so-far trace (length `cap`).
pub fn run_capped(optimizer: OptimizerId, f: &dyn BlackBox, design_budget: usize, cap: usize, seed: u64) -> Vec<f64> {
    let mut ev = Evaluator::new(f, cap);
    let mut r = rng(seed);
    if cap > 0 {
        match optimizer {
            OptimizerId::RandomSearch => search::random_search(&mut ev, &mut r),
            OptimizerId::SobolSearch => search::sobol_search(&mut ev, &mut r),
            OptimizerId::OnePlusOneEs => es::one_plus_one(&mut ev, &mut r),
            OptimizerId::DeRand1Bin => de::de_rand_1_bin(&mut ev, &mut r, design_budget),
            OptimizerId::Pso => pso::pso_ring(&mut ev, &mut r, design_budget),
            OptimizerId::NelderMeadRestart => nelder_mead::nelder_mead_restart(&mut ev, &mut r),
            OptimizerId::SaGauss => sa::simulated_annealing(&mut ev, &mut r),
            OptimizerId::CmaDiag => cma::sep_cma(&mut ev, &mut r, design_budget),
        }
    }
    assert_eq!(ev.used(), cap, "{optimizer} stopped before exhausting its budget");
    ev.into_trace()
}

/// Best-so-far trace of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub optimizer: OptimizerId,
    /// Instance key within its set.
    pub instance: u32,
    pub repetition: u32,
    pub seed: u64,
    length: usize,
    /// Evaluation counts at which `values` were recorded; `None` means every
    /// count from 1 to `length`.
    budgets: Option<Vec<usize>>,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn new(optimizer: OptimizerId, instance: u32, repetition: u32, seed: u64, best: Vec<f64>) -> Self {
        Trajectory {
            optimizer,
            instance,
            repetition,
            seed,
            length: best.len(),
            budgets: None,
            values: best,
        }
    }

    pub(crate) fn sparse(
        optimizer: OptimizerId,
        instance: u32,
        repetition: u32,
        seed: u64,
        length: usize,
        budgets: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        let full = budgets.len() == length && budgets.iter().enumerate().all(|(i, &b)| b == i + 1);
        Trajectory {
            optimizer,
            instance,
            repetition,
            seed,
            length,
            budgets: (!full).then_some(budgets),
            values,
        }
    }

    /// Number of evaluations the run consumed.
    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    /// Full best-so-far sequence, if stored at full resolution.
    pub fn best_so_far(&self) -> Option<&[f64]> {
        self.budgets.is_none().then_some(&self.values[..])
    }

    pub fn stored_budgets(&self) -> Vec<usize> {
        match &self.budgets {
            Some(b) => b.clone(),
            None => (1..=self.length).collect(),
        }
    }

    pub fn stored_values(&self) -> &[f64] {
        &self.values
    }

    /// Best-so-far value after `budget` evaluations.
    pub fn value_at(&self, budget: usize) -> Result<f64> {
        if budget == 0 || budget > self.length {
            return Err(Error::invalid(format!(
                "budget {budget} outside trajectory of length {}",
                self.length
            )));
        }
        match &self.budgets {
            None => Ok(self.values[budget - 1]),
            Some(b) => b
                .binary_search(&budget)
                .map(|k| self.values[k])
                .map_err(|_| Error::invalid(format!("budget {budget} not stored in downsampled trajectory"))),
        }
    }

    /// Keeps only the values at `budgets`.
    pub fn downsample(&self, budgets: &[usize]) -> Result<Trajectory> {
        let mut budgets = budgets.to_vec();
        budgets.sort_unstable();
        budgets.dedup();
        let values = budgets.iter().map(|&b| self.value_at(b)).collect::<Result<Vec<_>>>()?;
        Ok(Trajectory::sparse(
            self.optimizer,
            self.instance,
            self.repetition,
            self.seed,
            self.length,
            budgets,
            values,
        ))
    }
}

/// Runs `optimizer` on `instance` for exactly `max_budget` evaluations.
pub fn run(optimizer: OptimizerId, instance: &ProblemInstance, max_budget: usize, seed: u64) -> Trajectory {
    let trace = run_capped(optimizer, instance, max_budget, max_budget, seed);
    Trajectory::new(optimizer, instance.key(), 0, seed, trace)
}

pub fn run_seed(master_seed: u64, instance: &ProblemInstance, optimizer: OptimizerId, rep: u32) -> u64 {
    SeedKey::new(master_seed, "run")
        .str(instance.suite().as_str())
        .u64(instance.dimension() as u64)
        .str(optimizer.as_str())
        .u64(u64::from(instance.key()))
        .u64(u64::from(rep))
        .finish()
}

/// One trajectory per (optimizer, instance, repetition), ordered by
/// (optimizer, instance key, repetition).
pub fn run_portfolio(
    portfolio: &[OptimizerId],
    instances: &InstanceSet,
    max_budget: usize,
    n_reps: u32,
    master_seed: u64,
) -> Result<Vec<Trajectory>> {
    if n_reps == 0 {
        return Err(Error::invalid("n_reps must be at least 1"));
    }
    if max_budget == 0 {
        return Err(Error::invalid("max_budget must be at least 1"));
    }
    let mut jobs = Vec::new();
    for &opt in portfolio {
        for inst in &instances.instances {
            for rep in 0..n_reps {
                jobs.push((opt, inst, rep));
            }
        }
    }
    let mut out: Vec<Trajectory> = jobs
        .into_par_iter()
        .map(|(opt, inst, rep)| {
            let seed = run_seed(master_seed, inst, opt, rep);
            let mut t = run(opt, inst, max_budget, seed);
            t.repetition = rep;
            t
        })
        .collect();
    out.sort_by_key(|t| (t.optimizer, t.instance, t.repetition));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suites::{bbob_instance, rog_instance};

    #[test]
    fn population_sizes() {
        assert_eq!(population_size(1, 10_000), 4);
        assert_eq!(population_size(2, 10_000), 8);
        assert_eq!(population_size(5, 10_000), 12);
        assert_eq!(population_size(20, 10_000), 20);
        assert_eq!(population_size(20, 100), 10);
        assert_eq!(population_size(20, 20), 4);
    }

    #[test]
    fn every_optimizer_is_exact_monotone_and_in_bounds() {
        struct Checked<'a>(&'a ProblemInstance);
        impl BlackBox for Checked<'_> {
            fn dimension(&self) -> usize {
                self.0.dimension()
            }
            fn bounds(&self) -> Bounds {
                self.0.bounds()
            }
            fn tracked_value(&self, x: &[f64]) -> f64 {
                self.0.check_domain(x).expect("point in bounds");
                self.0.tracked_value(x)
            }
        }
        let insts = [bbob_instance(3, 1, 3).unwrap(), bbob_instance(5, 2, 2).unwrap(), rog_instance(4, 2).unwrap()];
        for inst in &insts {
            for opt in OptimizerId::ALL {
                for budget in [1, 7, 33, 600] {
                    let checked = Checked(inst);
                    let counted = Counted::new(&checked);
                    let trace = run_capped(opt, &counted, budget, budget, 9);
                    assert_eq!(trace.len(), budget);
                    assert_eq!(counted.calls(), budget as u64, "{opt}");
                    assert!(trace.windows(2).all(|w| w[1] <= w[0]), "{opt}");
                }
            }
        }
    }

    #[test]
    fn capped_runs_are_prefixes() {
        let inst = bbob_instance(10, 1, 3).unwrap();
        for opt in OptimizerId::ALL {
            let full = run_capped(opt, &inst, 900, 900, 4);
            for cap in [1, 10, 123, 899] {
                assert_eq!(run_capped(opt, &inst, 900, cap, 4), full[..cap], "{opt} cap {cap}");
            }
        }
        for opt in [OptimizerId::RandomSearch, OptimizerId::OnePlusOneEs] {
            let full = run(opt, &inst, 500, 3);
            let short = run(opt, &inst, 120, 3);
            assert_eq!(short.best_so_far().unwrap(), &full.best_so_far().unwrap()[..120]);
        }
    }

    #[test]
    fn random_search_is_deterministic() {
        let inst = bbob_instance(2, 1, 4).unwrap();
        assert_eq!(
            run(OptimizerId::RandomSearch, &inst, 300, 17),
            run(OptimizerId::RandomSearch, &inst, 300, 17)
        );
    }

    #[test]
    fn one_plus_one_solves_sphere() {
        let inst = bbob_instance(1, 1, 2).unwrap();
        let solved = (0..20)
            .filter(|&s| *run(OptimizerId::OnePlusOneEs, &inst, 5000, s).best_so_far().unwrap().last().unwrap() < 1e-6)
            .count();
        assert!(solved >= 18, "{solved}");
        assert_eq!(solved, 20);
    }

    #[test]
    fn portfolio_cardinality_and_reproducibility() {
        let set = InstanceSet::bbob(&[1, 3], 5, 2).unwrap();
        let portfolio = &OptimizerId::ALL[..4];
        let a = run_portfolio(portfolio, &set, 60, 5, 1).unwrap();
        assert_eq!(a.len(), 200);
        let b = run_portfolio(portfolio, &set, 60, 5, 1).unwrap();
        assert_eq!(a, b);
        let c = run_portfolio(portfolio, &set, 60, 5, 2).unwrap();
        let differs = a
            .iter()
            .zip(&c)
            .filter(|(x, _)| x.optimizer == OptimizerId::RandomSearch)
            .any(|(x, y)| x.best_so_far() != y.best_so_far());
        assert!(differs);
    }

    #[test]
    fn downsampled_lookup() {
        let t = Trajectory::new(OptimizerId::Pso, 1, 0, 0, vec![5.0, 4.0, 3.0, 2.0, 1.0]);
        let s = t.downsample(&[4, 2]).unwrap();
        assert_eq!(s.value_at(2).unwrap(), 4.0);
        assert_eq!(s.value_at(4).unwrap(), 2.0);
        assert!(s.value_at(3).is_err());
        assert_eq!(s.len(), 5);
        let back = t.downsample(&[1, 2, 3, 4, 5]).unwrap();
        assert_eq!(back, t);
    }
}
