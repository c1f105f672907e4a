//! Grid configuration, read from JSON.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::optimizers::OptimizerId;
use crate::selector::ForestConfig;
use crate::suites::SuiteId;

/// A sub-portfolio size or the whole configured portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PortfolioSize {
    Members(usize),
    Full,
}

impl PortfolioSize {
    pub fn label(self) -> String {
        match self {
            PortfolioSize::Members(k) => k.to_string(),
            PortfolioSize::Full => "full".into(),
        }
    }
}

impl Serialize for PortfolioSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PortfolioSize::Members(k) => s.serialize_u64(*k as u64),
            PortfolioSize::Full => s.serialize_str("full"),
        }
    }
}

impl<'de> Deserialize<'de> for PortfolioSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = PortfolioSize;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive integer or \"full\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<PortfolioSize, E> {
                if v == 0 {
                    return Err(E::custom("portfolio size must be positive"));
                }
                Ok(PortfolioSize::Members(v as usize))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<PortfolioSize, E> {
                match v {
                    "full" => Ok(PortfolioSize::Full),
                    _ => Err(E::custom(format!("unknown portfolio size {v:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceCounts {
    pub bbob_functions: Vec<u32>,
    pub bbob_instances: u32,
    pub mabbob: u32,
    pub rog: u32,
}

impl Default for InstanceCounts {
    fn default() -> Self {
        InstanceCounts {
            bbob_functions: (1..=12).collect(),
            bbob_instances: 5,
            mabbob: 50,
            rog: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortfolioSearch {
    pub n_permutations: usize,
    pub iterations: usize,
}

impl Default for PortfolioSearch {
    fn default() -> Self {
        PortfolioSearch {
            n_permutations: crate::portfolio::DEFAULT_PERMUTATIONS,
            iterations: crate::portfolio::DEFAULT_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub suites: Vec<SuiteId>,
    pub dimensions: Vec<usize>,
    pub budget_factors: Vec<usize>,
    pub ela_budget_factors: Vec<usize>,
    pub portfolio_sizes: Vec<PortfolioSize>,
    pub optimizers: Vec<OptimizerId>,
    pub n_reps: u32,
    pub max_budget_factor: usize,
    pub instances: InstanceCounts,
    /// Instance keys left out of selection, per suite name.
    pub exclusions: std::collections::BTreeMap<SuiteId, Vec<u32>>,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub jobs: Option<usize>,
    pub folds: usize,
    pub portfolio_search: PortfolioSearch,
    pub forest: ForestConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            suites: SuiteId::ALL.to_vec(),
            dimensions: vec![2, 5],
            budget_factors: vec![10, 15, 25, 50, 100, 250, 500],
            ela_budget_factors: vec![5, 10, 25, 50, 100, 250],
            portfolio_sizes: vec![PortfolioSize::Members(4), PortfolioSize::Full],
            optimizers: OptimizerId::ALL.to_vec(),
            n_reps: 5,
            max_budget_factor: 500,
            instances: InstanceCounts::default(),
            exclusions: Default::default(),
            master_seed: 0,
            output_dir: PathBuf::from("pias-out"),
            jobs: None,
            folds: crate::selector::DEFAULT_FOLDS,
            portfolio_search: PortfolioSearch::default(),
            forest: ForestConfig::default(),
        }
    }
}

fn sorted_unique<T: Ord + Copy>(v: &[T]) -> Vec<T> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

impl GridConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: GridConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.suites.is_empty() || self.dimensions.is_empty() {
            return bad("suites and dimensions must be non-empty");
        }
        if self.dimensions.contains(&0) {
            return bad("dimensions must be positive");
        }
        if self.optimizers.is_empty() {
            return bad("optimizers must be non-empty");
        }
        if self.n_reps == 0 || self.folds < 2 {
            return bad("n_reps must be positive and folds at least 2");
        }
        if self.budget_factors().is_empty() {
            return bad("no budget factor is within max_budget_factor");
        }
        if self.ela_budget_factors.contains(&0) {
            return bad("ELA budget factors must be positive");
        }
        if self.scenario_pairs().is_empty() {
            return bad("no (B, B_ELA) pair satisfies B_ELA < B");
        }
        let n = sorted_unique(&self.optimizers).len();
        for s in &self.portfolio_sizes {
            if let PortfolioSize::Members(k) = s {
                if *k > n {
                    return bad(&format!("portfolio size {k} exceeds the {n} configured optimizers"));
                }
            }
        }
        if self.suites.contains(&SuiteId::BbobLite) {
            if self.instances.bbob_functions.iter().any(|f| !(1..=12).contains(f)) {
                return bad("BBOB function ids must lie in 1..=12");
            }
            if self.instances.bbob_instances == 0 || self.instances.bbob_functions.is_empty() {
                return bad("BBOB suite needs at least one function and instance");
            }
        }
        if self.forest.n_trees == 0 {
            return bad("forest.n_trees must be positive");
        }
        if self.portfolio_search.n_permutations == 0 || self.portfolio_search.iterations == 0 {
            return bad("portfolio search needs at least one permutation and iteration");
        }
        Ok(())
    }

    pub fn optimizers(&self) -> Vec<OptimizerId> {
        sorted_unique(&self.optimizers)
    }

    /// Budget factors that fit under the maximum, ascending.
    pub fn budget_factors(&self) -> Vec<usize> {
        sorted_unique(&self.budget_factors)
            .into_iter()
            .filter(|&b| b >= 1 && b <= self.max_budget_factor)
            .collect()
    }

    pub fn ela_factors(&self) -> Vec<usize> {
        sorted_unique(&self.ela_budget_factors)
    }

    /// `(B factor, B_ELA factor)` pairs with `B_ELA < B`.
    pub fn scenario_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for b in self.budget_factors() {
            for e in self.ela_factors() {
                if e < b {
                    out.push((b, e));
                }
            }
        }
        out
    }

    /// ELA factors used by at least one scenario.
    pub fn used_ela_factors(&self) -> Vec<usize> {
        sorted_unique(&self.scenario_pairs().iter().map(|p| p.1).collect::<Vec<_>>())
    }

    pub fn portfolio_sizes(&self) -> Vec<PortfolioSize> {
        sorted_unique(&self.portfolio_sizes)
    }

    /// Sub-portfolio sizes that need a search (smaller than the full set).
    pub fn searched_sizes(&self) -> Vec<usize> {
        let n = self.optimizers().len();
        self.portfolio_sizes()
            .into_iter()
            .filter_map(|s| match s {
                PortfolioSize::Members(k) if k < n => Some(k),
                _ => None,
            })
            .collect()
    }

    /// Number of scenarios `cmd_select` evaluates.
    pub fn scenario_count(&self) -> usize {
        sorted_unique(&self.suites).len()
            * sorted_unique(&self.dimensions).len()
            * self.portfolio_sizes().len()
            * self.scenario_pairs().len()
    }

    /// Every evaluation checkpoint, times `d`: budgets, their `B_opt`
    /// remainders, `5d` and the maximum.
    pub fn checkpoints(&self, dimension: usize) -> Vec<usize> {
        let mut c = vec![5 * dimension, self.max_budget_factor * dimension];
        for (b, e) in self.scenario_pairs() {
            c.push(b * dimension);
            c.push((b - e) * dimension);
        }
        c.extend(self.budget_factors().iter().map(|b| b * dimension));
        c.retain(|&v| v >= 1 && v <= self.max_budget_factor * dimension);
        sorted_unique(&c)
    }

    pub fn exclusions(&self, suite: SuiteId) -> &[u32] {
        self.exclusions.get(&suite).map(Vec::as_slice).unwrap_or(&[])
    }
}
