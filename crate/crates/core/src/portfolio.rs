//! Size-k sub-portfolios chosen for complementarity: Shapley values of
//! `VBS - SBS` guide a weighted random subset search.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::OptimizerId;
use crate::perfdb::PerformanceTable;
use crate::seed::{rng, SeedKey};
use crate::suites::SuiteId;

pub const DEFAULT_PERMUTATIONS: usize = 200;
pub const DEFAULT_ITERATIONS: usize = 500;
pub const DEFAULT_SIZE: usize = 4;
const MAX_MEMBERS: usize = 16;

/// Cooperative game `v(S) = mean VBS(S) - max mean(S)` over a fixed set of
/// instances at one budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Complementarity {
    members: Vec<OptimizerId>,
    /// `perf[a][i]`: mean performance of member `a` on instance `i`.
    perf: Vec<Vec<f64>>,
}

impl Complementarity {
    pub fn from_table(table: &PerformanceTable, instances: &[u32], members: &[OptimizerId], budget: usize) -> Result<Self> {
        let mut members = members.to_vec();
        members.sort_unstable();
        members.dedup();
        let perf = members
            .iter()
            .map(|&a| instances.iter().map(|&i| table.mean_perf(i, a, budget)).collect())
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Self::from_matrix(members, perf)
    }

    /// `members` must be in canonical order, one row of `perf` per member.
    pub fn from_matrix(members: Vec<OptimizerId>, perf: Vec<Vec<f64>>) -> Result<Self> {
        if members.is_empty() || members.len() > MAX_MEMBERS {
            return Err(Error::invalid(format!("portfolio of {} members unsupported", members.len())));
        }
        if perf.len() != members.len() || perf[0].is_empty() || perf.iter().any(|r| r.len() != perf[0].len()) {
            return Err(Error::invalid("performance matrix shape mismatch"));
        }
        if members.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("members must be distinct and in canonical order"));
        }
        Ok(Complementarity { members, perf })
    }

    pub fn members(&self) -> &[OptimizerId] {
        &self.members
    }

    /// Value of the subset encoded as a bitmask over `members`; 0 for the empty set.
    pub fn value_mask(&self, mask: u32) -> f64 {
        if mask == 0 {
            return 0.0;
        }
        let chosen: Vec<&Vec<f64>> = (0..self.members.len())
            .filter(|a| mask >> a & 1 == 1)
            .map(|a| &self.perf[a])
            .collect();
        let n = self.perf[0].len() as f64;
        let vbs = (0..self.perf[0].len())
            .map(|i| chosen.iter().map(|r| r[i]).fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / n;
        let sbs = chosen
            .iter()
            .map(|r| r.iter().sum::<f64>() / n)
            .fold(f64::NEG_INFINITY, f64::max);
        vbs - sbs
    }

    pub fn mask(&self, subset: &[OptimizerId]) -> Result<u32> {
        let mut m = 0;
        for a in subset {
            let k = self
                .members
                .binary_search(a)
                .map_err(|_| Error::invalid(format!("{a} is not a portfolio member")))?;
            m |= 1 << k;
        }
        Ok(m)
    }

    pub fn value(&self, subset: &[OptimizerId]) -> Result<f64> {
        if subset.is_empty() {
            return Err(Error::EmptyInput("portfolio subset"));
        }
        Ok(self.value_mask(self.mask(subset)?))
    }

    fn marginals(&self, order: &[usize], acc: &mut [f64]) {
        let mut mask = 0u32;
        let mut prev = 0.0;
        for &a in order {
            mask |= 1 << a;
            let v = self.value_mask(mask);
            acc[a] += v - prev;
            prev = v;
        }
    }

    fn average(&self, orders: impl IndexedParallelIterator<Item = Vec<usize>>, count: usize) -> Vec<f64> {
        let n = self.members.len();
        let partial: Vec<Vec<f64>> = orders
            .map(|order| {
                let mut acc = vec![0.0; n];
                self.marginals(&order, &mut acc);
                acc
            })
            .collect();
        let mut sum = vec![0.0; n];
        for p in partial {
            for (s, v) in sum.iter_mut().zip(p) {
                *s += v;
            }
        }
        sum.iter().map(|s| s / count as f64).collect()
    }

    /// Monte Carlo Shapley values from `n_permutations` seeded random orders.
    pub fn shapley_estimate(&self, n_permutations: usize, seed: u64) -> Result<Vec<f64>> {
        if n_permutations == 0 {
            return Err(Error::invalid("n_permutations must be at least 1"));
        }
        let n = self.members.len();
        let orders = (0..n_permutations).into_par_iter().map(|t| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng(SeedKey::new(seed, "shapley").u64(t as u64).finish()));
            order
        });
        Ok(self.average(orders, n_permutations))
    }

    /// The same estimator averaged over every permutation once.
    pub fn shapley_all_permutations(&self) -> Result<Vec<f64>> {
        let n = self.members.len();
        if n > 9 {
            return Err(Error::invalid("too many members to enumerate permutations"));
        }
        let mut all = Vec::new();
        permutations(&mut (0..n).collect::<Vec<_>>(), 0, &mut all);
        let count = all.len();
        Ok(self.average(all.into_par_iter(), count))
    }
}

fn permutations(v: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == v.len() {
        out.push(v.clone());
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, out);
        v.swap(k, i);
    }
}

/// Draws `size` distinct indices, each with probability proportional to its
/// weight among those not yet drawn (uniform once the remaining weight is 0).
fn weighted_draw<R: Rng>(weights: &[f64], size: usize, rng: &mut R) -> Vec<usize> {
    let mut left: Vec<usize> = (0..weights.len()).collect();
    let mut out = Vec::with_capacity(size);
    while out.len() < size {
        let total: f64 = left.iter().map(|&i| weights[i]).sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut k = left.len() - 1;
            for (j, &i) in left.iter().enumerate() {
                if weights[i] > 0.0 && u < weights[i] {
                    k = j;
                    break;
                }
                u -= weights[i];
            }
            while weights[left[k]] <= 0.0 {
                k -= 1;
            }
            k
        } else {
            rng.random_range(0..left.len())
        };
        out.push(left.remove(pick));
    }
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub members: Vec<OptimizerId>,
    pub complementarity: f64,
}

/// Weighted random subset search. Negative Shapley values are clipped to 0;
/// the best subset seen wins, ties going to the lexicographically smallest.
pub fn select_portfolio(
    target: &Complementarity,
    shapley: &[f64],
    size: usize,
    iterations: usize,
    seed: u64,
) -> Result<Selection> {
    let n = target.members.len();
    if size == 0 || size > n {
        return Err(Error::invalid(format!("cannot pick {size} of {n} members")));
    }
    if iterations == 0 {
        return Err(Error::invalid("iterations must be at least 1"));
    }
    if shapley.len() != n {
        return Err(Error::invalid("one Shapley value per member required"));
    }
    let weights: Vec<f64> = shapley.iter().map(|v| if v.is_finite() { v.max(0.0) } else { 0.0 }).collect();
    let candidates: Vec<(Vec<usize>, f64)> = (0..iterations)
        .into_par_iter()
        .map(|t| {
            let mut r = rng(SeedKey::new(seed, "subset").u64(t as u64).finish());
            let idx = weighted_draw(&weights, size, &mut r);
            let v = target.value_mask(idx.iter().fold(0, |m, &i| m | 1 << i));
            (idx, v)
        })
        .collect();
    let (idx, v) = candidates
        .into_iter()
        .reduce(|a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a })
        .expect("iterations >= 1");
    Ok(Selection {
        members: idx.iter().map(|&i| target.members[i]).collect(),
        complementarity: v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchScheme {
    pub estimator: String,
    pub n_permutations: usize,
    pub iterations: usize,
    pub proposal: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioManifest {
    pub suite: SuiteId,
    pub d: usize,
    #[serde(rename = "B_factor")]
    pub b_factor: usize,
    pub members: Vec<OptimizerId>,
    pub complementarity: f64,
    pub shapley_values: BTreeMap<OptimizerId, f64>,
    pub scheme: SearchScheme,
}

/// Shapley estimation followed by subset search over every instance of
/// `table` at `b_factor * d`.
pub fn build_portfolio(
    table: &PerformanceTable,
    b_factor: usize,
    size: usize,
    n_permutations: usize,
    iterations: usize,
    seed: u64,
) -> Result<PortfolioManifest> {
    let budget = b_factor * table.dimension;
    let target = Complementarity::from_table(table, table.instances(), table.optimizers(), budget)?;
    let shapley = target.shapley_estimate(n_permutations, seed)?;
    let sel = select_portfolio(&target, &shapley, size, iterations, seed)?;
    Ok(PortfolioManifest {
        suite: table.suite,
        d: table.dimension,
        b_factor,
        members: sel.members,
        complementarity: sel.complementarity,
        shapley_values: target.members.iter().copied().zip(shapley).collect(),
        scheme: SearchScheme {
            estimator: "permutation prefixes".into(),
            n_permutations,
            iterations,
            proposal: "independent draws without replacement, weights = Shapley clipped at 0, uniform when all weights are 0".into(),
            seed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::OptimizerId::*;

    fn game(rows: Vec<Vec<f64>>) -> Complementarity {
        let members = OptimizerId::ALL[..rows.len()].to_vec();
        Complementarity::from_matrix(members, rows).unwrap()
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Shapley values straight from the subset formula.
    fn brute_shapley(g: &Complementarity) -> Vec<f64> {
        let n = g.members().len();
        (0..n)
            .map(|a| {
                (0..1u32 << n)
                    .filter(|s| s >> a & 1 == 0)
                    .map(|s| {
                        let k = s.count_ones() as usize;
                        let w = factorial(k) * factorial(n - k - 1) / factorial(n);
                        w * (g.value_mask(s | 1 << a) - g.value_mask(s))
                    })
                    .sum()
            })
            .collect()
    }

    fn toy4() -> Complementarity {
        game(vec![
            vec![0.9, 0.1, 0.4, 0.3, 0.8],
            vec![0.2, 0.8, 0.5, 0.1, 0.6],
            vec![0.3, 0.2, 0.9, 0.7, 0.1],
            vec![0.6, 0.6, 0.6, 0.6, 0.6],
        ])
    }

    #[test]
    fn complementarity_examples() {
        let g = game(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(g.value(&[RandomSearch]).unwrap(), 0.0);
        assert_eq!(g.value(&[RandomSearch, OnePlusOneEs]).unwrap(), 0.5);
        let same = game(vec![vec![0.3, 0.7], vec![0.3, 0.7]]);
        assert_eq!(same.value(&[RandomSearch, OnePlusOneEs]).unwrap(), 0.0);
        assert!(g.value(&[]).is_err());
        assert!(g.value(&[Pso]).is_err());
    }

    #[test]
    fn all_permutations_match_subset_formula() {
        let g = toy4();
        let oracle = brute_shapley(&g);
        let est = g.shapley_all_permutations().unwrap();
        for (a, b) in est.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        let total: f64 = oracle.iter().sum();
        assert!((total - g.value_mask(0b1111)).abs() < 1e-12);
    }

    #[test]
    fn efficiency_up_to_six_members() {
        let mut r = rng(9);
        for n in 1..=6 {
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..7).map(|_| r.random()).collect()).collect();
            let g = game(rows);
            let total: f64 = brute_shapley(&g).iter().sum();
            assert!((total - g.value_mask((1 << n) - 1)).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_rows_get_similar_estimates() {
        let row = vec![0.9, 0.1, 0.5, 0.2];
        let g = game(vec![row.clone(), row, vec![0.1, 0.9, 0.4, 0.8]]);
        let est = g.shapley_estimate(2000, 4).unwrap();
        // Marginals are bounded by 1 in absolute value, so 4/sqrt(2000) is a
        // generous confidence bound for the difference of two means.
        assert!((est[0] - est[1]).abs() < 4.0 / 2000f64.sqrt(), "{est:?}");
        assert_eq!(est, g.shapley_estimate(2000, 4).unwrap());
    }

    #[test]
    fn vbs_is_monotone_in_subsets() {
        let g = toy4();
        let vbs = |m: u32| g.value_mask(m) + (0..4).filter(|a| m >> a & 1 == 1).map(|a| g.perf[a].iter().sum::<f64>() / 5.0).fold(f64::NEG_INFINITY, f64::max);
        for s in 1..16u32 {
            for t in 1..16u32 {
                if s & t == s {
                    assert!(vbs(s) <= vbs(t) + 1e-15);
                }
            }
        }
    }

    #[test]
    fn selection_matches_exhaustive_search() {
        let mut r = rng(21);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..12).map(|_| r.random()).collect()).collect();
        let g = game(rows);
        let mut best: Option<(f64, u32)> = None;
        for m in 0..32u32 {
            if m.count_ones() == 4 && best.is_none_or(|(v, _)| g.value_mask(m) > v) {
                best = Some((g.value_mask(m), m));
            }
        }
        let phi = g.shapley_estimate(200, 1).unwrap();
        let sel = select_portfolio(&g, &phi, 4, 500, 1).unwrap();
        assert_eq!(g.mask(&sel.members).unwrap(), best.unwrap().1);
        assert_eq!(sel, select_portfolio(&g, &phi, 4, 500, 1).unwrap());
    }

    #[test]
    fn selection_beats_greedy_floor() {
        let mut r = rng(2);
        for _ in 0..5 {
            let rows: Vec<Vec<f64>> = (0..8).map(|_| (0..10).map(|_| r.random()).collect()).collect();
            let g = game(rows);
            let mut mask = 0u32;
            for _ in 0..4 {
                let a = (0..8)
                    .filter(|a| mask >> a & 1 == 0)
                    .max_by(|&a, &b| g.value_mask(mask | 1 << a).total_cmp(&g.value_mask(mask | 1 << b)))
                    .unwrap();
                mask |= 1 << a;
            }
            let phi = g.shapley_estimate(200, 3).unwrap();
            let sel = select_portfolio(&g, &phi, 4, 500, 3).unwrap();
            assert!(sel.complementarity >= g.value_mask(mask) - 1e-15);
        }
    }

    #[test]
    fn full_size_and_degenerate_weights() {
        let g = toy4();
        let sel = select_portfolio(&g, &[0.0; 4], 4, 3, 0).unwrap();
        assert_eq!(sel.members, g.members());
        let sel = select_portfolio(&g, &[-1.0; 4], 2, 50, 0).unwrap();
        assert_eq!(sel.members.len(), 2);
        assert!(select_portfolio(&g, &[0.0; 4], 5, 3, 0).is_err());
        assert!(select_portfolio(&g, &[0.0; 4], 2, 0, 0).is_err());
    }

    #[test]
    fn zero_weight_members_are_never_drawn() {
        let mut r = rng(0);
        for _ in 0..200 {
            let d = weighted_draw(&[0.0, 1.0, 0.0, 2.0, 1.0], 3, &mut r);
            assert_eq!(d, vec![1, 3, 4]);
        }
    }

    #[test]
    fn manifest_round_trip() {
        let cells = (0..3u32).flat_map(|i| {
            OptimizerId::ALL.into_iter().enumerate().map(move |(k, a)| (i, a, 0, 20, ((i as usize * 3 + k) % 5) as f64 / 4.0))
        });
        let t = PerformanceTable::from_cells(SuiteId::BbobLite, 2, cells).unwrap();
        let m = build_portfolio(&t, 10, 4, 50, 100, 7).unwrap();
        assert_eq!(m.members.len(), 4);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<PortfolioManifest>(&json).unwrap(), m);
    }
}
