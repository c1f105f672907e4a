//! Landscape features computed from one static sample.
//!
//! Objective values are min-max normalized before any feature is computed, so
//! the catalogue is invariant to positive affine rescaling of the objective.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::perfdb::Normalizer;

pub const MIN_SAMPLE: usize = 10;

pub const FEATURE_NAMES: [&str; 14] = [
    "distr.skewness",
    "distr.kurtosis",
    "meta.lin.R2",
    "meta.lin.coef_ratio",
    "meta.quad.R2",
    "meta.quad.cond",
    "ic.h_max",
    "ic.eps_s",
    "ic.m0",
    "nbc.nn_nb_mean_ratio",
    "nbc.nn_nb_sd_ratio",
    "nbc.nb_fitness_cor",
    "disp.ratio_mean_10",
    "fdc",
];

const RIDGE: f64 = 1e-10;
const COEF_FLOOR: f64 = 1e-12;
const IC_ENTROPY_THRESHOLD: f64 = 0.05;

/// Sampled points, their raw objective values and the normalized values.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    y_norm: Vec<f64>,
}

impl Sample {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::EmptyInput("sample"));
        }
        if x.len() != y.len() {
            return Err(Error::invalid("sample points and values differ in length"));
        }
        let d = x[0].len();
        if d == 0 || x.iter().any(|p| p.len() != d) {
            return Err(Error::invalid("sample points must share a positive dimension"));
        }
        let y_norm = min_max(&y);
        Ok(Sample { x, y, y_norm })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.x[0].len()
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn y_norm(&self) -> &[f64] {
        &self.y_norm
    }

    pub fn best_value(&self) -> f64 {
        self.y.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn min_max(y: &[f64]) -> Vec<f64> {
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        y.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.5; y.len()]
    }
}

/// Where a feature vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub instance: u32,
    pub b_ela: usize,
    pub repetition: u32,
}

/// Named feature values in catalogue order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub entries: Vec<(String, f64)>,
    pub provenance: Option<Provenance>,
}

impl FeatureVector {
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Self {
        FeatureVector {
            entries: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            provenance: None,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    /// Values of `names`, in that order.
    pub fn select(&self, names: &[String]) -> Result<Vec<f64>> {
        names
            .iter()
            .map(|n| self.get(n).ok_or_else(|| Error::MissingFeature(n.clone())))
            .collect()
    }
}

/// Computes the full catalogue on the normalized values of `sample`.
pub fn compute_features(sample: &Sample) -> Result<FeatureVector> {
    let n = sample.len();
    if n < MIN_SAMPLE {
        return Err(Error::InsufficientSample {
            got: n,
            need: MIN_SAMPLE,
        });
    }
    let x = &sample.x;
    let y = &sample.y_norm;
    let dist = DistanceMatrix::new(x);

    let (skew, kurt) = distribution(y);
    let lin = regression(x, y, false);
    let quad = regression(x, y, true);
    let ic = information_content(&dist, y);
    let nbc = nearest_better(&dist, y);
    let disp = dispersion(&dist, y);
    let fdc = fitness_distance_correlation(&dist, y);

    let values = [
        skew,
        kurt,
        lin.adj_r2,
        coefficient_ratio(&lin.coefs[1..=sample.dimension()]),
        quad.adj_r2,
        if quad.coefs.is_empty() {
            f64::NAN
        } else {
            coefficient_ratio(&quad.coefs[1 + sample.dimension()..])
        },
        ic.h_max,
        ic.eps_s,
        ic.m0,
        nbc.mean_ratio,
        nbc.sd_ratio,
        nbc.fitness_cor,
        disp,
        fdc,
    ];
    Ok(FeatureVector::from_pairs(FEATURE_NAMES.iter().copied().zip(values)))
}

/// Performance of the best sampled point under `normalizer`.
pub fn ela_best(sample: &Sample, normalizer: &Normalizer) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptyInput("sample"));
    }
    normalizer.score(normalizer.tracked(sample.best_value()))
}

/// Names retained after dropping features that are non-finite anywhere or
/// flat (range < 1e-12) across all vectors. Order follows the first vector.
pub fn filter_features(vectors: &[FeatureVector]) -> Result<Vec<String>> {
    let first = vectors.first().ok_or(Error::EmptyInput("feature vectors"))?;
    let names: Vec<&str> = first.names().collect();
    for v in vectors {
        if v.entries.len() != names.len() || v.names().zip(&names).any(|(a, b)| a != *b) {
            return Err(Error::invalid("feature vectors have different key sets"));
        }
    }
    Ok(names
        .iter()
        .enumerate()
        .filter(|(j, _)| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for v in vectors {
                let val = v.entries[*j].1;
                if !val.is_finite() {
                    return false;
                }
                lo = lo.min(val);
                hi = hi.max(val);
            }
            hi - lo >= 1e-12
        })
        .map(|(_, n)| n.to_string())
        .collect())
}

struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    fn new(x: &[Vec<f64>]) -> Self {
        let n = x.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = x[i]
                    .iter()
                    .zip(&x[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        DistanceMatrix { n, d }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    fn mean_pairwise(&self, idx: &[usize]) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                sum += self.get(i, j);
                count += 1;
            }
        }
        sum / count as f64
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Bias-corrected sample skewness and excess kurtosis.
fn distribution(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let m = mean(y);
    let m2 = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = y.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    let m4 = y.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    if m2 == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let g1 = m3 / m2.powf(1.5);
    let g2 = m4 / (m2 * m2) - 3.0;
    let skew = g1 * (n * (n - 1.0)).sqrt() / (n - 2.0);
    let kurt = ((n + 1.0) * g2 + 6.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0));
    (skew, kurt)
}

struct Fit {
    adj_r2: f64,
    /// Intercept, linear terms, then squared terms when present. Empty when
    /// the sample is too small for the model.
    coefs: Vec<f64>,
}

fn regression(x: &[Vec<f64>], y: &[f64], quadratic: bool) -> Fit {
    let n = x.len();
    let d = x[0].len();
    let p = if quadratic { 2 * d } else { d };
    let nan = Fit {
        adj_r2: f64::NAN,
        coefs: if quadratic { Vec::new() } else { vec![f64::NAN; d + 1] },
    };
    if n <= p + 1 {
        return nan;
    }
    let design = DMatrix::from_fn(n, p + 1, |i, j| match j {
        0 => 1.0,
        j if j <= d => x[i][j - 1],
        j => x[i][j - 1 - d].powi(2),
    });
    let target = DVector::from_column_slice(y);
    let mut gram = design.transpose() * &design;
    for k in 0..=p {
        gram[(k, k)] += RIDGE;
    }
    let rhs = design.transpose() * &target;
    let beta = match gram.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => match gram.lu().solve(&rhs) {
            Some(b) => b,
            None => return nan,
        },
    };
    let fitted = &design * &beta;
    let m = mean(y);
    let sse: f64 = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    let sst: f64 = y.iter().map(|a| (a - m).powi(2)).sum();
    let adj_r2 = if sst > 0.0 {
        1.0 - (sse / (n - p - 1) as f64) / (sst / (n - 1) as f64)
    } else {
        f64::NAN
    };
    Fit {
        adj_r2,
        coefs: beta.iter().copied().collect(),
    }
}

fn coefficient_ratio(coefs: &[f64]) -> f64 {
    let abs: Vec<f64> = coefs.iter().map(|c| c.abs()).collect();
    let lo = abs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = abs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo >= COEF_FLOOR) {
        return f64::NAN;
    }
    hi / lo
}

struct InformationContent {
    h_max: f64,
    eps_s: f64,
    m0: f64,
}

/// Thresholds `{0} ∪ {10^k : k = -5, -4.5, ..., 15}`.
pub fn ic_epsilon_grid() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((-10..=30).map(|k| 10f64.powf(k as f64 / 2.0)))
        .collect()
}

/// Greedy nearest-neighbour tour from point 0; ties go to the lower index.
fn nearest_neighbour_tour(dist: &DistanceMatrix) -> Vec<usize> {
    let n = dist.n;
    let mut visited = vec![false; n];
    let mut tour = Vec::with_capacity(n);
    let mut cur = 0;
    visited[0] = true;
    tour.push(0);
    for _ in 1..n {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (j, &seen) in visited.iter().enumerate() {
            if !seen && dist.get(cur, j) < best_d {
                best_d = dist.get(cur, j);
                best = j;
            }
        }
        visited[best] = true;
        tour.push(best);
        cur = best;
    }
    tour
}

fn symbols(slopes: &[f64], eps: f64) -> Vec<i8> {
    slopes
        .iter()
        .map(|&s| {
            if s < -eps {
                -1
            } else if s > eps {
                1
            } else {
                0
            }
        })
        .collect()
}

fn entropy(sym: &[i8]) -> f64 {
    if sym.len() < 2 {
        return f64::NAN;
    }
    let mut counts = [[0usize; 3]; 3];
    for w in sym.windows(2) {
        counts[(w[0] + 1) as usize][(w[1] + 1) as usize] += 1;
    }
    let total = (sym.len() - 1) as f64;
    let mut h = 0.0;
    for (p, row) in counts.iter().enumerate() {
        for (q, &c) in row.iter().enumerate() {
            if p != q && c > 0 {
                let prob = c as f64 / total;
                h -= prob * prob.log(6.0);
            }
        }
    }
    h
}

fn partial_information(sym: &[i8]) -> f64 {
    let mut mode: Vec<i8> = Vec::new();
    for &s in sym.iter().filter(|&&s| s != 0) {
        if mode.last() != Some(&s) {
            mode.push(s);
        }
    }
    mode.len() as f64 / sym.len() as f64
}

fn information_content(dist: &DistanceMatrix, y: &[f64]) -> InformationContent {
    let tour = nearest_neighbour_tour(dist);
    let slopes: Vec<f64> = tour
        .windows(2)
        .map(|w| {
            let dx = dist.get(w[0], w[1]);
            if dx > 0.0 {
                (y[w[1]] - y[w[0]]) / dx
            } else {
                0.0
            }
        })
        .collect();
    let grid = ic_epsilon_grid();
    let entropies: Vec<f64> = grid.iter().map(|&e| entropy(&symbols(&slopes, e))).collect();
    let h_max = entropies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let eps_s = grid
        .iter()
        .zip(&entropies)
        .find(|(_, &h)| h < IC_ENTROPY_THRESHOLD)
        .map_or(f64::NAN, |(&e, _)| e);
    let m0 = partial_information(&symbols(&slopes, 0.0));
    InformationContent { h_max, eps_s, m0 }
}

struct NearestBetter {
    mean_ratio: f64,
    sd_ratio: f64,
    fitness_cor: f64,
}

fn nearest_better(dist: &DistanceMatrix, y: &[f64]) -> NearestBetter {
    let n = y.len();
    let mut nn = vec![f64::INFINITY; n];
    let mut nb = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dij = dist.get(i, j);
            nn[i] = nn[i].min(dij);
            if y[j] < y[i] {
                nb[i] = nb[i].min(dij);
            }
        }
    }
    for i in 0..n {
        if nb[i].is_infinite() {
            nb[i] = nn[i];
        }
    }
    let ratio: Vec<f64> = nb.iter().zip(&nn).map(|(b, a)| b / a).collect();
    NearestBetter {
        mean_ratio: mean(&nn) / mean(&nb),
        sd_ratio: sample_sd(&nn) / sample_sd(&nb),
        fitness_cor: pearson(&ratio, y),
    }
}

fn dispersion(dist: &DistanceMatrix, y: &[f64]) -> f64 {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let k = ((0.1 * n as f64).ceil() as usize).max(2);
    let all: Vec<usize> = (0..n).collect();
    dist.mean_pairwise(&order[..k]) / dist.mean_pairwise(&all)
}

fn fitness_distance_correlation(dist: &DistanceMatrix, y: &[f64]) -> f64 {
    let best = (0..y.len())
        .min_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)))
        .expect("non-empty sample");
    let d: Vec<f64> = (0..y.len()).map(|i| dist.get(best, i)).collect();
    pearson(y, &d)
}

/// One row of a persisted feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub instance: u32,
    pub repetition: u32,
    pub b_ela: usize,
    /// Best raw objective value among the sampled points.
    pub sample_best: f64,
    pub features: FeatureVector,
}

fn fmt_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.16e}")
    }
}

fn parse_cell(s: &str) -> Result<f64> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse::<f64>()
        .map_err(|e| Error::invalid(format!("bad number {s:?}: {e}")))
}

/// Writes rows as CSV: `instance_id,rep,B_ELA,sample_best,<features...>`.
/// NaN is written as an empty cell.
pub fn write_feature_csv(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let names: Vec<&str> = match rows.first() {
        Some(r) => r.features.names().collect(),
        None => FEATURE_NAMES.to_vec(),
    };
    let mut header = vec!["instance_id", "rep", "B_ELA", "sample_best"];
    header.extend(&names);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for r in rows {
        let mut cells = vec![
            r.instance.to_string(),
            r.repetition.to_string(),
            r.b_ela.to_string(),
            fmt_cell(r.sample_best),
        ];
        cells.extend(r.features.entries.iter().map(|(_, v)| fmt_cell(*v)));
        writeln!(w, "{}", cells.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_feature_csv(path: &Path) -> Result<Vec<FeatureRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or(Error::EmptyInput("feature csv"))?
        .map_err(|e| Error::io(path, e))?;
    let cols: Vec<String> = header.split(',').map(str::to_string).collect();
    if cols.len() < 4 || cols[..4] != ["instance_id", "rep", "B_ELA", "sample_best"] {
        return Err(Error::invalid(format!("{}: unexpected header", path.display())));
    }
    let names = &cols[4..];
    let mut rows = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols.len() {
            return Err(Error::invalid(format!("{}: ragged row", path.display())));
        }
        let int = |s: &str| {
            s.parse::<u64>()
                .map_err(|e| Error::invalid(format!("bad integer {s:?}: {e}")))
        };
        let values = cells[4..].iter().map(|c| parse_cell(c)).collect::<Result<Vec<_>>>()?;
        let instance = int(cells[0])? as u32;
        let repetition = int(cells[1])? as u32;
        let b_ela = int(cells[2])? as usize;
        let mut features = FeatureVector::from_pairs(names.iter().cloned().zip(values));
        features.provenance = Some(Provenance {
            instance,
            b_ela,
            repetition,
        });
        rows.push(FeatureRow {
            instance,
            repetition,
            b_ela,
            sample_best: parse_cell(cells[3])?,
            features,
        });
    }
    Ok(rows)
}
