//! Twelve BBOB-style base functions with seeded instance transformations.
//!
//! All functions have `f_opt = 0` attained at `x_opt`. Optima are drawn from
//! `[-4, 4]^d`; rotations come from a seeded Gaussian matrix orthonormalized
//! by Gram-Schmidt.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed::SeedKey;

pub const NUM_FUNCTIONS: u32 = 12;

pub const FUNCTION_NAMES: [&str; 12] = [
    "sphere",
    "ellipsoid_separable",
    "rastrigin",
    "buche_rastrigin",
    "linear_slope",
    "attractive_sector",
    "ellipsoid_rotated",
    "discus",
    "bent_cigar",
    "sharp_ridge",
    "rosenbrock",
    "schaffers_f7",
];

/// Square orthogonal matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    dim: usize,
    data: Vec<f64>,
}

impl Rotation {
    pub fn random<R: Rng>(dim: usize, rng: &mut R) -> Self {
        loop {
            let mut rows: Vec<Vec<f64>> = (0..dim)
                .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
                .collect();
            if gram_schmidt(&mut rows) {
                return Rotation {
                    dim,
                    data: rows.into_iter().flatten().collect(),
                };
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Orthonormalizes `rows` in place (modified Gram-Schmidt). Returns false if
/// the rows are numerically dependent.
fn gram_schmidt(rows: &mut [Vec<f64>]) -> bool {
    for i in 0..rows.len() {
        for j in 0..i {
            let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            let (head, tail) = rows.split_at_mut(i);
            for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                *a -= dot * b;
            }
        }
        let norm = rows[i].iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-10 {
            return false;
        }
        rows[i].iter_mut().for_each(|a| *a /= norm);
    }
    true
}

/// One transformed base function.
#[derive(Debug, Clone, PartialEq)]
pub struct BbobFunction {
    fid: u32,
    x_opt: Vec<f64>,
    r: Option<Rotation>,
    q: Option<Rotation>,
}

pub fn instance_seed(fid: u32, iid: u32, dim: usize) -> u64 {
    SeedKey::new(0, "bbob")
        .u64(u64::from(fid))
        .u64(u64::from(iid))
        .u64(dim as u64)
        .finish()
}

impl BbobFunction {
    pub fn new(fid: u32, iid: u32, dim: usize) -> Result<Self> {
        if !(1..=NUM_FUNCTIONS).contains(&fid) {
            return Err(Error::UnknownFunction(fid));
        }
        if dim < 1 {
            return Err(Error::InvalidDimension(dim));
        }
        let mut rng = crate::seed::rng(instance_seed(fid, iid, dim));
        let x_opt: Vec<f64> = (0..dim).map(|_| rng.random_range(-4.0..=4.0)).collect();
        let (r, q) = match fid {
            6 | 10 | 12 => {
                let r = Rotation::random(dim, &mut rng);
                let q = Rotation::random(dim, &mut rng);
                (Some(r), Some(q))
            }
            7..=9 => (Some(Rotation::random(dim, &mut rng)), None),
            _ => (None, None),
        };
        Ok(BbobFunction { fid, x_opt, r, q })
    }

    pub fn fid(&self) -> u32 {
        self.fid
    }

    pub fn x_opt(&self) -> &[f64] {
        &self.x_opt
    }

    pub fn rotation(&self) -> Option<&Rotation> {
        self.r.as_ref()
    }

    pub fn with_optimum(mut self, x_opt: Vec<f64>) -> Self {
        debug_assert_eq!(x_opt.len(), self.x_opt.len());
        self.x_opt = x_opt;
        self
    }

    /// Function value at `x`, no bounds check. Non-negative, zero at `x_opt`.
    pub fn value(&self, x: &[f64]) -> f64 {
        let d = x.len();
        let shifted: Vec<f64> = x.iter().zip(&self.x_opt).map(|(a, b)| a - b).collect();
        match self.fid {
            1 => shifted.iter().map(|z| z * z).sum(),
            2 => ellipsoid(&shifted),
            3 => {
                let z = lambda(&shifted, 10.0);
                rastrigin(&z)
            }
            4 => {
                let z: Vec<f64> = shifted
                    .iter()
                    .enumerate()
                    .map(|(i, &zi)| {
                        let base = 10f64.powf(0.5 * exponent(i, d));
                        if zi > 0.0 && i % 2 == 0 {
                            10.0 * base * zi
                        } else {
                            base * zi
                        }
                    })
                    .collect();
                rastrigin(&z) + 100.0 * boundary_penalty(x)
            }
            5 => shifted
                .iter()
                .zip(&self.x_opt)
                .enumerate()
                .map(|(i, (&zi, &xo))| {
                    let slope = 10f64.powf(exponent(i, d));
                    let sign = if xo < 0.0 { -1.0 } else { 1.0 };
                    slope * (-sign * zi).max(0.0)
                })
                .sum(),
            6 => {
                let z = self.qlr(&shifted);
                let s: f64 = z
                    .iter()
                    .zip(&self.x_opt)
                    .map(|(&zi, &xo)| {
                        let scale = if zi * xo > 0.0 { 100.0 } else { 1.0 };
                        (scale * zi).powi(2)
                    })
                    .sum();
                s.powf(0.9)
            }
            7 => ellipsoid(&self.rot(&shifted)),
            8 => {
                let z = self.rot(&shifted);
                1e6 * z[0] * z[0] + z[1..].iter().map(|v| v * v).sum::<f64>()
            }
            9 => {
                let z = self.rot(&shifted);
                z[0] * z[0] + 1e6 * z[1..].iter().map(|v| v * v).sum::<f64>()
            }
            10 => {
                let z = self.qlr(&shifted);
                z[0] * z[0] + 100.0 * z[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
            }
            11 => {
                let scale = ((d as f64).sqrt() / 8.0).max(1.0);
                let z: Vec<f64> = shifted.iter().map(|v| scale * v + 1.0).collect();
                z.windows(2)
                    .map(|w| 100.0 * (w[0] * w[0] - w[1]).powi(2) + (w[0] - 1.0).powi(2))
                    .sum()
            }
            12 => {
                let rq = self.q.as_ref().expect("f12 has Q").apply(&self.rot(&shifted));
                let z = lambda(&rq, 10.0);
                let s: Vec<f64> = if d == 1 {
                    vec![z[0].abs()]
                } else {
                    z.windows(2).map(|w| (w[0] * w[0] + w[1] * w[1]).sqrt()).collect()
                };
                let mean = s
                    .iter()
                    .map(|&si| si.sqrt() + si.sqrt() * (50.0 * si.powf(0.2)).sin().powi(2))
                    .sum::<f64>()
                    / s.len() as f64;
                mean * mean + 10.0 * boundary_penalty(x)
            }
            _ => unreachable!("fid validated at construction"),
        }
    }

    fn rot(&self, v: &[f64]) -> Vec<f64> {
        self.r.as_ref().expect("rotated function").apply(v)
    }

    /// `Q Λ^10 R v`
    fn qlr(&self, v: &[f64]) -> Vec<f64> {
        let rv = self.rot(v);
        let lrv = lambda(&rv, 10.0);
        self.q.as_ref().expect("function uses Q").apply(&lrv)
    }
}

fn exponent(i: usize, d: usize) -> f64 {
    if d > 1 {
        i as f64 / (d - 1) as f64
    } else {
        0.0
    }
}

fn lambda(v: &[f64], alpha: f64) -> Vec<f64> {
    let d = v.len();
    v.iter()
        .enumerate()
        .map(|(i, x)| alpha.powf(0.5 * exponent(i, d)) * x)
        .collect()
}

fn ellipsoid(z: &[f64]) -> f64 {
    let d = z.len();
    z.iter()
        .enumerate()
        .map(|(i, v)| 10f64.powf(6.0 * exponent(i, d)) * v * v)
        .sum()
}

fn rastrigin(z: &[f64]) -> f64 {
    let d = z.len() as f64;
    let cos_sum: f64 = z.iter().map(|v| (2.0 * std::f64::consts::PI * v).cos()).sum();
    // 10 (d - sum cos) is >= 0 but may round to a tiny negative at the optimum
    (10.0 * (d - cos_sum)).max(0.0) + z.iter().map(|v| v * v).sum::<f64>()
}

fn boundary_penalty(x: &[f64]) -> f64 {
    x.iter().map(|v| (v.abs() - 5.0).max(0.0).powi(2)).sum()
}
