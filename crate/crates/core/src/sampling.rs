//! Sobol low-discrepancy points with an optional seeded digital (XOR)
//! scramble, plus the affine map into an instance box.

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::{rng, SeedKey};
use crate::suites::Bounds;

pub const MAX_DIMENSION: usize = 32;
const BITS: usize = 32;

/// Primitive polynomial degree `s`, coefficient bits `a` and initial
/// direction numbers `m` for dimensions 2..=32 (new-joe-kuo-6.21201).
const DIRECTIONS: [(u32, u32, &[u32]); MAX_DIMENSION - 1] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
    (7, 4, &[1, 3, 7, 13, 13, 15, 69]),
    (7, 7, &[1, 1, 3, 13, 7, 35, 63]),
    (7, 8, &[1, 3, 5, 9, 1, 25, 53]),
    (7, 14, &[1, 3, 1, 13, 9, 35, 107]),
    (7, 19, &[1, 3, 1, 5, 27, 61, 31]),
    (7, 21, &[1, 1, 5, 11, 19, 41, 61]),
    (7, 28, &[1, 3, 5, 3, 3, 13, 69]),
    (7, 31, &[1, 1, 7, 13, 1, 19, 1]),
    (7, 32, &[1, 3, 7, 5, 13, 19, 59]),
    (7, 37, &[1, 1, 3, 9, 25, 29, 41]),
    (7, 41, &[1, 3, 5, 13, 23, 1, 55]),
    (7, 42, &[1, 3, 7, 3, 13, 59, 17]),
];

/// Primitive polynomial and initial direction numbers of dimension `dim`
/// (0-based), `None` for the first (van der Corput) dimension.
pub fn direction_parameters(dim: usize) -> Option<(u32, u32, &'static [u32])> {
    (dim > 0).then(|| DIRECTIONS[dim - 1])
}

/// Direction numbers `v[k]` (scaled to 32 bits) for one dimension.
fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    match direction_parameters(dim) {
        None => {
            for (k, vk) in v.iter_mut().enumerate() {
                *vk = 1 << (BITS - 1 - k);
            }
        }
        Some((s, a, m)) => {
            let s = s as usize;
            for k in 0..s.min(BITS) {
                v[k] = m[k] << (BITS - 1 - k);
            }
            for k in s..BITS {
                let mut val = v[k - s] ^ (v[k - s] >> s);
                for j in 1..s {
                    if (a >> (s - 1 - j)) & 1 == 1 {
                        val ^= v[k - j];
                    }
                }
                v[k] = val;
            }
        }
    }
    v
}

/// Unscrambled Sobol sequence addressed by index (Gray-code order).
#[derive(Debug, Clone)]
pub struct SobolSequence {
    directions: Vec<[u32; BITS]>,
}

impl SobolSequence {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if dimension > MAX_DIMENSION {
            return Err(Error::UnsupportedDimension(dimension));
        }
        Ok(SobolSequence {
            directions: (0..dimension).map(direction_numbers).collect(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.directions.len()
    }

    /// Integer coordinates of point `index`; coordinate `j` is `bits[j] / 2^32`.
    pub fn point_bits(&self, index: u32) -> Vec<u32> {
        let gray = index ^ (index >> 1);
        self.directions
            .iter()
            .map(|v| {
                (0..BITS)
                    .filter(|k| (gray >> k) & 1 == 1)
                    .fold(0u32, |acc, k| acc ^ v[k])
            })
            .collect()
    }

    pub fn point(&self, index: u32) -> Vec<f64> {
        self.point_bits(index).into_iter().map(to_unit).collect()
    }
}

fn to_unit(bits: u32) -> f64 {
    f64::from(bits) / 4_294_967_296.0
}

/// What to draw: `count` points in `dimension` dimensions, optionally
/// XOR-scrambled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplePlan {
    pub dimension: usize,
    pub count: usize,
    pub repetition: u32,
    pub scramble_seed: Option<u64>,
}

impl SamplePlan {
    pub fn unscrambled(dimension: usize, count: usize) -> Self {
        SamplePlan {
            dimension,
            count,
            repetition: 0,
            scramble_seed: None,
        }
    }

    pub fn scrambled(dimension: usize, count: usize, repetition: u32, scramble_seed: u64) -> Self {
        SamplePlan {
            dimension,
            count,
            repetition,
            scramble_seed: Some(scramble_seed),
        }
    }

    /// Scramble seed derived from `(master_seed, repetition)`.
    pub fn for_repetition(master_seed: u64, dimension: usize, count: usize, repetition: u32) -> Self {
        let seed = SeedKey::new(master_seed, "sobol-scramble")
            .u64(u64::from(repetition))
            .finish();
        Self::scrambled(dimension, count, repetition, seed)
    }
}

/// Draws `plan.count` points in `[0, 1)^d`.
///
/// The unscrambled sequence skips the all-zero point at index 0. Scrambled
/// plans start at index 0, whose image under the XOR mask is a random point,
/// so the first `2^k` scrambled points form a complete shifted net.
pub fn sobol_points(plan: &SamplePlan) -> Result<Vec<Vec<f64>>> {
    if plan.count == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    if plan.count as u64 > u64::from(u32::MAX) {
        return Err(Error::invalid("sample count exceeds 2^32 - 1"));
    }
    let seq = SobolSequence::new(plan.dimension)?;
    let (start, masks) = match plan.scramble_seed {
        None => (1u32, vec![0u32; plan.dimension]),
        Some(seed) => {
            let mut r = rng(seed);
            (0u32, (0..plan.dimension).map(|_| r.random::<u32>()).collect())
        }
    };
    Ok((0..plan.count as u32)
        .map(|i| {
            seq.point_bits(start + i)
                .into_iter()
                .zip(&masks)
                .map(|(b, m)| to_unit(b ^ m))
                .collect()
        })
        .collect())
}

/// Maps unit-cube points into the box, `u -> lo + u (hi - lo)` per dimension.
pub fn scale_to_box(points: &[Vec<f64>], bounds: &[Bounds]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| {
            p.iter()
                .zip(bounds)
                .map(|(u, b)| b.lo + u * (b.hi - b.lo))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute force: is `x^s + a_1 x^{s-1} + ... + a_{s-1} x + 1` primitive over
    /// GF(2)? The multiplicative order of x modulo the polynomial must be
    /// exactly 2^s - 1.
    fn is_primitive(s: u32, a: u32) -> bool {
        let poly: u64 = (1 << s) | (u64::from(a) << 1) | 1;
        let period = (1u64 << s) - 1;
        let mut r: u64 = 1;
        for step in 1..=period {
            r <<= 1;
            if r & (1 << s) != 0 {
                r ^= poly;
            }
            if r == 1 {
                return step == period;
            }
        }
        false
    }

    #[test]
    fn embedded_polynomials_are_primitive_and_distinct() {
        let mut seen = std::collections::BTreeSet::new();
        for (s, a, m) in DIRECTIONS {
            assert!(is_primitive(s, a), "s={s} a={a}");
            assert!(seen.insert((s, a)));
            assert_eq!(m.len(), s as usize);
            for (k, &mk) in m.iter().enumerate() {
                assert!(mk % 2 == 1 && mk < (1 << (k + 1)), "m_{k} = {mk}");
            }
        }
    }

    #[test]
    fn first_points_of_first_dimension() {
        let pts = sobol_points(&SamplePlan::unscrambled(1, 3)).unwrap();
        assert_eq!(pts, vec![vec![0.5], vec![0.75], vec![0.25]]);
    }

    #[test]
    fn second_dimension_reference_values() {
        // Published table for the first two Sobol dimensions.
        let pts = sobol_points(&SamplePlan::unscrambled(2, 7)).unwrap();
        let expect = [
            [0.5, 0.5],
            [0.75, 0.25],
            [0.25, 0.75],
            [0.375, 0.375],
            [0.875, 0.875],
            [0.625, 0.125],
            [0.125, 0.625],
        ];
        for (p, e) in pts.iter().zip(expect) {
            assert_eq!(p.as_slice(), e.as_slice());
        }
    }

    #[test]
    fn unsupported_dimension() {
        assert!(matches!(
            sobol_points(&SamplePlan::unscrambled(33, 4)),
            Err(Error::UnsupportedDimension(33))
        ));
        assert!(sobol_points(&SamplePlan::unscrambled(32, 4)).is_ok());
    }

    #[test]
    fn scale_examples() {
        let b5 = [Bounds { lo: -5.0, hi: 5.0 }; 2];
        assert_eq!(scale_to_box(&[vec![0.5, 0.5]], &b5), vec![vec![0.0, 0.0]]);
        let b1 = [Bounds { lo: -1.0, hi: 1.0 }; 2];
        assert_eq!(scale_to_box(&[vec![0.0, 0.0]], &b1), vec![vec![-1.0, -1.0]]);
        let unit = [Bounds { lo: 0.0, hi: 1.0 }; 2];
        let p = vec![vec![0.3, 0.9], vec![0.125, 0.0]];
        assert_eq!(scale_to_box(&p, &unit), p);
    }

    #[test]
    fn repetitions_differ() {
        let a = sobol_points(&SamplePlan::for_repetition(5, 3, 16, 0)).unwrap();
        let b = sobol_points(&SamplePlan::for_repetition(5, 3, 16, 1)).unwrap();
        let differs = a
            .iter()
            .flatten()
            .zip(b.iter().flatten())
            .any(|(x, y)| (x - y).abs() > 1e-9);
        assert!(differs);
    }

    #[test]
    fn points_lie_in_half_open_unit_cube() {
        for seed in 0..20 {
            let pts = sobol_points(&SamplePlan::scrambled(8, 300, 0, seed)).unwrap();
            assert!(pts.iter().flatten().all(|&u| (0.0..1.0).contains(&u)));
        }
    }
}
