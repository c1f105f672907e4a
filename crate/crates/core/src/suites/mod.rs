//! Problem suites: BBOB-like functions, affine MA-BBOB blends and random
//! expression trees, all exposed as immutable box-constrained instances.

pub mod bbob;
pub mod rog;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{rng, SeedKey};

pub use bbob::BbobFunction;
pub use rog::Expr;

/// Offset inside the log-space blend of MA-BBOB components.
pub const MABBOB_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SuiteId {
    #[serde(rename = "BBOB_LITE")]
    BbobLite,
    #[serde(rename = "MABBOB_LITE")]
    MabbobLite,
    #[serde(rename = "ROG_LITE")]
    RogLite,
}

impl SuiteId {
    pub const ALL: [SuiteId; 3] = [SuiteId::BbobLite, SuiteId::MabbobLite, SuiteId::RogLite];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteId::BbobLite => "BBOB_LITE",
            SuiteId::MabbobLite => "MABBOB_LITE",
            SuiteId::RogLite => "ROG_LITE",
        }
    }

    pub fn bounds(self) -> Bounds {
        match self {
            SuiteId::BbobLite | SuiteId::MabbobLite => Bounds { lo: -5.0, hi: 5.0 },
            SuiteId::RogLite => Bounds { lo: -1.0, hi: 1.0 },
        }
    }

    pub fn has_known_optimum(self) -> bool {
        !matches!(self, SuiteId::RogLite)
    }
}

impl fmt::Display for SuiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuiteId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SuiteId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown suite {s:?}")))
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    /// `value - optimum_value` when the optimum is known.
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct MabbobBlend {
    x_star: Vec<f64>,
    components: Vec<(BbobFunction, f64)>,
}

impl MabbobBlend {
    fn value(&self, x: &[f64]) -> f64 {
        let mut log_sum = 0.0;
        let mut all_zero = true;
        let mut shifted = vec![0.0; x.len()];
        for (f, w) in &self.components {
            if *w == 0.0 {
                continue;
            }
            for (k, s) in shifted.iter_mut().enumerate() {
                *s = x[k] - self.x_star[k] + f.x_opt()[k];
            }
            let raw = f.value(&shifted);
            all_zero &= raw == 0.0;
            log_sum += w * (raw + MABBOB_EPS).log10();
        }
        if all_zero {
            return 0.0;
        }
        (10f64.powf(log_sum) - MABBOB_EPS).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Objective {
    Bbob(BbobFunction),
    Mabbob(MabbobBlend),
    Rog(Expr),
}

/// One MA-BBOB component as recorded in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub fid: u32,
    pub iid: u32,
    pub weight: f64,
}

/// JSON manifest record from which an instance can be rebuilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub suite: SuiteId,
    pub fid: u32,
    pub iid: u32,
    pub d: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<ComponentRecord>>,
}

/// An evaluatable, immutable box-constrained objective.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    suite: SuiteId,
    function_id: u32,
    instance_id: u32,
    dimension: usize,
    bounds: Bounds,
    optimum_value: Option<f64>,
    generator_seed: u64,
    explicit_components: Option<Vec<ComponentRecord>>,
    objective: Arc<Objective>,
}

impl PartialEq for ProblemInstance {
    fn eq(&self, other: &Self) -> bool {
        self.record() == other.record()
    }
}

/// Builds transformed BBOB function `function_id` (1..=12), instance
/// `instance_id`, in `dimension` dimensions.
pub fn bbob_instance(function_id: u32, instance_id: u32, dimension: usize) -> Result<ProblemInstance> {
    let f = BbobFunction::new(function_id, instance_id, dimension)?;
    Ok(ProblemInstance {
        suite: SuiteId::BbobLite,
        function_id,
        instance_id,
        dimension,
        bounds: SuiteId::BbobLite.bounds(),
        optimum_value: Some(0.0),
        generator_seed: bbob::instance_seed(function_id, instance_id, dimension),
        explicit_components: None,
        objective: Arc::new(Objective::Bbob(f)),
    })
}

/// Log-space affine blend of BBOB components sharing one optimum location
/// drawn from `seed`.
pub fn mabbob_instance(
    component_fids: &[u32],
    component_iids: &[u32],
    weights: &[f64],
    seed: u64,
    dimension: usize,
) -> Result<ProblemInstance> {
    let components: Vec<ComponentRecord> = component_fids
        .iter()
        .zip(component_iids)
        .zip(weights)
        .map(|((&fid, &iid), &weight)| ComponentRecord { fid, iid, weight })
        .collect();
    if component_fids.len() != component_iids.len() || component_fids.len() != weights.len() {
        return Err(Error::invalid("component lists differ in length"));
    }
    let mut inst = build_mabbob(&components, seed, dimension)?;
    inst.explicit_components = Some(components);
    Ok(inst)
}

fn build_mabbob(components: &[ComponentRecord], seed: u64, dimension: usize) -> Result<ProblemInstance> {
    if components.is_empty() {
        return Err(Error::invalid("at least one component required"));
    }
    if dimension < 1 {
        return Err(Error::InvalidDimension(dimension));
    }
    if components.iter().any(|c| !(c.weight >= 0.0) || !c.weight.is_finite()) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if total <= 0.0 {
        return Err(Error::invalid("all weights are zero"));
    }
    let mut r = rng(SeedKey::new(seed, "mabbob-xstar").u64(dimension as u64).finish());
    let x_star: Vec<f64> = (0..dimension).map(|_| r.random_range(-4.0..=4.0)).collect();
    let blended = components
        .iter()
        .map(|c| Ok((BbobFunction::new(c.fid, c.iid, dimension)?, c.weight / total)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProblemInstance {
        suite: SuiteId::MabbobLite,
        function_id: 0,
        instance_id: 0,
        dimension,
        bounds: SuiteId::MabbobLite.bounds(),
        optimum_value: Some(0.0),
        generator_seed: seed,
        explicit_components: None,
        objective: Arc::new(Objective::Mabbob(MabbobBlend {
            x_star,
            components: blended,
        })),
    })
}

/// Random MA-BBOB instance: two distinct base functions with random
/// instances and U(0,1) weights, all drawn from `seed`.
pub fn mabbob_random(instance_id: u32, seed: u64, dimension: usize) -> Result<ProblemInstance> {
    let mut r = rng(SeedKey::new(seed, "mabbob-components").finish());
    let fids = sample(&mut r, bbob::NUM_FUNCTIONS as usize, 2);
    let components: Vec<ComponentRecord> = fids
        .iter()
        .map(|f| ComponentRecord {
            fid: f as u32 + 1,
            iid: r.random_range(1..=1000),
            weight: r.random_range(0.05..1.0),
        })
        .collect();
    let mut inst = build_mabbob(&components, seed, dimension)?;
    inst.instance_id = instance_id;
    Ok(inst)
}

/// Random expression-tree instance on `[-1, 1]^d`; optimum unknown.
pub fn rog_instance(seed: u64, dimension: usize) -> Result<ProblemInstance> {
    if dimension < 1 {
        return Err(Error::InvalidDimension(dimension));
    }
    let tree = Expr::random(dimension, &mut rng(SeedKey::new(seed, "rog").finish()));
    Ok(ProblemInstance {
        suite: SuiteId::RogLite,
        function_id: 0,
        instance_id: 0,
        dimension,
        bounds: SuiteId::RogLite.bounds(),
        optimum_value: None,
        generator_seed: seed,
        explicit_components: None,
        objective: Arc::new(Objective::Rog(tree)),
    })
}

impl ProblemInstance {
    pub fn suite(&self) -> SuiteId {
        self.suite
    }

    pub fn function_id(&self) -> u32 {
        self.function_id
    }

    pub fn instance_id(&self) -> u32 {
        self.instance_id
    }

    pub fn with_instance_id(mut self, iid: u32) -> Self {
        self.instance_id = iid;
        self
    }

    /// Unique key within an instance set; BBOB keys combine function and
    /// instance ids.
    pub fn key(&self) -> u32 {
        match self.suite {
            SuiteId::BbobLite => self.function_id * 10_000 + self.instance_id,
            _ => self.instance_id,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn optimum_value(&self) -> Option<f64> {
        self.optimum_value
    }

    pub fn generator_seed(&self) -> u64 {
        self.generator_seed
    }

    /// Location of the global optimum, when known.
    pub fn optimum_location(&self) -> Option<&[f64]> {
        match &*self.objective {
            Objective::Bbob(f) => Some(f.x_opt()),
            Objective::Mabbob(m) => Some(&m.x_star),
            Objective::Rog(_) => None,
        }
    }

    pub fn expression(&self) -> Option<&Expr> {
        match &*self.objective {
            Objective::Rog(e) => Some(e),
            _ => None,
        }
    }

    /// Objective value without the domain check.
    pub fn raw_value(&self, x: &[f64]) -> f64 {
        match &*self.objective {
            Objective::Bbob(f) => f.value(x),
            Objective::Mabbob(m) => m.value(x),
            Objective::Rog(e) => e.eval(x),
        }
    }

    /// Error if the optimum is known, the raw value otherwise. This is the
    /// quantity tracked by best-so-far trajectories.
    pub fn tracked_value(&self, x: &[f64]) -> f64 {
        let v = self.raw_value(x);
        match self.optimum_value {
            Some(opt) => v - opt,
            None => v,
        }
    }

    pub fn check_domain(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::invalid(format!(
                "point has {} coordinates, instance has {}",
                x.len(),
                self.dimension
            )));
        }
        for (index, &value) in x.iter().enumerate() {
            if !self.bounds.contains(value) {
                return Err(Error::OutOfDomain {
                    index,
                    value,
                    lo: self.bounds.lo,
                    hi: self.bounds.hi,
                });
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        self.check_domain(x)?;
        let value = self.raw_value(x);
        Ok(Evaluation {
            value,
            error: self.optimum_value.map(|opt| value - opt),
        })
    }

    pub fn record(&self) -> InstanceRecord {
        InstanceRecord {
            suite: self.suite,
            fid: self.function_id,
            iid: self.instance_id,
            d: self.dimension,
            seed: self.generator_seed,
            components: self.explicit_components.clone(),
        }
    }

    pub fn from_record(rec: &InstanceRecord) -> Result<Self> {
        match rec.suite {
            SuiteId::BbobLite => {
                let inst = bbob_instance(rec.fid, rec.iid, rec.d)?;
                if inst.generator_seed != rec.seed {
                    return Err(Error::invalid(format!(
                        "seed mismatch for BBOB f{} i{} d{}",
                        rec.fid, rec.iid, rec.d
                    )));
                }
                Ok(inst)
            }
            SuiteId::MabbobLite => match &rec.components {
                Some(c) => {
                    let fids: Vec<u32> = c.iter().map(|c| c.fid).collect();
                    let iids: Vec<u32> = c.iter().map(|c| c.iid).collect();
                    let w: Vec<f64> = c.iter().map(|c| c.weight).collect();
                    Ok(mabbob_instance(&fids, &iids, &w, rec.seed, rec.d)?.with_instance_id(rec.iid))
                }
                None => mabbob_random(rec.iid, rec.seed, rec.d),
            },
            SuiteId::RogLite => Ok(rog_instance(rec.seed, rec.d)?.with_instance_id(rec.iid)),
        }
    }
}

/// Ordered instances of one suite and dimension.
#[derive(Debug, Clone)]
pub struct InstanceSet {
    pub suite: SuiteId,
    pub dimension: usize,
    pub instances: Vec<ProblemInstance>,
}

impl InstanceSet {
    pub fn bbob(function_ids: &[u32], n_instances: u32, dimension: usize) -> Result<Self> {
        let mut instances = Vec::new();
        for &fid in function_ids {
            for iid in 1..=n_instances {
                instances.push(bbob_instance(fid, iid, dimension)?);
            }
        }
        Self::from_instances(SuiteId::BbobLite, dimension, instances)
    }

    pub fn mabbob(n: u32, master_seed: u64, dimension: usize) -> Result<Self> {
        let instances = (1..=n)
            .map(|iid| mabbob_random(iid, generator_seed(master_seed, SuiteId::MabbobLite, dimension, iid), dimension))
            .collect::<Result<Vec<_>>>()?;
        Self::from_instances(SuiteId::MabbobLite, dimension, instances)
    }

    pub fn rog(n: u32, master_seed: u64, dimension: usize) -> Result<Self> {
        let instances = (1..=n)
            .map(|iid| {
                let seed = generator_seed(master_seed, SuiteId::RogLite, dimension, iid);
                Ok(rog_instance(seed, dimension)?.with_instance_id(iid))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_instances(SuiteId::RogLite, dimension, instances)
    }

    pub fn from_instances(suite: SuiteId, dimension: usize, instances: Vec<ProblemInstance>) -> Result<Self> {
        let mut keys: Vec<u32> = instances.iter().map(ProblemInstance::key).collect();
        keys.sort_unstable();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate instance keys"));
        }
        if instances.iter().any(|i| i.suite != suite || i.dimension != dimension) {
            return Err(Error::invalid("instance set mixes suites or dimensions"));
        }
        Ok(InstanceSet {
            suite,
            dimension,
            instances,
        })
    }

    /// Distinct instance ids, the unit of cross-validation splitting.
    pub fn instance_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.instances.iter().map(|i| i.instance_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn get(&self, key: u32) -> Option<&ProblemInstance> {
        self.instances.iter().find(|i| i.key() == key)
    }

    pub fn records(&self) -> Vec<InstanceRecord> {
        self.instances.iter().map(ProblemInstance::record).collect()
    }

    pub fn from_records(records: &[InstanceRecord]) -> Result<Self> {
        let first = records.first().ok_or(Error::EmptyInput("instance manifest"))?;
        let instances = records
            .iter()
            .map(ProblemInstance::from_record)
            .collect::<Result<Vec<_>>>()?;
        Self::from_instances(first.suite, first.d, instances)
    }

    /// Drops instances whose key is listed.
    pub fn without(mut self, excluded: &[u32]) -> Self {
        self.instances.retain(|i| !excluded.contains(&i.key()));
        self
    }
}

pub fn generator_seed(master_seed: u64, suite: SuiteId, dimension: usize, iid: u32) -> u64 {
    SeedKey::new(master_seed, "instance")
        .str(suite.as_str())
        .u64(dimension as u64)
        .u64(u64::from(iid))
        .finish()
}
