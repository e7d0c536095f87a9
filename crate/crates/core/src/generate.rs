//! Synthetic datasets, 3DM hard instances and feasible query workloads.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::distance::{distance, norm, DistanceKind};
use crate::error::{FairKnnError, Result};
use crate::types::{AttributeSchema, FairnessSpec, Query, RecordId, ValueIndex, VectorRecord};

/// Two-cluster dataset: a small tight ball around the origin and a large
/// cluster far away.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_total: usize,
    pub dim: usize,
    pub tight_size: usize,
    pub tight_radius: f64,
    /// Distance from the origin to the far cluster's center. The far cluster
    /// is a ball of radius `far_offset / 4`.
    pub far_offset: f64,
    pub domain_sizes: Vec<usize>,
    /// Probability that each attribute after the first copies the first
    /// attribute's value (modulo its domain) in the far cluster.
    pub correlation: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_total: 10_050,
            dim: 16,
            tight_size: 50,
            tight_radius: 1.0,
            far_offset: 100.0,
            domain_sizes: vec![2, 2, 2],
            correlation: 0.0,
            seed: 0,
        }
    }
}

fn uniform_in_ball(rng: &mut impl Rng, center: &[f64], radius: f64) -> Vec<f64> {
    let d = center.len();
    let mut x: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let n = norm(&x).max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    for (xi, ci) in x.iter_mut().zip(center) {
        *xi = ci + *xi / n * r;
    }
    x
}

/// Attribute tuple number `i` of the product of `sizes`, last attribute fastest.
fn product_tuple(mut i: usize, sizes: &[usize]) -> Vec<ValueIndex> {
    let mut out = vec![0; sizes.len()];
    for (j, &s) in sizes.iter().enumerate().rev() {
        out[j] = (i % s) as ValueIndex;
        i /= s;
    }
    out
}

/// Tight-cluster points cycle through every attribute tuple so each
/// intersectional group is present near the origin when `tight_size` allows;
/// far points draw attributes at random.
pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.tight_size >= cfg.n_total && cfg.n_total > 0 {
        return Err(FairKnnError::Config("tight_size must be below n_total".into()));
    }
    if cfg.dim == 0 || cfg.domain_sizes.is_empty() {
        return Err(FairKnnError::Config("dim and domain_sizes must be non-empty".into()));
    }
    if !(0.0..=1.0).contains(&cfg.correlation) {
        return Err(FairKnnError::Config("correlation must lie in [0, 1]".into()));
    }
    let schema = AttributeSchema::anonymous(&cfg.domain_sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let origin = vec![0.0; cfg.dim];
    let mut far_center = vec![0.0; cfg.dim];
    far_center[0] = cfg.far_offset;
    let groups: usize = cfg.domain_sizes.iter().product();
    let offset = rng.random_range(0..groups);
    let mut records = Vec::with_capacity(cfg.n_total);
    for i in 0..cfg.n_total {
        let (embedding, attrs) = if i < cfg.tight_size {
            (
                uniform_in_ball(&mut rng, &origin, cfg.tight_radius),
                product_tuple((i + offset) % groups, &cfg.domain_sizes),
            )
        } else {
            let x = uniform_in_ball(&mut rng, &far_center, cfg.far_offset / 4.0);
            let first = rng.random_range(0..cfg.domain_sizes[0]);
            let mut attrs = vec![first as ValueIndex];
            for &s in &cfg.domain_sizes[1..] {
                let v = if rng.random_bool(cfg.correlation) {
                    first % s
                } else {
                    rng.random_range(0..s)
                };
                attrs.push(v as ValueIndex);
            }
            (x, attrs)
        };
        records.push(VectorRecord::new(i as RecordId, embedding, attrs));
    }
    Dataset::new(schema, cfg.dim, DistanceKind::Euclidean, records)
}

/// Embedding dimension of generated 3DM instances.
pub const THREE_DM_DIM: usize = 4;

/// A 3-dimensional-matching instance as a fair selection problem.
///
/// Each record is a triple `(x, y, z)` over three attributes with domains of
/// size `k_elements`; requiring every value exactly once asks for a perfect
/// matching. With `planted`, a random perfect matching is included.
pub fn gen_3dm(k_elements: usize, extra_triples: usize, planted: bool, seed: u64) -> Result<(Dataset, FairnessSpec)> {
    if k_elements == 0 {
        return Err(FairKnnError::Config("k_elements must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triples: Vec<[ValueIndex; 3]> = Vec::new();
    if planted {
        let mut ys: Vec<ValueIndex> = (0..k_elements as ValueIndex).collect();
        let mut zs = ys.clone();
        ys.shuffle(&mut rng);
        zs.shuffle(&mut rng);
        triples.extend((0..k_elements).map(|x| [x as ValueIndex, ys[x], zs[x]]));
    }
    let k = k_elements as ValueIndex;
    triples.extend((0..extra_triples).map(|_| [rng.random_range(0..k), rng.random_range(0..k), rng.random_range(0..k)]));
    triples.shuffle(&mut rng);
    let records = triples
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let x = (0..THREE_DM_DIM).map(|_| rng.random::<f64>()).collect();
            VectorRecord::new(i as RecordId, x, t.to_vec())
        })
        .collect();
    let names: Vec<String> = (0..k_elements).map(|i| format!("e{i}")).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let schema = AttributeSchema::from_names(&[("x", &names), ("y", &names), ("z", &names)])?;
    let ds = Dataset::new(schema, THREE_DM_DIM, DistanceKind::Euclidean, records)?;
    let ones: Vec<(ValueIndex, usize)> = (0..k).map(|v| (v, 1)).collect();
    let spec = FairnessSpec::from_pairs(k_elements, &[(0, &ones), (1, &ones), (2, &ones)])?;
    Ok((ds, spec))
}

/// Workload generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryGenConfig {
    pub num_queries: usize,
    pub k: usize,
    /// Attribute indices every query constrains.
    pub constrained: Vec<usize>,
    /// Expected norm of the query perturbation.
    pub noise: f64,
    /// Perturb this point instead of a random record.
    pub center: Option<Vec<f64>>,
    /// Draw the witness set from this many nearest records instead of the
    /// whole dataset.
    pub witness_pool: Option<usize>,
    /// Reject specs already emitted.
    pub distinct_specs: bool,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for QueryGenConfig {
    fn default() -> Self {
        Self {
            num_queries: 100,
            k: 10,
            constrained: vec![0],
            noise: 0.1,
            center: None,
            witness_pool: None,
            distinct_specs: true,
            max_attempts: 10_000,
            seed: 0,
        }
    }
}

/// Necessary count check: every required `(attribute, value)` has at least
/// its count among the records the spec admits.
pub fn count_feasible(ds: &Dataset, spec: &FairnessSpec) -> bool {
    let mut avail: BTreeMap<(usize, ValueIndex), usize> = BTreeMap::new();
    for r in ds.records() {
        if spec.admits(&r.attrs) {
            for j in spec.constrained_attrs() {
                *avail.entry((j, r.attrs[j])).or_default() += 1;
            }
        }
    }
    spec.constraints()
        .iter()
        .all(|(&j, values)| values.iter().all(|(&v, &c)| avail.get(&(j, v)).copied().unwrap_or(0) >= c))
}

/// Random feasible queries.
///
/// Each query vector is a random record (or `center`) plus Gaussian noise;
/// its spec counts the constrained values of `k` randomly drawn witness
/// records, so a fair answer of size `k` always exists.
pub fn gen_queries(ds: &Dataset, cfg: &QueryGenConfig) -> Result<Vec<Query>> {
    if ds.is_empty() {
        return Err(FairKnnError::QueryGen("dataset is empty".into()));
    }
    if cfg.k == 0 || cfg.k > ds.len() {
        return Err(FairKnnError::QueryGen(format!("k = {} must lie in [1, {}]", cfg.k, ds.len())));
    }
    if cfg.constrained.is_empty() || cfg.constrained.iter().any(|&j| j >= ds.schema().len()) {
        return Err(FairKnnError::QueryGen(format!(
            "constrained attributes {:?} invalid for {} attributes",
            cfg.constrained,
            ds.schema().len()
        )));
    }
    if let Some(c) = &cfg.center {
        if c.len() != ds.dim() {
            return Err(FairKnnError::QueryGen("center has the wrong dimension".into()));
        }
    }
    let pool = cfg.witness_pool.unwrap_or(ds.len()).clamp(cfg.k, ds.len());
    let per_coord = cfg.noise / (ds.dim() as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(cfg.num_queries);
    let mut attempts = 0;
    while out.len() < cfg.num_queries {
        if attempts >= cfg.max_attempts {
            return Err(FairKnnError::QueryGen(format!(
                "generated only {} of {} distinct feasible queries after {attempts} attempts",
                out.len(),
                cfg.num_queries
            )));
        }
        attempts += 1;
        let base = match &cfg.center {
            Some(c) => c.clone(),
            None => ds.records()[rng.random_range(0..ds.len())].embedding.clone(),
        };
        let vector: Vec<f64> = base
            .iter()
            .map(|&b| b + per_coord * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let witnesses = if pool < ds.len() {
            let mut near: Vec<(f64, usize)> = ds
                .records()
                .iter()
                .enumerate()
                .map(|(i, r)| Ok((distance(&r.embedding, &vector, ds.distance())?, i)))
                .collect::<Result<_>>()?;
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut idx: Vec<usize> = near[..pool].iter().map(|x| x.1).collect();
            idx.partial_shuffle(&mut rng, cfg.k);
            idx.truncate(cfg.k);
            idx
        } else {
            rand::seq::index::sample(&mut rng, ds.len(), cfg.k).into_vec()
        };
        let mut constraints: BTreeMap<usize, BTreeMap<ValueIndex, usize>> = BTreeMap::new();
        for &j in &cfg.constrained {
            let counts = constraints.entry(j).or_default();
            for &i in &witnesses {
                *counts.entry(ds.records()[i].attrs[j]).or_default() += 1;
            }
        }
        let spec = FairnessSpec::new(cfg.k, constraints)?;
        if !count_feasible(ds, &spec) {
            continue;
        }
        if cfg.distinct_specs && !seen.insert(spec.clone()) {
            continue;
        }
        out.push(Query::new(vector, spec));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{read_csv, write_binary};

    #[test]
    fn tight_cluster_holds_the_nearest_neighbors() {
        let cfg = SyntheticConfig {
            n_total: 10_050,
            dim: 8,
            tight_size: 50,
            tight_radius: 1.0,
            far_offset: 100.0,
            ..SyntheticConfig::default()
        };
        let ds = gen_synthetic(&cfg).unwrap();
        assert_eq!(ds.len(), 10_050);
        let mut d: Vec<(f64, RecordId)> = ds
            .records()
            .iter()
            .map(|r| (norm(&r.embedding), r.id))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(d[..10].iter().all(|&(_, id)| id < 50));
        assert!(d[49].0 <= 1.0 && d[50].0 >= 100.0 - 25.0);
        // every attribute tuple appears in both clusters
        let tuples = |tight: bool| -> HashSet<Vec<u32>> {
            ds.records()
                .iter()
                .filter(|r| (r.id < 50) == tight)
                .map(|r| r.attrs.clone())
                .collect()
        };
        assert_eq!(tuples(true).len(), 8);
        assert_eq!(tuples(false).len(), 8);
    }

    #[test]
    fn no_tight_cluster() {
        let ds = gen_synthetic(&SyntheticConfig {
            n_total: 200,
            tight_size: 0,
            ..SyntheticConfig::default()
        })
        .unwrap();
        assert!(ds.records().iter().all(|r| norm(&r.embedding) >= 75.0 - 1e-9));
    }

    #[test]
    fn synthetic_is_seeded() {
        let cfg = SyntheticConfig {
            n_total: 300,
            tight_size: 20,
            ..SyntheticConfig::default()
        };
        let bytes = |ds: &Dataset| {
            let mut b = Vec::new();
            write_binary(ds, &mut b).unwrap();
            b
        };
        assert_eq!(bytes(&gen_synthetic(&cfg).unwrap()), bytes(&gen_synthetic(&cfg).unwrap()));
        let other = SyntheticConfig { seed: 1, ..cfg.clone() };
        assert_ne!(bytes(&gen_synthetic(&other).unwrap()), bytes(&gen_synthetic(&cfg).unwrap()));
    }

    #[test]
    fn planted_3dm_contains_a_matching() {
        let (ds, spec) = gen_3dm(6, 18, true, 4).unwrap();
        assert_eq!(ds.len(), 24);
        assert_eq!(spec.k(), 6);
        assert_eq!(spec.num_constrained(), 3);
        assert!(count_feasible(&ds, &spec));
        let (one, spec1) = gen_3dm(1, 0, true, 0).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.records()[0].attrs, vec![0, 0, 0]);
        assert_eq!(spec1.k(), 1);
    }

    #[test]
    fn queries_are_feasible_and_distinct() {
        let ds = gen_synthetic(&SyntheticConfig {
            n_total: 2000,
            tight_size: 40,
            domain_sizes: vec![2, 3, 2],
            ..SyntheticConfig::default()
        })
        .unwrap();
        let cfg = QueryGenConfig {
            num_queries: 50,
            k: 6,
            constrained: vec![0, 1],
            seed: 3,
            ..QueryGenConfig::default()
        };
        let qs = gen_queries(&ds, &cfg).unwrap();
        assert_eq!(qs.len(), 50);
        let specs: HashSet<_> = qs.iter().map(|q| q.spec.clone()).collect();
        assert_eq!(specs.len(), 50);
        for q in &qs {
            assert!(count_feasible(&ds, &q.spec));
            assert_eq!(q.spec.k(), 6);
            assert_eq!(q.spec.constrained_attrs().collect::<Vec<_>>(), vec![0, 1]);
        }
        assert_eq!(qs, gen_queries(&ds, &cfg).unwrap());
    }

    #[test]
    fn exhausted_spec_space_errors() {
        let ds = gen_synthetic(&SyntheticConfig {
            n_total: 100,
            tight_size: 10,
            domain_sizes: vec![2],
            ..SyntheticConfig::default()
        })
        .unwrap();
        // k = 1 over a binary attribute admits only two specs
        let cfg = QueryGenConfig {
            num_queries: 3,
            k: 1,
            constrained: vec![0],
            max_attempts: 500,
            ..QueryGenConfig::default()
        };
        assert!(matches!(gen_queries(&ds, &cfg), Err(FairKnnError::QueryGen(_))));
    }

    #[test]
    fn count_check_rejects_three_non_binary() {
        let ds = read_csv(include_str!("../tests/data/table1.csv").as_bytes(), DistanceKind::Euclidean).unwrap();
        let spec = FairnessSpec::from_names(
            ds.schema(),
            &[
                ("gender", &[("Male", 1), ("Female", 1), ("Non-binary", 3)]),
                ("race", &[("White", 2), ("Black", 1), ("Hispanic", 2)]),
                ("age", &[("<30", 2), ("30-50", 2), (">50", 1)]),
            ],
        )
        .unwrap();
        assert!(!count_feasible(&ds, &spec));
        let ok = FairnessSpec::from_names(ds.schema(), &[("gender", &[("Male", 1), ("Non-binary", 2)])]).unwrap();
        assert!(count_feasible(&ds, &ok));
    }
}
