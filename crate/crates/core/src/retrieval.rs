//! Candidate retrieval from the partitions relevant to a query.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::distance::distance;
use crate::error::{FairKnnError, Result};
use crate::exec::Exec;
use crate::index::FairIndex;
use crate::lsh::PartitionLsh;
use crate::partition::{decode_full, query_mask, relevant_partitions, BitLayout, PartitionBitmap, PartitionRegistry};
use crate::types::{FairnessSpec, Query, RecordId, ValueIndex};

/// A retrieved record with its distance to the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: RecordId,
    pub partition: PartitionBitmap,
    pub dist: f64,
    pub attrs: Vec<ValueIndex>,
}

/// Ascending distance, then ascending id.
pub fn by_distance(a: &Candidate, b: &Candidate) -> Ordering {
    a.dist.total_cmp(&b.dist).then(a.id.cmp(&b.id))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionStat {
    pub partition: PartitionBitmap,
    pub quota: usize,
    /// Ids whose distance was computed.
    pub scanned: usize,
    pub achieved: usize,
    pub available: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub candidates: Vec<Candidate>,
    pub partitions: Vec<PartitionStat>,
    /// Distance evaluations performed.
    pub scanned: usize,
    /// Total members of the relevant partitions.
    pub relevant_size: usize,
}

impl RetrievalReport {
    pub fn scanned_fraction(&self) -> f64 {
        if self.relevant_size == 0 {
            0.0
        } else {
            self.scanned as f64 / self.relevant_size as f64
        }
    }

    /// True when every relevant partition returned its full quota.
    pub fn quotas_met(&self) -> bool {
        self.partitions.iter().all(|p| p.achieved >= p.quota.min(p.available))
    }

    fn assemble(parts: Vec<(PartitionStat, Vec<Candidate>)>) -> Self {
        let mut report = Self::default();
        let mut seen = HashSet::new();
        for (stat, cands) in parts {
            report.scanned += stat.scanned;
            report.relevant_size += stat.available;
            for c in &cands {
                assert!(seen.insert(c.id), "record {} retrieved from two partitions", c.id);
            }
            report.candidates.extend(cands);
            report.partitions.push(stat);
        }
        report
    }
}

/// Retrieval quota of a relevant partition: the smallest required count
/// among its values on the constrained attributes.
pub fn quota(pi: PartitionBitmap, spec: &FairnessSpec, layout: &BitLayout) -> Result<usize> {
    let attrs = decode_full(pi, layout)?;
    let mut k_pi = usize::MAX;
    for j in spec.constrained_attrs() {
        let c = spec.count(j, attrs[j]);
        if c == 0 {
            return Err(FairKnnError::Spec(format!(
                "partition {pi} is not relevant to the query (attribute {j} value {})",
                attrs[j]
            )));
        }
        k_pi = k_pi.min(c);
    }
    Ok(k_pi)
}

/// Retrieval knobs shared by the main pipeline and the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalOptions {
    /// Multiplier applied to every partition quota (rounded up).
    pub quota_boost: f64,
}

impl Default for RetrievalOptions {
    fn default() -> Self {
        Self { quota_boost: 1.0 }
    }
}

impl RetrievalOptions {
    pub fn boosted(&self, k_pi: usize) -> usize {
        if self.quota_boost == 1.0 {
            k_pi
        } else {
            (k_pi as f64 * self.quota_boost).ceil() as usize
        }
    }
}

fn to_candidates(ids: &[RecordId], q: &[f64], pi: PartitionBitmap, ds: &Dataset) -> Result<Vec<Candidate>> {
    ids.iter()
        .map(|&id| {
            let rec = ds.get(id).expect("indexed id missing from dataset");
            Ok(Candidate {
                id,
                partition: pi,
                dist: distance(&rec.embedding, q, ds.distance())?,
                attrs: rec.attrs.clone(),
            })
        })
        .collect()
}

fn top_k(mut cands: Vec<Candidate>, k: usize) -> Vec<Candidate> {
    cands.sort_by(by_distance);
    cands.truncate(k);
    cands
}

/// Up to `k_pi` nearest colliding members of one partition.
///
/// Probes all tables, keeps the first `k*_pi` distinct ids, ranks them by
/// distance and returns the best `k_pi`. Also returns the number of ids scanned.
pub fn near_pi(
    q: &[f64],
    pi: PartitionBitmap,
    lsh: &PartitionLsh,
    ds: &Dataset,
    k_pi: usize,
) -> Result<(Vec<Candidate>, usize)> {
    let ids = lsh.probe_capped(q, lsh.params.candidate_cap(k_pi));
    let scanned = ids.len();
    Ok((top_k(to_candidates(&ids, q, pi, ds)?, k_pi), scanned))
}

/// Exact top `k_pi` of a partition by scanning all members.
pub fn exact_pi(q: &[f64], pi: PartitionBitmap, members: &[RecordId], ds: &Dataset, k_pi: usize) -> Result<Vec<Candidate>> {
    Ok(top_k(to_candidates(members, q, pi, ds)?, k_pi))
}

fn check_query(query: &Query, index: &FairIndex, ds: &Dataset) -> Result<()> {
    if query.vector.len() != ds.dim() {
        return Err(FairKnnError::Spec(format!(
            "query has dimension {}, dataset has {}",
            query.vector.len(),
            ds.dim()
        )));
    }
    query.spec.check_schema(index.schema())
}

/// Candidates for a query from every relevant partition, using the quota rule.
pub fn near_neighbor(
    query: &Query,
    index: &FairIndex,
    ds: &Dataset,
    opts: &RetrievalOptions,
    exec: Exec,
) -> Result<RetrievalReport> {
    near_neighbor_with(query, index, ds, exec, |pi| {
        Ok(opts.boosted(quota(pi, &query.spec, index.layout())?))
    })
}

/// Like [`near_neighbor`] with a caller-supplied per-partition quota.
pub fn near_neighbor_with<F>(query: &Query, index: &FairIndex, ds: &Dataset, exec: Exec, quota_of: F) -> Result<RetrievalReport>
where
    F: Fn(PartitionBitmap) -> Result<usize> + Sync,
{
    check_query(query, index, ds)?;
    let relevant = relevant_partitions(index.registry(), &query_mask(&query.spec, index.layout()));
    let parts = exec.map(&relevant, |&pi| -> Result<_> {
        let k_pi = quota_of(pi)?;
        let available = index.registry().members(pi).map_or(0, <[_]>::len);
        let Some(lsh) = index.partition(pi) else {
            return Ok((stat(pi, k_pi, 0, 0, available), Vec::new()));
        };
        let (cands, scanned) = near_pi(&query.vector, pi, lsh, ds, k_pi)?;
        Ok((stat(pi, k_pi, scanned, cands.len(), available), cands))
    });
    Ok(RetrievalReport::assemble(parts.into_iter().collect::<Result<_>>()?))
}

/// Exhaustive retrieval: exact top-`k_pi` of every relevant partition.
pub fn brute_force(
    query: &Query,
    registry: &PartitionRegistry,
    layout: &BitLayout,
    ds: &Dataset,
    exec: Exec,
) -> Result<RetrievalReport> {
    if query.vector.len() != ds.dim() {
        return Err(FairKnnError::Spec("query dimension does not match dataset".into()));
    }
    let relevant = relevant_partitions(registry, &query_mask(&query.spec, layout));
    let parts = exec.map(&relevant, |&pi| -> Result<_> {
        let k_pi = quota(pi, &query.spec, layout)?;
        let members = registry.members(pi).unwrap_or(&[]);
        let cands = exact_pi(&query.vector, pi, members, ds, k_pi)?;
        Ok((stat(pi, k_pi, members.len(), cands.len(), members.len()), cands))
    });
    Ok(RetrievalReport::assemble(parts.into_iter().collect::<Result<_>>()?))
}

fn stat(partition: PartitionBitmap, quota: usize, scanned: usize, achieved: usize, available: usize) -> PartitionStat {
    PartitionStat {
        partition,
        quota,
        scanned,
        achieved,
        available,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::read_csv;
    use crate::distance::DistanceKind;
    use crate::lsh::{LshParams, TableSizing};
    use crate::partition::encode_partition;
    use crate::types::{AttributeSchema, VectorRecord};

    const TABLE1: &str = include_str!("../tests/data/table1.csv");

    fn full_collision() -> LshParams {
        LshParams {
            w: 1e9,
            sizing: TableSizing::Fixed { mu: 1, ell: 2 },
            ..LshParams::default()
        }
    }

    #[test]
    fn quota_is_min_over_constrained_values() {
        let schema = AttributeSchema::from_names(&[
            ("gender", &["Male", "Female", "Non-binary"]),
            ("race", &["White", "Black", "Asian", "Hispanic", "Mixed", "Native American"]),
            ("age", &["<30", "30-50", ">50"]),
        ])
        .unwrap();
        let layout = BitLayout::new(&schema).unwrap();
        let spec = FairnessSpec::from_names(
            &schema,
            &[("gender", &[("Male", 2), ("Female", 1)]), ("race", &[("White", 1), ("Black", 2)])],
        )
        .unwrap();
        let pi = encode_partition(&[0, 0, 0], &layout).unwrap();
        assert_eq!(quota(pi, &spec, &layout).unwrap(), 1);
        let pi = encode_partition(&[0, 1, 2], &layout).unwrap();
        assert_eq!(quota(pi, &spec, &layout).unwrap(), 2);
        let irrelevant = encode_partition(&[2, 0, 0], &layout).unwrap();
        assert!(quota(irrelevant, &spec, &layout).is_err());

        let three = BitLayout::from_domain_sizes(&[2, 2, 2]).unwrap();
        let spec = FairnessSpec::from_pairs(6, &[(0, &[(0, 4), (1, 2)]), (1, &[(1, 2), (0, 4)]), (2, &[(1, 3), (0, 3)])])
            .unwrap();
        let pi = encode_partition(&[0, 1, 1], &three).unwrap();
        assert_eq!(quota(pi, &spec, &three).unwrap(), 2);
        let single = FairnessSpec::from_pairs(5, &[(1, &[(0, 5)])]).unwrap();
        assert_eq!(quota(encode_partition(&[1, 0, 1], &three).unwrap(), &single, &three).unwrap(), 5);
    }

    #[test]
    fn example_spec_over_table1() {
        let ds = read_csv(TABLE1.as_bytes(), DistanceKind::Euclidean).unwrap();
        let index = FairIndex::build(&ds, &full_collision(), Exec::Sequential).unwrap();
        let spec = FairnessSpec::from_names(
            ds.schema(),
            &[
                ("gender", &[("Male", 2), ("Female", 3)]),
                ("race", &[("Hispanic", 4), ("White", 1)]),
            ],
        )
        .unwrap();
        let query = Query::new(vec![0.0, 0.0], spec);
        let report = near_neighbor(&query, &index, &ds, &RetrievalOptions::default(), Exec::Sequential).unwrap();
        let mut ids: Vec<_> = report.candidates.iter().map(|c| c.id).collect();
        ids.sort();
        assert_eq!(ids, vec![1, 5, 6]);
        let achieved: usize = report.partitions.iter().map(|p| p.achieved).sum();
        assert_eq!(achieved, report.candidates.len());
        assert!(report.scanned >= report.candidates.len());

        let absent = FairnessSpec::from_names(ds.schema(), &[("race", &[("Indigenous", 1)]), ("age", &[("<30", 1)])])
            .unwrap();
        let report = near_neighbor(&Query::new(vec![0.0, 0.0], absent), &index, &ds, &RetrievalOptions::default(), Exec::Sequential)
            .unwrap();
        assert!(report.candidates.is_empty());
        assert!(report.partitions.is_empty());
    }

    fn single_partition(n: usize, seed: u64) -> Dataset {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let records = (0..n as u64)
            .map(|id| VectorRecord::new(id, (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(), vec![0]))
            .collect();
        Dataset::new(AttributeSchema::anonymous(&[1]).unwrap(), 3, DistanceKind::Euclidean, records).unwrap()
    }

    #[test]
    fn full_collision_matches_brute_force_top_k() {
        let ds = single_partition(25, 4);
        let index = FairIndex::build(&ds, &full_collision(), Exec::Sequential).unwrap();
        let (pi, members) = index.registry().iter().next().unwrap();
        let q = [0.1, -0.2, 0.3];
        let (got, scanned) = near_pi(&q, pi, index.partition(pi).unwrap(), &ds, 5).unwrap();
        assert_eq!(scanned, 25);
        let mut oracle: Vec<(f64, RecordId)> = members
            .iter()
            .map(|&id| (distance(ds.embedding(id), &q, DistanceKind::Euclidean).unwrap(), id))
            .collect();
        oracle.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: Vec<_> = oracle[..5].iter().map(|x| x.1).collect();
        assert_eq!(got.iter().map(|c| c.id).collect::<Vec<_>>(), want);
        assert!(got.windows(2).all(|w| w[0].dist <= w[1].dist));
    }

    #[test]
    fn exact_quota_partition_returns_everything_sorted() {
        let ds = single_partition(4, 9);
        let index = FairIndex::build(&ds, &full_collision(), Exec::Sequential).unwrap();
        let (pi, _) = index.registry().iter().next().unwrap();
        let (got, _) = near_pi(&[0.0; 3], pi, index.partition(pi).unwrap(), &ds, 4).unwrap();
        assert_eq!(got.len(), 4);
        assert!(got.windows(2).all(|w| by_distance(&w[0], &w[1]).is_lt()));
    }

    #[test]
    fn no_collisions_gives_empty_list() {
        let ds = single_partition(10, 1);
        let params = LshParams {
            w: 1e-6,
            sizing: TableSizing::Fixed { mu: 4, ell: 2 },
            ..LshParams::default()
        };
        let index = FairIndex::build(&ds, &params, Exec::Sequential).unwrap();
        let (pi, _) = index.registry().iter().next().unwrap();
        let (got, scanned) = near_pi(&[50.0, 50.0, 50.0], pi, index.partition(pi).unwrap(), &ds, 3).unwrap();
        assert!(got.is_empty());
        assert_eq!(scanned, 0);
    }

    #[test]
    fn brute_force_scans_all_relevant_members() {
        let ds = read_csv(TABLE1.as_bytes(), DistanceKind::Euclidean).unwrap();
        let index = FairIndex::build(&ds, &full_collision(), Exec::Sequential).unwrap();
        let spec = FairnessSpec::from_names(ds.schema(), &[("gender", &[("Male", 1), ("Female", 1)])]).unwrap();
        let q = Query::new(vec![0.5, 0.5], spec);
        let bf = brute_force(&q, index.registry(), index.layout(), &ds, Exec::Sequential).unwrap();
        assert_eq!(bf.relevant_size, 8);
        assert_eq!(bf.scanned, 8);
        assert_eq!(bf.scanned_fraction(), 1.0);
        let lsh = near_neighbor(&q, &index, &ds, &RetrievalOptions::default(), Exec::Parallel).unwrap();
        assert_eq!(lsh.candidates, bf.candidates);
    }

    #[test]
    fn quota_boost_rounds_up() {
        let o = RetrievalOptions { quota_boost: 1.5 };
        assert_eq!(o.boosted(3), 5);
        assert_eq!(RetrievalOptions::default().boosted(3), 3);
    }
}
