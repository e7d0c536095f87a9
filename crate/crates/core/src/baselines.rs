//! Baseline retrieval strategies: per-attribute indexes with intersection
//! (SAIR) and quotas from the product of marginal proportions (JIR).

use std::collections::{BTreeMap, HashMap};

use crate::dataset::Dataset;
use crate::error::Result;
use crate::exec::Exec;
use crate::index::FairIndex;
use crate::lsh::{mix_seed, FamilyKind, LshParams, PartitionLsh};
use crate::partition::{decode_full, encode_partition, query_mask, relevant_partitions, BitLayout, PartitionBitmap};
use crate::retrieval::{by_distance, near_neighbor_with, Candidate, PartitionStat, RetrievalReport};
use crate::types::{FairnessSpec, Query, RecordId, ValueIndex};

/// One LSH index per `(attribute, value)` group; each record is indexed once
/// per attribute.
#[derive(Debug, Clone)]
pub struct SairIndex {
    groups: BTreeMap<(usize, ValueIndex), (Vec<RecordId>, PartitionLsh)>,
}

impl SairIndex {
    pub fn build(ds: &Dataset, params: &LshParams, exec: Exec) -> Result<Self> {
        let kind = FamilyKind::for_distance(ds.distance())?;
        let mut members: BTreeMap<(usize, ValueIndex), Vec<RecordId>> = BTreeMap::new();
        for r in ds.records() {
            for (j, &v) in r.attrs.iter().enumerate() {
                members.entry((j, v)).or_default().push(r.id);
            }
        }
        let keyed: Vec<_> = members.into_iter().collect();
        let built = exec.map(&keyed, |((j, v), ids)| {
            let salt = ((*j as u64) << 32) | *v as u64;
            PartitionLsh::build(ids, |id| ds.embedding(id), ds.dim(), params, kind, mix_seed(params.seed ^ 0x5A1E, salt))
                .map(|lsh| ((*j, *v), (ids.clone(), lsh)))
        });
        Ok(Self {
            groups: built.into_iter().collect::<Result<_>>()?,
        })
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Total stored ids over all groups and tables.
    pub fn total_entries(&self) -> usize {
        self.groups.values().map(|(_, l)| l.tables.entry_count()).sum()
    }
}

/// Retrieves `k` per required value of every constrained attribute and keeps
/// the records found under all of their constrained values.
pub fn sair_retrieve(query: &Query, sair: &SairIndex, index: &FairIndex, ds: &Dataset) -> Result<RetrievalReport> {
    let spec = &query.spec;
    let k = spec.k();
    let mut hits: HashMap<RecordId, (usize, f64)> = HashMap::new();
    let mut partitions = Vec::new();
    let mut scanned = 0;
    for (&j, values) in spec.constraints() {
        for &v in values.keys() {
            let Some((ids, lsh)) = sair.groups.get(&(j, v)) else {
                continue;
            };
            let probed = lsh.probe_capped(&query.vector, lsh.params.candidate_cap(k));
            scanned += probed.len();
            let mut ranked: Vec<(f64, RecordId)> = probed
                .iter()
                .map(|&id| Ok((crate::distance::distance(ds.embedding(id), &query.vector, ds.distance())?, id)))
                .collect::<Result<_>>()?;
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            ranked.truncate(k);
            partitions.push(PartitionStat {
                partition: PartitionBitmap(0),
                quota: k,
                scanned: probed.len(),
                achieved: ranked.len(),
                available: ids.len(),
            });
            for (d, id) in ranked {
                hits.entry(id).or_insert((0, d)).0 += 1;
            }
        }
    }
    let needed = spec.num_constrained();
    let mut candidates: Vec<Candidate> = hits
        .into_iter()
        .filter(|&(_, (n, _))| n == needed)
        .map(|(id, (_, dist))| {
            let attrs = ds.get(id).expect("indexed id").attrs.clone();
            Ok(Candidate {
                id,
                partition: encode_partition(&attrs, index.layout())?,
                dist,
                attrs,
            })
        })
        .collect::<Result<_>>()?;
    candidates.sort_by(by_distance);
    let relevant_size = relevant_partitions(index.registry(), &query_mask(spec, index.layout()))
        .iter()
        .map(|&pi| index.registry().members(pi).map_or(0, <[_]>::len))
        .sum();
    Ok(RetrievalReport {
        candidates,
        partitions,
        scanned,
        relevant_size,
    })
}

/// `ceil(k * prod_j prop_j(v_j))` over the constrained attributes.
pub fn jir_quota(pi: PartitionBitmap, spec: &FairnessSpec, layout: &BitLayout, marginals: &[Vec<f64>]) -> Result<usize> {
    let attrs = decode_full(pi, layout)?;
    let share: f64 = spec
        .constrained_attrs()
        .map(|j| marginals[j][attrs[j] as usize])
        .product();
    Ok((spec.k() as f64 * share - 1e-9).ceil().max(0.0) as usize)
}

/// Main-pipeline retrieval with JIR quotas.
pub fn jir_retrieve(
    query: &Query,
    index: &FairIndex,
    ds: &Dataset,
    marginals: &[Vec<f64>],
    exec: Exec,
) -> Result<RetrievalReport> {
    near_neighbor_with(query, index, ds, exec, |pi| jir_quota(pi, &query.spec, index.layout(), marginals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{gen_synthetic, SyntheticConfig};
    use crate::lsh::TableSizing;
    use crate::retrieval::{near_neighbor, RetrievalOptions};
    use crate::select::{select, select_1attr, SelectOptions, SelectionProblem};

    #[test]
    fn quota_arithmetic() {
        let layout = BitLayout::from_domain_sizes(&[2, 2, 3]).unwrap();
        let marginals = vec![vec![0.5, 0.5], vec![0.6, 0.4], vec![0.2, 0.3, 0.5]];
        let spec = FairnessSpec::from_pairs(10, &[(0, &[(0, 5), (1, 5)]), (1, &[(0, 5), (1, 5)])]).unwrap();
        let pi = encode_partition(&[1, 1, 2], &layout).unwrap();
        assert_eq!(jir_quota(pi, &spec, &layout, &marginals).unwrap(), 2);
        let pi = encode_partition(&[0, 0, 0], &layout).unwrap();
        assert_eq!(jir_quota(pi, &spec, &layout, &marginals).unwrap(), 3);
    }

    #[test]
    fn uniform_attributes_give_even_quotas() {
        let ds = gen_synthetic(&SyntheticConfig {
            n_total: 4000,
            tight_size: 0,
            domain_sizes: vec![2, 2],
            ..SyntheticConfig::default()
        })
        .unwrap();
        let m = ds.marginals();
        let layout = BitLayout::new(ds.schema()).unwrap();
        let spec = FairnessSpec::from_pairs(8, &[(0, &[(0, 4), (1, 4)]), (1, &[(0, 4), (1, 4)])]).unwrap();
        let quotas: Vec<usize> = [[0, 0], [0, 1], [1, 0], [1, 1]]
            .iter()
            .map(|a| jir_quota(encode_partition(a, &layout).unwrap(), &spec, &layout, &m).unwrap())
            .collect();
        assert!(quotas.iter().all(|&q| q == 2 || q == 3), "{quotas:?}");
    }

    #[test]
    fn sair_single_attribute_matches_sort() {
        let ds = gen_synthetic(&SyntheticConfig {
            n_total: 600,
            tight_size: 30,
            dim: 4,
            domain_sizes: vec![3, 2],
            ..SyntheticConfig::default()
        })
        .unwrap();
        let params = LshParams {
            w: 1e9,
            sizing: TableSizing::Fixed { mu: 1, ell: 1 },
            delta: 0.001,
            ..LshParams::default()
        };
        let index = FairIndex::build(&ds, &params, Exec::Sequential).unwrap();
        let sair = SairIndex::build(&ds, &params, Exec::Sequential).unwrap();
        assert_eq!(sair.num_groups(), 5);
        assert_eq!(sair.total_entries(), 2 * ds.len());
        let spec = FairnessSpec::from_pairs(5, &[(0, &[(0, 2), (1, 1), (2, 2)])]).unwrap();
        let q = Query::new(vec![0.1, 0.0, -0.2, 0.3], spec);
        let a = sair_retrieve(&q, &sair, &index, &ds).unwrap();
        let b = near_neighbor(&q, &index, &ds, &RetrievalOptions::default(), Exec::Sequential).unwrap();
        let ra = select_1attr(&SelectionProblem::new(&a.candidates, &q.spec)).unwrap();
        let rb = select(&SelectionProblem::new(&b.candidates, &q.spec), &SelectOptions::default()).unwrap();
        assert_eq!(ra.selected(), rb.selected());
        assert_eq!(ra.cost(), rb.cost());
        assert_eq!(a.relevant_size, b.relevant_size);
    }
}
