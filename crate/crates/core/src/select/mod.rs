//! Exact fair selection over a candidate pool.
//!
//! Given candidates with precomputed distances and a [`FairnessSpec`], pick
//! `k` candidates meeting every required count exactly at minimum total
//! distance. One constrained attribute is solved by per-value sorting, two by
//! min-cost flow, and three or more by branch-and-bound.

mod flow;
mod ilp;
mod oracle;
mod sort;
mod verify;

use serde::{Deserialize, Serialize};

use crate::error::{FairKnnError, Result};
use crate::retrieval::Candidate;
use crate::types::{FairnessSpec, RecordId, ValueIndex};

pub use flow::select_2attr;
pub use ilp::{select_3plus, DEFAULT_NODE_BUDGET};
pub use oracle::{oracle_enumerate, ORACLE_MAX_CANDIDATES};
pub use sort::select_1attr;
pub use verify::{check_selection, verify, Verification, Violation};

#[derive(Debug, Clone, Copy)]
pub struct SelectionProblem<'a> {
    pub candidates: &'a [Candidate],
    pub spec: &'a FairnessSpec,
}

impl<'a> SelectionProblem<'a> {
    pub fn new(candidates: &'a [Candidate], spec: &'a FairnessSpec) -> Self {
        Self { candidates, spec }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Sort,
    Flow,
    Ilp,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    /// `selected` is sorted by id; `cost` is summed in that order.
    Feasible { selected: Vec<RecordId>, cost: f64 },
    Infeasible,
    /// The branch-and-bound node budget ran out before optimality was proven.
    ResourceExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub status: Status,
    pub solver: Solver,
    /// Search nodes visited (branch-and-bound and oracle only).
    pub nodes: u64,
}

impl SelectionResult {
    pub fn is_feasible(&self) -> bool {
        matches!(self.status, Status::Feasible { .. })
    }

    pub fn selected(&self) -> Option<&[RecordId]> {
        match &self.status {
            Status::Feasible { selected, .. } => Some(selected),
            _ => None,
        }
    }

    pub fn cost(&self) -> Option<f64> {
        match self.status {
            Status::Feasible { cost, .. } => Some(cost),
            _ => None,
        }
    }

    fn infeasible(solver: Solver) -> Self {
        Self {
            status: Status::Infeasible,
            solver,
            nodes: 0,
        }
    }

    /// Feasible result from candidate positions.
    fn from_positions(p: &SelectionProblem, positions: &[usize], solver: Solver) -> Self {
        let mut chosen: Vec<&Candidate> = positions.iter().map(|&i| &p.candidates[i]).collect();
        chosen.sort_by_key(|c| c.id);
        Self {
            status: Status::Feasible {
                selected: chosen.iter().map(|c| c.id).collect(),
                cost: chosen.iter().map(|c| c.dist).sum(),
            },
            solver,
            nodes: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectOptions {
    /// Use branch-and-bound regardless of the constrained-attribute count.
    pub force_ilp: bool,
    pub node_budget: u64,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            force_ilp: false,
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

/// Runs the solver matching the number of constrained attributes.
pub fn select(p: &SelectionProblem, opts: &SelectOptions) -> Result<SelectionResult> {
    if opts.force_ilp {
        return select_3plus(p, opts.node_budget);
    }
    match p.spec.num_constrained() {
        1 => select_1attr(p),
        2 => select_2attr(p),
        _ => select_3plus(p, opts.node_budget),
    }
}

/// Dense indexing of the `(attribute, value)` pairs with a positive count.
///
/// Only candidates whose every constrained value is required are eligible;
/// they are listed in ascending `(dist, id)` order.
struct Groups {
    num_attrs: usize,
    /// Attribute position of each group.
    group_attr: Vec<usize>,
    need: Vec<usize>,
    /// Eligible candidate positions, cheapest first.
    eligible: Vec<usize>,
    /// Group of each eligible candidate per attribute position, row-major.
    membership: Vec<usize>,
}

impl Groups {
    fn new(p: &SelectionProblem) -> Result<Self> {
        let attrs: Vec<usize> = p.spec.constrained_attrs().collect();
        let mut group_attr = Vec::new();
        let mut need = Vec::new();
        let mut lookup: Vec<Vec<(ValueIndex, usize)>> = Vec::new();
        for (a, &j) in attrs.iter().enumerate() {
            let mut ids = Vec::new();
            for (&v, &c) in &p.spec.constraints()[&j] {
                ids.push((v, group_attr.len()));
                group_attr.push(a);
                need.push(c);
            }
            lookup.push(ids);
        }
        let max_attr = attrs.iter().copied().max().unwrap_or(0);
        let mut eligible = Vec::new();
        let mut membership = Vec::new();
        let mut order: Vec<usize> = (0..p.candidates.len()).collect();
        order.sort_by(|&a, &b| crate::retrieval::by_distance(&p.candidates[a], &p.candidates[b]));
        'cand: for i in order {
            let c = &p.candidates[i];
            if c.attrs.len() <= max_attr {
                return Err(FairKnnError::Record {
                    id: c.id,
                    reason: format!("candidate has {} attributes, spec needs {}", c.attrs.len(), max_attr + 1),
                });
            }
            let start = membership.len();
            for (a, &j) in attrs.iter().enumerate() {
                match lookup[a].iter().find(|&&(v, _)| v == c.attrs[j]) {
                    Some(&(_, g)) => membership.push(g),
                    None => {
                        membership.truncate(start);
                        continue 'cand;
                    }
                }
            }
            eligible.push(i);
        }
        Ok(Self {
            num_attrs: attrs.len(),
            group_attr,
            need,
            eligible,
            membership,
        })
    }

    fn groups_of(&self, e: usize) -> &[usize] {
        &self.membership[e * self.num_attrs..(e + 1) * self.num_attrs]
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::partition::PartitionBitmap;

    pub fn cand(id: RecordId, dist: f64, attrs: &[ValueIndex]) -> Candidate {
        Candidate {
            id,
            partition: PartitionBitmap(0),
            dist,
            attrs: attrs.to_vec(),
        }
    }

    /// Random instance over `domains`, every attribute constrained, with a
    /// spec that is feasible about three times in four.
    pub fn random_instance(seed: u64, domains: &[u32], max_c: usize, max_k: usize) -> (Vec<Candidate>, FairnessSpec) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=max_c);
        let cands: Vec<Candidate> = (0..n as u64)
            .map(|id| {
                let attrs: Vec<u32> = domains.iter().map(|&d| rng.random_range(0..d)).collect();
                // coarse distances so ties occur
                let dist = if rng.random_bool(0.3) {
                    rng.random_range(0..4) as f64 * 0.25
                } else {
                    rng.random_range(0.0..1.0)
                };
                cand(id * 3 + 1, dist, &attrs)
            })
            .collect();
        let k = rng.random_range(1..=max_k.min(n));
        let pairs: Vec<(usize, Vec<(u32, usize)>)> = if rng.random_bool(0.75) {
            // counts taken from a random k-subset
            let mut idx: Vec<usize> = (0..n).collect();
            for i in 0..k {
                let j = rng.random_range(i..n);
                idx.swap(i, j);
            }
            (0..domains.len())
                .map(|a| {
                    let mut counts = std::collections::BTreeMap::new();
                    for &i in &idx[..k] {
                        *counts.entry(cands[i].attrs[a]).or_insert(0) += 1;
                    }
                    (a, counts.into_iter().collect())
                })
                .collect()
        } else {
            (0..domains.len())
                .map(|a| {
                    let mut counts = vec![0usize; domains[a] as usize];
                    for _ in 0..k {
                        counts[rng.random_range(0..domains[a] as usize)] += 1;
                    }
                    (a, counts.into_iter().enumerate().map(|(v, c)| (v as u32, c)).collect())
                })
                .collect()
        };
        let borrowed: Vec<(usize, &[(u32, usize)])> = pairs.iter().map(|(a, c)| (*a, c.as_slice())).collect();
        (cands, FairnessSpec::from_pairs(k, &borrowed).unwrap())
    }
}
