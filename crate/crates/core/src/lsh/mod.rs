//! Per-partition LSH indexes.
//!
//! Every partition owns `ell` hash tables keyed by `mu`-fold compound hashes.
//! A probe gathers the query's bucket from each table in table order and
//! keeps the first `cap` distinct ids it meets.

mod family;
mod params;

use std::collections::{HashMap, HashSet};
use std::hash::{BuildHasherDefault, DefaultHasher};


pub use family::{CompoundKey, FamilyKind, HashFamily};
pub use params::{
    angular_collision_probability, derive_params, false_positive_surplus, pstable_collision_probability,
    DerivedParams, LshParams, TableSizing, DEFAULT_ELL_MAX,
};

use crate::error::Result;
use crate::types::RecordId;

/// Fixed-key hasher so bucket iteration order depends only on the inserts.
pub(crate) type StableBuildHasher = BuildHasherDefault<DefaultHasher>;
pub(crate) type Bucket = HashMap<CompoundKey, Vec<RecordId>, StableBuildHasher>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LshTables {
    tables: Vec<Bucket>,
}

impl LshTables {
    pub(crate) fn from_tables(tables: Vec<Bucket>) -> Self {
        Self { tables }
    }

    pub fn num_tables(&self) -> usize {
        self.tables.len()
    }

    pub fn table(&self, j: usize) -> &HashMap<CompoundKey, Vec<RecordId>, StableBuildHasher> {
        &self.tables[j]
    }

    /// Total stored ids over all tables (`ell * n_pi` after a build).
    pub fn entry_count(&self) -> usize {
        self.tables
            .iter()
            .map(|t| t.values().map(Vec::len).sum::<usize>())
            .sum()
    }

    pub fn bucket_count(&self) -> usize {
        self.tables.iter().map(HashMap::len).sum()
    }

    /// Distinct ids colliding with `q` in any table.
    pub fn probe(&self, q: &[f64], family: &HashFamily) -> Vec<RecordId> {
        self.probe_capped(q, family, usize::MAX)
    }

    /// Like [`probe`](Self::probe) but stops after `cap` distinct ids,
    /// keeping them in table order then bucket order.
    pub fn probe_capped(&self, q: &[f64], family: &HashFamily, cap: usize) -> Vec<RecordId> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        if cap == 0 {
            return out;
        }
        for (j, table) in self.tables.iter().enumerate() {
            let Some(bucket) = table.get(&family.compound_hash(q, j)) else {
                continue;
            };
            for &id in bucket {
                if seen.insert(id) {
                    out.push(id);
                    if out.len() == cap {
                        return out;
                    }
                }
            }
        }
        out
    }
}

/// Inserts every member into one bucket of each of the family's tables.
pub fn build_partition_index<'a, F>(members: &[RecordId], embedding: F, family: &HashFamily) -> LshTables
where
    F: Fn(RecordId) -> &'a [f64],
{
    let mut tables: Vec<Bucket> = (0..family.ell()).map(|_| Bucket::default()).collect();
    for &id in members {
        let x = embedding(id);
        for (j, table) in tables.iter_mut().enumerate() {
            table.entry(family.compound_hash(x, j)).or_default().push(id);
        }
    }
    LshTables { tables }
}

/// A partition's hash family, its tables and the resolved table layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionLsh {
    pub family: HashFamily,
    pub tables: LshTables,
    pub params: DerivedParams,
}

impl PartitionLsh {
    pub fn build<'a, F>(
        members: &[RecordId],
        embedding: F,
        dim: usize,
        params: &LshParams,
        kind: FamilyKind,
        seed: u64,
    ) -> Result<Self>
    where
        F: Fn(RecordId) -> &'a [f64],
    {
        let resolved = params.resolve(members.len().max(1), kind)?;
        let family = HashFamily::sample(kind, dim, resolved.mu, resolved.ell, params.w, seed)?;
        let tables = build_partition_index(members, embedding, &family);
        Ok(Self {
            family,
            tables,
            params: resolved,
        })
    }

    pub fn probe_capped(&self, q: &[f64], cap: usize) -> Vec<RecordId> {
        self.tables.probe_capped(q, &self.family, cap)
    }
}

/// SplitMix64 finaliser, used to derive independent per-partition seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
