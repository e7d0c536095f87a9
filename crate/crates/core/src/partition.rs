//! Intersectional partitions encoded as fixed-layout bitmaps.
//!
//! Each attribute `j` owns a field of `ceil(log2(|V_j| + 1))` bits. Value `v`
//! is stored as the code `v + 1`; the all-zeros code marks an absent
//! (unconstrained) attribute. The first attribute occupies the most
//! significant field, so `(Female, Hispanic, 30-50)` over domains of sizes
//! 3, 6 and 3 encodes as `10|011|10`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{FairKnnError, Result};
use crate::types::{AttributeSchema, FairnessSpec, RecordId, ValueIndex, VectorRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitLayout {
    sizes: Vec<usize>,
    widths: Vec<u32>,
    offsets: Vec<u32>,
    total: u32,
}

impl BitLayout {
    pub fn new(schema: &AttributeSchema) -> Result<Self> {
        Self::from_domain_sizes(&schema.domain_sizes())
    }

    pub fn from_domain_sizes(sizes: &[usize]) -> Result<Self> {
        if sizes.contains(&0) {
            return Err(FairKnnError::Schema("empty attribute domain".into()));
        }
        let widths: Vec<u32> = sizes.iter().map(|&s| usize::BITS - s.leading_zeros()).collect();
        let total: u32 = widths.iter().sum();
        if total > 64 {
            return Err(FairKnnError::LayoutTooWide { bits: total });
        }
        let mut offsets = Vec::with_capacity(widths.len());
        let mut used = 0;
        for &w in &widths {
            used += w;
            offsets.push(total - used);
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            widths,
            offsets,
            total,
        })
    }

    pub fn num_attrs(&self) -> usize {
        self.sizes.len()
    }

    pub fn width(&self, attr: usize) -> u32 {
        self.widths[attr]
    }

    pub fn offset(&self, attr: usize) -> u32 {
        self.offsets[attr]
    }

    pub fn total_bits(&self) -> u32 {
        self.total
    }

    pub fn domain_size(&self, attr: usize) -> usize {
        self.sizes[attr]
    }

    /// All bits of field `attr` set.
    pub fn field_mask(&self, attr: usize) -> u64 {
        low_bits(self.widths[attr]) << self.offsets[attr]
    }

    fn field(&self, bits: u64, attr: usize) -> u64 {
        (bits >> self.offsets[attr]) & low_bits(self.widths[attr])
    }

    fn with_code(&self, attr: usize, value: ValueIndex) -> Result<u64> {
        if value as usize >= self.sizes[attr] {
            return Err(FairKnnError::ValueOutOfDomain {
                attr,
                value,
                size: self.sizes[attr],
            });
        }
        Ok((value as u64 + 1) << self.offsets[attr])
    }
}

fn low_bits(w: u32) -> u64 {
    if w >= 64 {
        u64::MAX
    } else {
        (1u64 << w) - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PartitionBitmap(pub u64);

impl PartitionBitmap {
    pub fn bits(self) -> u64 {
        self.0
    }

    /// Fields rendered in binary and separated by `|`.
    pub fn to_field_string(self, layout: &BitLayout) -> String {
        (0..layout.num_attrs())
            .map(|j| {
                format!(
                    "{:0width$b}",
                    layout.field(self.0, j),
                    width = layout.width(j) as usize
                )
            })
            .collect::<Vec<_>>()
            .join("|")
    }
}

impl fmt::Display for PartitionBitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#b}", self.0)
    }
}

/// Encodes a fully specified attribute tuple.
pub fn encode_partition(attrs: &[ValueIndex], layout: &BitLayout) -> Result<PartitionBitmap> {
    assert_eq!(attrs.len(), layout.num_attrs(), "attribute count mismatch");
    let mut bits = 0;
    for (j, &v) in attrs.iter().enumerate() {
        bits |= layout.with_code(j, v)?;
    }
    Ok(PartitionBitmap(bits))
}

/// Decodes a bitmap into per-attribute values; `None` marks an absent field.
pub fn decode_partition(b: PartitionBitmap, layout: &BitLayout) -> Result<Vec<Option<ValueIndex>>> {
    if layout.total < 64 && b.0 >> layout.total != 0 {
        return Err(FairKnnError::Format(format!(
            "bitmap {:#b} has bits beyond the {}-bit layout",
            b.0, layout.total
        )));
    }
    (0..layout.num_attrs())
        .map(|j| {
            let code = layout.field(b.0, j);
            if code == 0 {
                Ok(None)
            } else if code as usize > layout.sizes[j] {
                Err(FairKnnError::MalformedBitmap {
                    bits: b.0,
                    attr: j,
                    code,
                    size: layout.sizes[j],
                })
            } else {
                Ok(Some((code - 1) as ValueIndex))
            }
        })
        .collect()
}

/// Decodes a bitmap whose fields are all present.
pub fn decode_full(b: PartitionBitmap, layout: &BitLayout) -> Result<Vec<ValueIndex>> {
    decode_partition(b, layout)?
        .into_iter()
        .enumerate()
        .map(|(j, v)| {
            v.ok_or_else(|| FairKnnError::Format(format!("bitmap {b} has no value for attribute {j}")))
        })
        .collect()
}

/// Non-empty partitions and their member record ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionRegistry {
    partitions: BTreeMap<PartitionBitmap, Vec<RecordId>>,
}

impl PartitionRegistry {
    pub fn from_map(partitions: BTreeMap<PartitionBitmap, Vec<RecordId>>) -> Self {
        Self {
            partitions: partitions.into_iter().filter(|(_, m)| !m.is_empty()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }

    pub fn members(&self, b: PartitionBitmap) -> Option<&[RecordId]> {
        self.partitions.get(&b).map(Vec::as_slice)
    }

    /// Partitions in ascending bitmap order.
    pub fn iter(&self) -> impl Iterator<Item = (PartitionBitmap, &[RecordId])> {
        self.partitions.iter().map(|(b, m)| (*b, m.as_slice()))
    }

    pub fn total_members(&self) -> usize {
        self.partitions.values().map(Vec::len).sum()
    }
}

pub fn build_registry<'a, I>(records: I, layout: &BitLayout) -> Result<PartitionRegistry>
where
    I: IntoIterator<Item = &'a VectorRecord>,
{
    let mut partitions: BTreeMap<PartitionBitmap, Vec<RecordId>> = BTreeMap::new();
    for r in records {
        let b = encode_partition(&r.attrs, layout)?;
        partitions.entry(b).or_default().push(r.id);
    }
    Ok(PartitionRegistry { partitions })
}

/// Attribute mask plus one bitmap per combination of required values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryMask {
    pub mask: u64,
    pub bitmaps: Vec<u64>,
}

pub fn query_mask(spec: &FairnessSpec, layout: &BitLayout) -> QueryMask {
    let mut mask = 0;
    let mut bitmaps = vec![0u64];
    for (&attr, counts) in spec.constraints() {
        mask |= layout.field_mask(attr);
        let codes: Vec<u64> = counts
            .keys()
            .map(|&v| layout.with_code(attr, v).expect("spec value outside layout"))
            .collect();
        bitmaps = bitmaps
            .iter()
            .flat_map(|&b| codes.iter().map(move |&c| b | c))
            .collect();
    }
    QueryMask { mask, bitmaps }
}

/// Partitions whose masked bitmap equals some query bitmap, ascending.
pub fn relevant_partitions(reg: &PartitionRegistry, qm: &QueryMask) -> Vec<PartitionBitmap> {
    relevant_partitions_counted(reg, qm).0
}

/// Same as [`relevant_partitions`], also returning the number of bitmap comparisons.
pub fn relevant_partitions_counted(
    reg: &PartitionRegistry,
    qm: &QueryMask,
) -> (Vec<PartitionBitmap>, usize) {
    let mut comparisons = 0;
    let mut out = Vec::new();
    for (b, _) in reg.iter() {
        let masked = b.0 & qm.mask;
        let mut hit = false;
        for &q in &qm.bitmaps {
            comparisons += 1;
            hit |= masked ^ q == 0;
        }
        if hit {
            out.push(b);
        }
    }
    (out, comparisons)
}
