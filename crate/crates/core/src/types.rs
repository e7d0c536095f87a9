//! Domain types shared across the crate.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{FairKnnError, Result};

pub type RecordId = u64;

/// Index into one attribute's value domain.
pub type ValueIndex = u32;

/// An embedding together with its protected-attribute values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorRecord {
    pub id: RecordId,
    pub embedding: Vec<f64>,
    pub attrs: Vec<ValueIndex>,
}

impl VectorRecord {
    pub fn new(id: RecordId, embedding: Vec<f64>, attrs: Vec<ValueIndex>) -> Self {
        Self {
            id,
            embedding,
            attrs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub values: Vec<String>,
}

/// Ordered protected attributes, each with an ordered value domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    attributes: Vec<Attribute>,
}

impl AttributeSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        let mut names = HashSet::new();
        for attr in &attributes {
            if !names.insert(attr.name.as_str()) {
                return Err(FairKnnError::Schema(format!(
                    "duplicate attribute name {:?}",
                    attr.name
                )));
            }
            if attr.values.is_empty() {
                return Err(FairKnnError::Schema(format!(
                    "attribute {:?} has an empty domain",
                    attr.name
                )));
            }
            let mut seen = HashSet::new();
            for v in &attr.values {
                if !seen.insert(v.as_str()) {
                    return Err(FairKnnError::Schema(format!(
                        "duplicate value {:?} in attribute {:?}",
                        v, attr.name
                    )));
                }
            }
        }
        Ok(Self { attributes })
    }

    /// Convenience constructor from string slices.
    pub fn from_names(spec: &[(&str, &[&str])]) -> Result<Self> {
        Self::new(
            spec.iter()
                .map(|(name, values)| Attribute {
                    name: name.to_string(),
                    values: values.iter().map(|v| v.to_string()).collect(),
                })
                .collect(),
        )
    }

    /// Schema with generated names `a{j}` / `v{i}` for the given domain sizes.
    pub fn anonymous(domain_sizes: &[usize]) -> Result<Self> {
        Self::new(
            domain_sizes
                .iter()
                .enumerate()
                .map(|(j, &size)| Attribute {
                    name: format!("a{j}"),
                    values: (0..size).map(|i| format!("v{i}")).collect(),
                })
                .collect(),
        )
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn domain_size(&self, attr: usize) -> usize {
        self.attributes[attr].values.len()
    }

    pub fn domain_sizes(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.values.len()).collect()
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn value_index(&self, attr: usize, name: &str) -> Option<ValueIndex> {
        self.attributes[attr]
            .values
            .iter()
            .position(|v| v == name)
            .map(|i| i as ValueIndex)
    }

    pub fn check_attrs(&self, attrs: &[ValueIndex]) -> Result<()> {
        if attrs.len() != self.len() {
            return Err(FairKnnError::Schema(format!(
                "expected {} attribute values, got {}",
                self.len(),
                attrs.len()
            )));
        }
        for (j, &v) in attrs.iter().enumerate() {
            if v as usize >= self.domain_size(j) {
                return Err(FairKnnError::ValueOutOfDomain {
                    attr: j,
                    value: v,
                    size: self.domain_size(j),
                });
            }
        }
        Ok(())
    }
}

/// Required per-value counts for each constrained attribute.
///
/// Zero counts are not stored; an attribute key may still map to an empty
/// value set, which only makes sense for `k = 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub struct FairnessSpec {
    k: usize,
    constraints: BTreeMap<usize, BTreeMap<ValueIndex, usize>>,
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    k: usize,
    constraints: BTreeMap<usize, BTreeMap<ValueIndex, usize>>,
}

impl TryFrom<SpecRepr> for FairnessSpec {
    type Error = FairKnnError;

    fn try_from(r: SpecRepr) -> Result<Self> {
        Self::new(r.k, r.constraints)
    }
}

impl From<FairnessSpec> for SpecRepr {
    fn from(s: FairnessSpec) -> Self {
        Self {
            k: s.k,
            constraints: s.constraints,
        }
    }
}

impl FairnessSpec {
    pub fn new(k: usize, constraints: BTreeMap<usize, BTreeMap<ValueIndex, usize>>) -> Result<Self> {
        if constraints.is_empty() {
            return Err(FairKnnError::Spec(
                "at least one attribute must be constrained".into(),
            ));
        }
        let mut normalized = BTreeMap::new();
        for (attr, counts) in constraints {
            let total: usize = counts.values().sum();
            if total != k {
                return Err(FairKnnError::Spec(format!(
                    "counts for attribute {attr} sum to {total}, expected k = {k}"
                )));
            }
            let counts: BTreeMap<_, _> = counts.into_iter().filter(|&(_, c)| c > 0).collect();
            normalized.insert(attr, counts);
        }
        Ok(Self {
            k,
            constraints: normalized,
        })
    }

    /// Builds a spec from `(attribute index, [(value index, count)])` pairs.
    pub fn from_pairs(k: usize, pairs: &[(usize, &[(ValueIndex, usize)])]) -> Result<Self> {
        let mut constraints = BTreeMap::new();
        for (attr, counts) in pairs {
            let entry: &mut BTreeMap<ValueIndex, usize> = constraints.entry(*attr).or_default();
            for &(v, c) in counts.iter() {
                *entry.entry(v).or_default() += c;
            }
        }
        Self::new(k, constraints)
    }

    /// Builds a spec from attribute and value names; `k` is taken from the first attribute.
    pub fn from_names(schema: &AttributeSchema, pairs: &[(&str, &[(&str, usize)])]) -> Result<Self> {
        let mut constraints = BTreeMap::new();
        let mut k = None;
        for (attr_name, counts) in pairs {
            let attr = schema
                .attr_index(attr_name)
                .ok_or_else(|| FairKnnError::Spec(format!("unknown attribute {attr_name:?}")))?;
            let mut entry = BTreeMap::new();
            for (value_name, count) in counts.iter() {
                let v = schema.value_index(attr, value_name).ok_or_else(|| {
                    FairKnnError::Spec(format!("unknown value {value_name:?} for {attr_name:?}"))
                })?;
                entry.insert(v, *count);
            }
            k.get_or_insert(entry.values().sum::<usize>());
            constraints.insert(attr, entry);
        }
        let spec = Self::new(k.unwrap_or(0), constraints)?;
        spec.check_schema(schema)?;
        Ok(spec)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn constraints(&self) -> &BTreeMap<usize, BTreeMap<ValueIndex, usize>> {
        &self.constraints
    }

    pub fn constrained_attrs(&self) -> impl Iterator<Item = usize> + '_ {
        self.constraints.keys().copied()
    }

    pub fn num_constrained(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_constrained(&self, attr: usize) -> bool {
        self.constraints.contains_key(&attr)
    }

    /// Required count for `(attr, value)`; zero when not required.
    pub fn count(&self, attr: usize, value: ValueIndex) -> usize {
        self.constraints
            .get(&attr)
            .and_then(|c| c.get(&value))
            .copied()
            .unwrap_or(0)
    }

    /// True when a record with these attribute values may appear in a result.
    pub fn admits(&self, attrs: &[ValueIndex]) -> bool {
        self.constraints
            .keys()
            .all(|&j| self.count(j, attrs[j]) > 0)
    }

    pub fn check_schema(&self, schema: &AttributeSchema) -> Result<()> {
        for (&attr, counts) in &self.constraints {
            if attr >= schema.len() {
                return Err(FairKnnError::Spec(format!(
                    "attribute index {attr} outside schema of {} attributes",
                    schema.len()
                )));
            }
            for &v in counts.keys() {
                if v as usize >= schema.domain_size(attr) {
                    return Err(FairKnnError::ValueOutOfDomain {
                        attr,
                        value: v,
                        size: schema.domain_size(attr),
                    });
                }
            }
        }
        Ok(())
    }

    /// Renders the spec as `attr: value=count, ...; attr: ...` using schema names.
    pub fn display<'a>(&'a self, schema: &'a AttributeSchema) -> SpecDisplay<'a> {
        SpecDisplay { spec: self, schema }
    }
}

pub struct SpecDisplay<'a> {
    spec: &'a FairnessSpec,
    schema: &'a AttributeSchema,
}

impl fmt::Display for SpecDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (&attr, counts)) in self.spec.constraints.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            let a = &self.schema.attributes()[attr];
            write!(f, "{}:", a.name)?;
            for (n, (&v, c)) in counts.iter().enumerate() {
                let sep = if n == 0 { " " } else { ", " };
                write!(f, "{sep}{}={c}", a.values[v as usize])?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub vector: Vec<f64>,
    pub spec: FairnessSpec,
}

impl Query {
    pub fn new(vector: Vec<f64>, spec: FairnessSpec) -> Self {
        Self { vector, spec }
    }
}
