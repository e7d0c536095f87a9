use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{SelectionProblem, SelectionResult, Status};
use crate::types::{AttributeSchema, FairnessSpec, RecordId, ValueIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    WrongSize { expected: usize, got: usize },
    Count { attr: usize, value: ValueIndex, expected: usize, got: usize },
    UnknownId { id: RecordId },
    DuplicateId { id: RecordId },
    Cost { reported: f64, recomputed: f64 },
}

impl Violation {
    /// Human-readable form using schema names.
    pub fn describe(&self, schema: &AttributeSchema) -> String {
        match *self {
            Violation::Count {
                attr,
                value,
                expected,
                got,
            } => {
                let a = &schema.attributes()[attr];
                let v = a.values.get(value as usize).map_or("?", String::as_str);
                format!("({}, {}, expected {expected}, got {got})", a.name, v)
            }
            ref other => other.to_string(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WrongSize { expected, got } => write!(f, "selected {got} records, expected {expected}"),
            Violation::Count {
                attr,
                value,
                expected,
                got,
            } => write!(f, "(attribute {attr}, value {value}, expected {expected}, got {got})"),
            Violation::UnknownId { id } => write!(f, "record {id} is not a candidate"),
            Violation::DuplicateId { id } => write!(f, "record {id} selected twice"),
            Violation::Cost { reported, recomputed } => {
                write!(f, "reported cost {reported} but selection sums to {recomputed}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Verification {
    pub violations: Vec<Violation>,
}

impl Verification {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Recounts a selection against a spec from scratch.
///
/// `lookup` maps an id to its distance and attribute values. The cost is
/// re-summed in ascending id order and compared at relative tolerance 1e-9.
pub fn check_selection<'a, F>(selected: &[RecordId], reported_cost: Option<f64>, spec: &FairnessSpec, lookup: F) -> Verification
where
    F: Fn(RecordId) -> Option<(f64, &'a [ValueIndex])>,
{
    let mut violations = Vec::new();
    if selected.len() != spec.k() {
        violations.push(Violation::WrongSize {
            expected: spec.k(),
            got: selected.len(),
        });
    }
    let mut ids: Vec<RecordId> = selected.to_vec();
    ids.sort_unstable();
    let mut seen = HashSet::new();
    let mut counts: BTreeMap<(usize, ValueIndex), usize> = BTreeMap::new();
    let mut cost = 0.0;
    for &id in &ids {
        if !seen.insert(id) {
            violations.push(Violation::DuplicateId { id });
            continue;
        }
        let Some((dist, attrs)) = lookup(id) else {
            violations.push(Violation::UnknownId { id });
            continue;
        };
        cost += dist;
        for j in spec.constrained_attrs() {
            if let Some(&v) = attrs.get(j) {
                *counts.entry((j, v)).or_default() += 1;
            }
        }
    }
    let mut keys: Vec<(usize, ValueIndex)> = counts.keys().copied().collect();
    for (&j, values) in spec.constraints() {
        keys.extend(values.keys().map(|&v| (j, v)));
    }
    keys.sort_unstable();
    keys.dedup();
    for (attr, value) in keys {
        let expected = spec.count(attr, value);
        let got = counts.get(&(attr, value)).copied().unwrap_or(0);
        if expected != got {
            violations.push(Violation::Count {
                attr,
                value,
                expected,
                got,
            });
        }
    }
    if let Some(reported) = reported_cost {
        if (reported - cost).abs() > 1e-9 * reported.abs().max(1.0) {
            violations.push(Violation::Cost {
                reported,
                recomputed: cost,
            });
        }
    }
    Verification { violations }
}

/// Checks a solver result against its problem. Non-feasible results pass.
pub fn verify(result: &SelectionResult, p: &SelectionProblem) -> Verification {
    let Status::Feasible { selected, cost } = &result.status else {
        return Verification::default();
    };
    let by_id: std::collections::HashMap<RecordId, (f64, &[ValueIndex])> =
        p.candidates.iter().map(|c| (c.id, (c.dist, c.attrs.as_slice()))).collect();
    check_selection(selected, Some(*cost), p.spec, |id| by_id.get(&id).copied())
}
