use super::{SelectionProblem, SelectionResult, Solver, Status};
use crate::error::{FairKnnError, Result};
use crate::types::RecordId;

pub const ORACLE_MAX_CANDIDATES: usize = 24;

struct Enumeration<'a> {
    p: &'a SelectionProblem<'a>,
    attrs: Vec<usize>,
    /// Remaining count per constrained attribute and value, indexed by value.
    rem: Vec<Vec<usize>>,
    stack: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
    nodes: u64,
}

impl Enumeration<'_> {
    fn fits(&self, i: usize) -> bool {
        let c = &self.p.candidates[i];
        self.attrs
            .iter()
            .enumerate()
            .all(|(a, &j)| self.rem[a].get(c.attrs[j] as usize).is_some_and(|&r| r > 0))
    }

    fn apply(&mut self, i: usize, add: bool) {
        let c = &self.p.candidates[i];
        for (a, &j) in self.attrs.iter().enumerate() {
            let r = &mut self.rem[a][c.attrs[j] as usize];
            if add {
                *r -= 1;
            } else {
                *r += 1;
            }
        }
    }

    fn walk(&mut self, start: usize, left: usize) {
        self.nodes += 1;
        if left == 0 {
            let cost = ordered_cost(self.p, &self.stack);
            if self.best.as_ref().is_none_or(|(b, _)| cost < *b) {
                self.best = Some((cost, self.stack.clone()));
            }
            return;
        }
        let n = self.p.candidates.len();
        for i in start..n {
            if n - i < left {
                break;
            }
            if !self.fits(i) {
                continue;
            }
            self.apply(i, true);
            self.stack.push(i);
            self.walk(i + 1, left - 1);
            self.stack.pop();
            self.apply(i, false);
        }
    }
}

/// Cost summed in ascending id order, the same order every solver reports.
fn ordered_cost(p: &SelectionProblem, positions: &[usize]) -> f64 {
    let mut picked: Vec<(RecordId, f64)> = positions
        .iter()
        .map(|&i| (p.candidates[i].id, p.candidates[i].dist))
        .collect();
    picked.sort_by_key(|x| x.0);
    picked.iter().map(|x| x.1).sum()
}

/// Cheapest feasible `k`-subset by exhaustive enumeration (test oracle).
pub fn oracle_enumerate(p: &SelectionProblem) -> Result<SelectionResult> {
    if p.candidates.len() > ORACLE_MAX_CANDIDATES {
        return Err(FairKnnError::Spec(format!(
            "oracle enumeration is limited to {ORACLE_MAX_CANDIDATES} candidates, got {}",
            p.candidates.len()
        )));
    }
    let attrs: Vec<usize> = p.spec.constrained_attrs().collect();
    for c in p.candidates {
        if attrs.iter().any(|&j| j >= c.attrs.len()) {
            return Err(FairKnnError::Record {
                id: c.id,
                reason: "candidate lacks a constrained attribute".into(),
            });
        }
    }
    let rem = attrs
        .iter()
        .map(|&j| {
            let counts = &p.spec.constraints()[&j];
            let size = p
                .candidates
                .iter()
                .map(|c| c.attrs[j] as usize + 1)
                .chain(counts.keys().map(|&v| v as usize + 1))
                .max()
                .unwrap_or(0);
            (0..size).map(|v| p.spec.count(j, v as u32)).collect()
        })
        .collect();
    let mut e = Enumeration {
        p,
        attrs,
        rem,
        stack: Vec::new(),
        best: None,
        nodes: 0,
    };
    e.walk(0, p.spec.k());
    let nodes = e.nodes;
    let mut result = match e.best {
        Some((_, positions)) => SelectionResult::from_positions(p, &positions, Solver::Oracle),
        None => SelectionResult {
            status: Status::Infeasible,
            solver: Solver::Oracle,
            nodes: 0,
        },
    };
    result.nodes = nodes;
    Ok(result)
}
