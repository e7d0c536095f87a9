use super::{Groups, SelectionProblem, SelectionResult, Solver};
use crate::error::{FairKnnError, Result};

/// Single constrained attribute: the `count` nearest candidates of each value.
pub fn select_1attr(p: &SelectionProblem) -> Result<SelectionResult> {
    if p.spec.num_constrained() != 1 {
        return Err(FairKnnError::Spec(format!(
            "sort selection needs exactly one constrained attribute, got {}",
            p.spec.num_constrained()
        )));
    }
    let groups = Groups::new(p)?;
    let mut taken = vec![0usize; groups.need.len()];
    let mut chosen = Vec::with_capacity(p.spec.k());
    for (e, &i) in groups.eligible.iter().enumerate() {
        let g = groups.groups_of(e)[0];
        if taken[g] < groups.need[g] {
            taken[g] += 1;
            chosen.push(i);
        }
    }
    if taken != groups.need {
        return Ok(SelectionResult::infeasible(Solver::Sort));
    }
    Ok(SelectionResult::from_positions(p, &chosen, Solver::Sort))
}
