//! Exact selection for any number of constrained attributes by depth-first
//! branch-and-bound over the binary inclusion variables.
//!
//! Each node branches on the required value group with the least slack
//! (compatible candidates left minus count still needed): child `i` includes
//! the group's `i`-th cheapest compatible candidate and excludes the cheaper
//! ones, so every subset is reached once. The lower bound, per attribute, is
//! the cost of filling every remaining count with its cheapest compatible
//! candidates; the node's bound is the largest of these.

use super::{Groups, SelectionProblem, SelectionResult, Solver, Status};
use crate::error::Result;

pub const DEFAULT_NODE_BUDGET: u64 = 20_000_000;

const UNDECIDED: u8 = 0;
const IN: u8 = 1;
const OUT: u8 = 2;

struct Search<'g> {
    groups: &'g Groups,
    dist: Vec<f64>,
    rem: Vec<usize>,
    state: Vec<u8>,
    chosen: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
    nodes: u64,
    budget: u64,
    exhausted: bool,
}

impl Search<'_> {
    fn compatible(&self, e: usize) -> bool {
        self.state[e] == UNDECIDED && self.groups.groups_of(e).iter().all(|&g| self.rem[g] > 0)
    }

    fn dfs(&mut self, cost: f64, k_left: usize) {
        self.nodes += 1;
        if self.nodes > self.budget {
            self.exhausted = true;
            return;
        }
        if k_left == 0 {
            debug_assert!(self.rem.iter().all(|&r| r == 0));
            if self.best.as_ref().is_none_or(|(b, _)| cost < *b) {
                self.best = Some((cost, self.chosen.clone()));
            }
            return;
        }
        let n_groups = self.rem.len();
        let mut avail = vec![0usize; n_groups];
        let mut taken = vec![0usize; n_groups];
        let mut bound = vec![0.0f64; self.groups.num_attrs];
        for e in 0..self.dist.len() {
            if !self.compatible(e) {
                continue;
            }
            for &g in self.groups.groups_of(e) {
                avail[g] += 1;
                if taken[g] < self.rem[g] {
                    taken[g] += 1;
                    bound[self.groups.group_attr[g]] += self.dist[e];
                }
            }
        }
        if (0..n_groups).any(|g| avail[g] < self.rem[g]) {
            return;
        }
        let lb = cost + bound.iter().copied().fold(0.0, f64::max);
        if let Some((b, _)) = &self.best {
            if lb >= *b {
                return;
            }
        }
        let branch = (0..n_groups)
            .filter(|&g| self.rem[g] > 0)
            .min_by_key(|&g| (avail[g] - self.rem[g], g))
            .expect("k_left > 0 implies an open group");
        let members: Vec<usize> = (0..self.dist.len())
            .filter(|&e| self.compatible(e) && self.groups.groups_of(e).contains(&branch))
            .collect();
        let need = self.rem[branch];
        for (i, &e) in members.iter().enumerate() {
            if members.len() - i < need || self.exhausted {
                break;
            }
            self.state[e] = IN;
            self.chosen.push(e);
            for &g in self.groups.groups_of(e) {
                self.rem[g] -= 1;
            }
            self.dfs(cost + self.dist[e], k_left - 1);
            for &g in self.groups.groups_of(e) {
                self.rem[g] += 1;
            }
            self.chosen.pop();
            self.state[e] = OUT;
        }
        for &e in &members {
            self.state[e] = UNDECIDED;
        }
    }
}

/// Branch-and-bound selection; also valid for one or two attributes.
///
/// Returns `ResourceExhausted` if `node_budget` nodes are visited before the
/// search finishes, never a possibly suboptimal answer.
pub fn select_3plus(p: &SelectionProblem, node_budget: u64) -> Result<SelectionResult> {
    let groups = Groups::new(p)?;
    let mut search = Search {
        dist: groups.eligible.iter().map(|&i| p.candidates[i].dist).collect(),
        rem: groups.need.clone(),
        state: vec![UNDECIDED; groups.eligible.len()],
        chosen: Vec::new(),
        best: None,
        nodes: 0,
        budget: node_budget,
        exhausted: false,
        groups: &groups,
    };
    search.dfs(0.0, p.spec.k());
    let nodes = search.nodes;
    let mut result = match (search.exhausted, search.best) {
        (true, _) => SelectionResult {
            status: Status::ResourceExhausted,
            solver: Solver::Ilp,
            nodes: 0,
        },
        (false, None) => SelectionResult::infeasible(Solver::Ilp),
        (false, Some((_, chosen))) => {
            let positions: Vec<usize> = chosen.iter().map(|&e| groups.eligible[e]).collect();
            SelectionResult::from_positions(p, &positions, Solver::Ilp)
        }
    };
    result.nodes = nodes;
    Ok(result)
}
