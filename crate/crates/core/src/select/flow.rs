//! Two-attribute selection as min-cost flow, solved by successive shortest
//! paths with node potentials.
//!
//! Graph: source -> value of the first attribute (capacity = its count) ->
//! one unit edge per candidate (cost = distance) -> value of the second
//! attribute (capacity = its count) -> sink. A flow of value `k` picks `k`
//! candidates meeting both attributes' counts.

use super::{Groups, SelectionProblem, SelectionResult, Solver};
use crate::error::{FairKnnError, Result};

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: i64,
    cost: f64,
}

#[derive(Debug, Default)]
struct Network {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl Network {
    fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    /// Adds an edge and its residual twin; returns the forward edge index.
    fn add(&mut self, from: usize, to: usize, cap: i64, cost: f64) -> usize {
        let e = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.edges.push(Edge {
            to: from,
            cap: 0,
            cost: -cost,
        });
        self.adj[from].push(e);
        self.adj[to].push(e + 1);
        e
    }

    /// Pushes up to `want` units from `s` to `t` one shortest path at a time.
    /// All initial costs are non-negative, so zero potentials are valid.
    fn min_cost_flow(&mut self, s: usize, t: usize, want: i64) -> i64 {
        let n = self.adj.len();
        let mut potential = vec![0.0f64; n];
        let mut flow = 0;
        while flow < want {
            // dense Dijkstra: the graph has few nodes and many parallel edges
            let mut dist = vec![f64::INFINITY; n];
            let mut via = vec![usize::MAX; n];
            let mut done = vec![false; n];
            dist[s] = 0.0;
            loop {
                let mut u = usize::MAX;
                for v in 0..n {
                    if !done[v] && dist[v].is_finite() && (u == usize::MAX || dist[v] < dist[u]) {
                        u = v;
                    }
                }
                if u == usize::MAX {
                    break;
                }
                done[u] = true;
                for &e in &self.adj[u] {
                    let edge = &self.edges[e];
                    if edge.cap <= 0 || done[edge.to] {
                        continue;
                    }
                    let reduced = (edge.cost + potential[u] - potential[edge.to]).max(0.0);
                    let nd = dist[u] + reduced;
                    if nd < dist[edge.to] {
                        dist[edge.to] = nd;
                        via[edge.to] = e;
                    }
                }
            }
            if !dist[t].is_finite() {
                break;
            }
            for v in 0..n {
                if dist[v].is_finite() {
                    potential[v] += dist[v];
                }
            }
            let mut push = want - flow;
            let mut v = t;
            while v != s {
                let e = via[v];
                push = push.min(self.edges[e].cap);
                v = self.edges[e ^ 1].to;
            }
            let mut v = t;
            while v != s {
                let e = via[v];
                self.edges[e].cap -= push;
                self.edges[e ^ 1].cap += push;
                v = self.edges[e ^ 1].to;
            }
            flow += push;
        }
        flow
    }
}

/// Two constrained attributes: exact selection by min-cost flow.
pub fn select_2attr(p: &SelectionProblem) -> Result<SelectionResult> {
    if p.spec.num_constrained() != 2 {
        return Err(FairKnnError::Spec(format!(
            "flow selection needs exactly two constrained attributes, got {}",
            p.spec.num_constrained()
        )));
    }
    let groups = Groups::new(p)?;
    let k = p.spec.k();
    // node 0 = source, 1 = sink, 2 + g = value group g
    let mut net = Network::new(2 + groups.need.len());
    for (g, &need) in groups.need.iter().enumerate() {
        if groups.group_attr[g] == 0 {
            net.add(0, 2 + g, need as i64, 0.0);
        } else {
            net.add(2 + g, 1, need as i64, 0.0);
        }
    }
    let cand_edges: Vec<(usize, usize)> = groups
        .eligible
        .iter()
        .enumerate()
        .map(|(e, &i)| {
            let gs = groups.groups_of(e);
            (net.add(2 + gs[0], 2 + gs[1], 1, p.candidates[i].dist), i)
        })
        .collect();
    let flow = net.min_cost_flow(0, 1, k as i64);
    if flow < k as i64 {
        return Ok(SelectionResult::infeasible(Solver::Flow));
    }
    let mut chosen = Vec::with_capacity(k);
    for &(e, i) in &cand_edges {
        let used = net.edges[e ^ 1].cap;
        assert!(used == 0 || used == 1, "non-integral flow {used} on a candidate edge");
        if used == 1 {
            chosen.push(i);
        }
    }
    assert_eq!(chosen.len(), k);
    Ok(SelectionResult::from_positions(p, &chosen, Solver::Flow))
}
