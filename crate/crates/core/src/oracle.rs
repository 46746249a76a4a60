//! Brute-force ground truth computed with plain graph algorithms and direct
//! definitions. Nothing here touches formulas or the evaluator.

use std::collections::{BTreeSet, VecDeque};

use serde::Serialize;

use crate::builders::{AllocationInstance, AllocationPrefs, Bundle, GameInstance};
use crate::graph::{ImprovementGraph, NodeId, NodeLabel};

/// Successor lists restricted to coalitions of at most `k` agents.
fn slice(g: &ImprovementGraph, k: usize) -> Vec<Vec<usize>> {
    g.node_ids()
        .map(|x| {
            g.out_edges(x)
                .iter()
                .filter(|(u, _)| u.len() <= k)
                .map(|&(_, y)| y.0)
                .collect()
        })
        .collect()
}

fn reverse(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut rev = vec![Vec::new(); adj.len()];
    for (x, ys) in adj.iter().enumerate() {
        for &y in ys {
            rev[y].push(x);
        }
    }
    rev
}

/// Nodes with no outgoing edge of coalition size at most `k`.
pub fn oracle_sinks(g: &ImprovementGraph, k: usize) -> BTreeSet<NodeId> {
    g.node_ids()
        .filter(|&x| g.out_edges(x).iter().all(|(u, _)| u.len() > k))
        .collect()
}

/// Whether the `k`-slice has no directed cycle (three-colour DFS).
pub fn oracle_acyclic(g: &ImprovementGraph, k: usize) -> bool {
    !has_cycle(&slice(g, k))
}

fn has_cycle(adj: &[Vec<usize>]) -> bool {
    #[derive(Clone, Copy, PartialEq)]
    enum Colour {
        White,
        Grey,
        Black,
    }
    let mut colour = vec![Colour::White; adj.len()];
    for root in 0..adj.len() {
        if colour[root] != Colour::White {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        colour[root] = Colour::Grey;
        while let Some(&mut (x, ref mut next)) = stack.last_mut() {
            if let Some(&y) = adj[x].get(*next) {
                *next += 1;
                match colour[y] {
                    Colour::Grey => return true,
                    Colour::White => {
                        colour[y] = Colour::Grey;
                        stack.push((y, 0));
                    }
                    Colour::Black => {}
                }
            } else {
                colour[x] = Colour::Black;
                stack.pop();
            }
        }
    }
    false
}

/// Nodes no directed cycle of the `k`-slice can reach: the complement of the
/// forward closure of all nodes lying in a nontrivial strongly connected
/// component.
pub fn oracle_cycle_free(g: &ImprovementGraph, k: usize) -> BTreeSet<NodeId> {
    cycle_free(&slice(g, k))
}

fn cycle_free(adj: &[Vec<usize>]) -> BTreeSet<NodeId> {
    let comp = tarjan(adj);
    let mut size = vec![0usize; adj.len()];
    for &c in &comp {
        size[c] += 1;
    }
    let on_cycle: Vec<usize> = (0..adj.len())
        .filter(|&x| size[comp[x]] > 1 || adj[x].contains(&x))
        .collect();
    let tainted = bfs(adj, on_cycle);
    (0..adj.len())
        .filter(|x| !tainted[*x])
        .map(NodeId)
        .collect()
}

/// Strongly connected component id of every node (iterative Tarjan).
fn tarjan(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![usize::MAX; n];
    let mut counter = 0;
    let mut comps = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut work = vec![(root, 0usize)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&(x, i)) = work.last() {
            if i < adj[x].len() {
                work.last_mut().expect("nonempty").1 += 1;
                let y = adj[x][i];
                if index[y] == usize::MAX {
                    index[y] = counter;
                    low[y] = counter;
                    counter += 1;
                    stack.push(y);
                    on_stack[y] = true;
                    work.push((y, 0));
                } else if on_stack[y] {
                    low[x] = low[x].min(index[y]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    low[parent] = low[parent].min(low[x]);
                }
                if low[x] == index[x] {
                    loop {
                        let y = stack.pop().expect("scc member");
                        on_stack[y] = false;
                        comp[y] = comps;
                        if y == x {
                            break;
                        }
                    }
                    comps += 1;
                }
            }
        }
    }
    comp
}

fn bfs(adj: &[Vec<usize>], start: impl IntoIterator<Item = usize>) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::new();
    for s in start {
        if !seen[s] {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(x) = queue.pop_front() {
        for &y in &adj[x] {
            if !seen[y] {
                seen[y] = true;
                queue.push_back(y);
            }
        }
    }
    seen
}

/// Nodes with a path (possibly empty) of the `k`-slice into `targets`,
/// found by backward BFS.
pub fn oracle_reach(g: &ImprovementGraph, k: usize, targets: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
    let rev = reverse(&slice(g, k));
    bfs(&rev, targets.iter().map(|x| x.0))
        .into_iter()
        .enumerate()
        .filter(|(_, s)| *s)
        .map(|(x, _)| NodeId(x))
        .collect()
}

/// Nodes with a `k`-slice path to a `k`-sink.
pub fn oracle_reach_sinks(g: &ImprovementGraph, k: usize) -> BTreeSet<NodeId> {
    oracle_reach(g, k, &oracle_sinks(g, k))
}

pub fn oracle_weakly_acyclic(g: &ImprovementGraph, k: usize) -> bool {
    oracle_reach_sinks(g, k).len() == g.node_count()
}

/// Number of nodes with a unilateral improvement path to a unilateral sink.
pub fn oracle_reach_count(g: &ImprovementGraph) -> usize {
    oracle_reach_sinks(g, 1).len()
}

/// Fixpoint of the counting trap over unilateral edges: a node with
/// in-degree at least `k` is admitted unconditionally, so it behaves as if
/// its incoming edges were absent; every other node needs all its
/// predecessors. The result is the cycle-free part of the graph with those
/// edges dropped.
pub fn oracle_special_nodes(g: &ImprovementGraph, k: u64) -> BTreeSet<NodeId> {
    let unilateral = slice(g, 1);
    let indeg: Vec<usize> = reverse(&unilateral).iter().map(Vec::len).collect();
    let kept: Vec<Vec<usize>> = unilateral
        .iter()
        .map(|ys| ys.iter().copied().filter(|&y| (indeg[y] as u64) < k).collect())
        .collect();
    cycle_free(&kept)
}

/// Pure Nash equilibria by checking every unilateral deviation.
pub fn oracle_nash(game: &GameInstance) -> BTreeSet<NodeLabel> {
    let sizes: Vec<usize> = game.strategies().iter().map(Vec::len).collect();
    let mut out = BTreeSet::new();
    let mut profile = vec![0usize; sizes.len()];
    'profiles: loop {
        let stable = (0..sizes.len()).all(|i| {
            let here = game.utility(i, &profile);
            (0..sizes[i]).all(|s| {
                let mut dev = profile.clone();
                dev[i] = s;
                game.utility(i, &dev) <= here
            })
        });
        if stable {
            out.insert(game.label(&profile));
        }
        for i in (0..sizes.len()).rev() {
            profile[i] += 1;
            if profile[i] < sizes[i] {
                continue 'profiles;
            }
            profile[i] = 0;
        }
        break;
    }
    out
}

/// Every allocation of the instance, enumerated recursively.
fn allocations(a: &AllocationInstance) -> Vec<Vec<Bundle>> {
    let n = a.agents();
    let m = a.items().len();
    let mut out = Vec::new();
    if a.is_housing() {
        fn perms(prefix: &mut Vec<usize>, left: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if left.is_empty() {
                out.push(prefix.clone());
                return;
            }
            for i in 0..left.len() {
                let t = left.remove(i);
                prefix.push(t);
                perms(prefix, left, out);
                prefix.pop();
                left.insert(i, t);
            }
        }
        let mut all = Vec::new();
        perms(&mut Vec::new(), &mut (0..m).collect(), &mut all);
        for p in all {
            out.push(p.into_iter().map(|t| Bundle::new([t])).collect());
        }
    } else {
        fn assign(item: usize, m: usize, owners: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Bundle>>) {
            if item == m {
                out.push(owners.iter().map(|b| Bundle::new(b.iter().copied())).collect());
                return;
            }
            for i in 0..owners.len() {
                owners[i].push(item);
                assign(item + 1, m, owners, out);
                owners[i].pop();
            }
        }
        assign(0, m, &mut vec![Vec::new(); n], &mut out);
    }
    out
}

/// Allocations at which no agent envies another: agent `i` envies `j` at
/// `x` when some allocation giving `i` the bundle `j` holds at `x` is
/// strictly better for `i`.
pub fn oracle_envy_free(a: &AllocationInstance) -> BTreeSet<NodeLabel> {
    let all = allocations(a);
    let n = a.agents();
    let value = |i: usize, alloc: &[Bundle]| a.utility(i, alloc).unwrap_or(f64::NEG_INFINITY);
    all.iter()
        .filter(|x| {
            (0..n).all(|i| {
                (0..n).filter(|&j| j != i).all(|j| {
                    let envies = match a.prefs() {
                        AllocationPrefs::OwnBundle(u) => {
                            let mine = u[i].value(&x[i]).unwrap_or(f64::NEG_INFINITY);
                            let theirs = u[i].value(&x[j]).unwrap_or(f64::NEG_INFINITY);
                            theirs > mine
                        }
                        AllocationPrefs::Allocations(_) => all
                            .iter()
                            .any(|y| y[i] == x[j] && value(i, y) > value(i, x)),
                    };
                    !envies
                })
            })
        })
        .map(|x| a.label(x))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SliceReport {
    pub k: usize,
    pub sinks: BTreeSet<NodeId>,
    pub acyclic: bool,
    pub weakly_acyclic: bool,
}

/// Oracle verdicts for one graph. The unsliced fields use unilateral edges
/// only, matching the plain edge relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OracleReport {
    pub node_count: usize,
    pub sinks: BTreeSet<NodeId>,
    pub acyclic: bool,
    pub weakly_acyclic: bool,
    pub reach_sink_count: usize,
    /// One entry per coalition bound `k` in `1..=n`.
    pub per_k: Vec<SliceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nash_set: Option<BTreeSet<NodeLabel>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envy_free_set: Option<BTreeSet<NodeLabel>>,
}

impl OracleReport {
    pub fn new(g: &ImprovementGraph) -> Self {
        let per_k = (1..=g.agents())
            .map(|k| SliceReport {
                k,
                sinks: oracle_sinks(g, k),
                acyclic: oracle_acyclic(g, k),
                weakly_acyclic: oracle_weakly_acyclic(g, k),
            })
            .collect();
        OracleReport {
            node_count: g.node_count(),
            sinks: oracle_sinks(g, 1),
            acyclic: oracle_acyclic(g, 1),
            weakly_acyclic: oracle_weakly_acyclic(g, 1),
            reach_sink_count: oracle_reach_count(g),
            per_k,
            nash_set: None,
            envy_free_set: None,
        }
    }

    pub fn with_nash(mut self, game: &GameInstance) -> Self {
        self.nash_set = Some(oracle_nash(game));
        self
    }

    pub fn with_envy_free(mut self, a: &AllocationInstance) -> Self {
        self.envy_free_set = Some(oracle_envy_free(a));
        self
    }

    /// Checks the implications that must hold between the verdicts.
    pub fn check(&self) -> Result<(), String> {
        let all = std::iter::once((1, &self.sinks, self.acyclic, self.weakly_acyclic))
            .chain(self.per_k.iter().map(|s| (s.k, &s.sinks, s.acyclic, s.weakly_acyclic)));
        for (k, sinks, acyclic, weak) in all {
            if acyclic && !weak {
                return Err(format!("k={k}: acyclic but not weakly acyclic"));
            }
            if weak && self.node_count > 0 && sinks.is_empty() {
                return Err(format!("k={k}: weakly acyclic without sinks"));
            }
        }
        if self.weakly_acyclic != (self.reach_sink_count == self.node_count) {
            return Err("weak acyclicity disagrees with the reach count".into());
        }
        Ok(())
    }
}
