//! Shared test helpers: seeded generators, a direct recursive evaluator used
//! as a reference, and the standard game and allocation fixtures.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use igcheck_core::builders::{
    AllocationInstance, AllocationPrefs, Bundle, BundleUtility, GameInstance,
};
use igcheck_core::eval::{Verdict, VerdictValue};
use igcheck_core::graph::{AtomInterp, Coalition, Edge, ImprovementGraph, NodeId, NodeLabel};
use igcheck_core::logic::{free_vars, validate, Comparator, EdgeRel, Formula, Predicate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// random graphs

/// Random graph over `nodes` distinct profiles of `agents` agents (three
/// strategies each), with edges between random pairs labelled by the
/// coalition where the profiles differ.
pub fn random_graph(rng: &mut impl Rng, nodes: usize, agents: usize, density: f64) -> ImprovementGraph {
    let space = 3usize.pow(agents as u32);
    assert!(nodes <= space, "not enough profiles");
    let mut ids: Vec<usize> = (0..space).collect();
    ids.shuffle(rng);
    let mut labels: Vec<NodeLabel> = ids[..nodes]
        .iter()
        .map(|&p| {
            NodeLabel::new((0..agents).map(|i| {
                let digit = p / 3usize.pow(i as u32) % 3;
                ["a", "b", "c"][digit]
            }))
        })
        .collect();
    labels.sort();
    let mut edges = Vec::new();
    for x in 0..nodes {
        for y in 0..nodes {
            if x != y && rng.gen_bool(density) {
                let u = labels[x].diff(&labels[y]).expect("distinct labels");
                edges.push(Edge {
                    source: NodeId(x),
                    coalition: u,
                    target: NodeId(y),
                });
            }
        }
    }
    ImprovementGraph::new(agents, labels, edges, BTreeMap::new()).expect("consistent graph")
}

/// A random graph of up to `max_nodes` nodes with a density that keeps both
/// cyclic and acyclic cases common.
pub fn random_mixed_graph(rng: &mut impl Rng, max_nodes: usize, max_agents: usize) -> ImprovementGraph {
    let agents = rng.gen_range(1..=max_agents);
    let cap = max_nodes.min(3usize.pow(agents as u32));
    let nodes = rng.gen_range(1..=cap);
    let density = match rng.gen_range(0..3) {
        0 => 0.5 / nodes as f64,
        1 => 1.5 / nodes as f64,
        _ => 4.0 / nodes as f64,
    }
    .min(0.9);
    random_graph(rng, nodes, agents, density)
}

/// Adds a random unary atom `P` and binary atom `R`.
pub fn with_random_atoms(g: ImprovementGraph, rng: &mut impl Rng) -> ImprovementGraph {
    let n = g.node_count();
    let p: BTreeSet<NodeId> = (0..n).filter(|_| rng.gen_bool(0.4)).map(NodeId).collect();
    let mut r = BTreeSet::new();
    for x in 0..n {
        for y in 0..n {
            if rng.gen_bool(0.25) {
                r.insert((NodeId(x), NodeId(y)));
            }
        }
    }
    g.with_atom("P", AtomInterp::Unary(p))
        .and_then(|g| g.with_atom("R", AtomInterp::Binary(r)))
        .expect("atoms fit")
}

// ---------------------------------------------------------------------------
// random formulas

pub const FREE_VARS: [&str; 2] = ["a", "b"];
const BOUND_VARS: [&str; 3] = ["x", "y", "z"];

/// Polarity state of a set variable at the current position.
#[derive(Clone, Copy, PartialEq)]
enum Pol {
    Pos,
    Neg,
    Blocked,
}

struct FormulaGen<'r, R: Rng> {
    rng: &'r mut R,
    agents: usize,
    sets_made: usize,
}

impl<R: Rng> FormulaGen<'_, R> {
    fn pick<'s>(&mut self, scope: &'s [String]) -> &'s str {
        &scope[self.rng.gen_range(0..scope.len())]
    }

    fn edge_rel(&mut self) -> EdgeRel {
        match self.rng.gen_range(0..4) {
            0 | 1 => EdgeRel::Union,
            2 => {
                let bits = self.rng.gen_range(1u64..(1 << self.agents));
                let members = (0..self.agents).filter(|i| bits >> i & 1 == 1).map(|i| i + 1);
                EdgeRel::Coalition(Coalition::from_one_based(&members.collect::<Vec<_>>()).unwrap())
            }
            _ => EdgeRel::UpTo(self.rng.gen_range(1..=self.agents)),
        }
    }

    fn leaf(&mut self, scope: &[String], sets: &[(String, Pol)]) -> Formula {
        let usable: Vec<&String> = sets.iter().filter(|(_, p)| *p == Pol::Pos).map(|(s, _)| s).collect();
        let choice = self.rng.gen_range(0..if usable.is_empty() { 4 } else { 6 });
        match choice {
            0 => {
                let rel = self.edge_rel();
                let (a, b) = (self.pick(scope).to_string(), self.pick(scope).to_string());
                Formula::Atom(Predicate::Edge(rel), vec![a, b])
            }
            1 => Formula::atom(Predicate::named("P"), &[self.pick(scope)]),
            2 => {
                let (a, b) = (self.pick(scope).to_string(), self.pick(scope).to_string());
                Formula::Atom(Predicate::named("R"), vec![a, b])
            }
            3 => Formula::eq(self.pick(scope), self.pick(scope)),
            _ => {
                let s = usable[self.rng.gen_range(0..usable.len())].clone();
                Formula::so_atom(&s, self.pick(scope))
            }
        }
    }

    fn gen(&mut self, depth: usize, scope: &[String], sets: &[(String, Pol)]) -> Formula {
        if depth == 0 || self.rng.gen_bool(0.2) {
            return self.leaf(scope, sets);
        }
        let flip = |sets: &[(String, Pol)]| -> Vec<(String, Pol)> {
            sets.iter()
                .map(|(s, p)| {
                    let q = match p {
                        Pol::Pos => Pol::Neg,
                        Pol::Neg => Pol::Pos,
                        Pol::Blocked => Pol::Blocked,
                    };
                    (s.clone(), q)
                })
                .collect()
        };
        match self.rng.gen_range(0..8) {
            0 => self.gen(depth - 1, scope, &flip(sets)).not(),
            1 => {
                let l = self.gen(depth - 1, scope, sets);
                l.and(self.gen(depth - 1, scope, sets))
            }
            2 => {
                let l = self.gen(depth - 1, scope, sets);
                l.or(self.gen(depth - 1, scope, sets))
            }
            3 | 4 => {
                let v = BOUND_VARS[self.rng.gen_range(0..BOUND_VARS.len())];
                let inner = extend(scope, v);
                let body = self.gen(depth - 1, &inner, sets);
                if self.rng.gen_bool(0.5) {
                    Formula::exists(v, body)
                } else {
                    Formula::forall(v, body)
                }
            }
            5 => {
                let v = BOUND_VARS[self.rng.gen_range(0..BOUND_VARS.len())];
                let inner = extend(scope, v);
                let cmp = Comparator::ALL[self.rng.gen_range(0..5)];
                let body_sets = match cmp {
                    Comparator::Ge | Comparator::Gt => sets.to_vec(),
                    Comparator::Lt | Comparator::Le => flip(sets),
                    Comparator::Eq => sets.iter().map(|(s, _)| (s.clone(), Pol::Blocked)).collect(),
                };
                let body = self.gen(depth - 1, &inner, &body_sets);
                Formula::count(v, body, cmp, self.rng.gen_range(0..=3))
            }
            _ => self.lfp(depth, scope, sets),
        }
    }

    fn lfp(&mut self, depth: usize, scope: &[String], sets: &[(String, Pol)]) -> Formula {
        self.sets_made += 1;
        let set = format!("S{}", self.sets_made);
        let var = BOUND_VARS[self.rng.gen_range(0..BOUND_VARS.len())];
        let inner = extend(scope, var);
        let mut body_sets = sets.to_vec();
        body_sets.push((set.clone(), Pol::Pos));
        // seed the body with a recursive step so the set variable occurs
        let step = {
            let w = BOUND_VARS.iter().copied().find(|w| *w != var).expect("two names");
            let guard = Formula::Atom(Predicate::Edge(self.edge_rel()), vec![var.to_string(), w.to_string()]);
            Formula::exists(w, guard.and(Formula::so_atom(&set, w)))
        };
        let base = self.gen(depth - 1, &inner, &body_sets);
        let body = if self.rng.gen_bool(0.5) { base.or(step) } else { step.or(base) };
        let body_free = free_vars(&body).fo;
        let candidates: Vec<&String> = scope
            .iter()
            .filter(|v| v.as_str() != var && !body_free.contains(*v))
            .collect();
        let arg = match candidates.is_empty() {
            true => "a".to_string(),
            false => candidates[self.rng.gen_range(0..candidates.len())].clone(),
        };
        Formula::lfp(&set, var, body, &arg)
    }
}

fn extend(scope: &[String], v: &str) -> Vec<String> {
    let mut out: Vec<String> = scope.iter().filter(|s| *s != v).cloned().collect();
    out.push(v.to_string());
    out
}

/// Random well-formed formula of depth at most `depth` with free variables
/// among [`FREE_VARS`] and no free set variables.
pub fn random_formula(rng: &mut impl Rng, agents: usize, depth: usize) -> Formula {
    let scope: Vec<String> = FREE_VARS.iter().map(|s| s.to_string()).collect();
    loop {
        let mut g = FormulaGen {
            rng: &mut *rng,
            agents,
            sets_made: 0,
        };
        let f = g.gen(depth, &scope, &[]);
        let vs = free_vars(&f);
        if validate(&f).is_ok() && vs.so.is_empty() && vs.fo.iter().all(|v| FREE_VARS.contains(&v.as_str())) {
            return f;
        }
    }
}

// ---------------------------------------------------------------------------
// reference semantics

/// Truth of `phi` under a full assignment, by direct recursion on the
/// definition. Fixed points are computed by naive iteration from the empty
/// set.
pub fn denote(
    g: &ImprovementGraph,
    phi: &Formula,
    fo: &BTreeMap<String, usize>,
    so: &BTreeMap<String, BTreeSet<usize>>,
) -> bool {
    let node = |v: &String| NodeId(*fo.get(v).unwrap_or_else(|| panic!("unassigned {v}")));
    match phi {
        Formula::Atom(Predicate::Edge(rel), args) => {
            let (x, y) = (node(&args[0]), node(&args[1]));
            match rel {
                EdgeRel::Union => g
                    .coalition(x, y)
                    .is_some_and(|u| u.len() == 1),
                EdgeRel::Coalition(u) => g.coalition(x, y) == Some(*u),
                EdgeRel::UpTo(k) => g.coalition(x, y).is_some_and(|u| u.len() <= *k),
            }
        }
        Formula::Atom(Predicate::Named(name), args) => match g.atom(name).expect("atom present") {
            AtomInterp::Unary(s) => s.contains(&node(&args[0])),
            AtomInterp::Binary(s) => s.contains(&(node(&args[0]), node(&args[1]))),
        },
        Formula::Eq(a, b) => fo[a] == fo[b],
        Formula::SoAtom(s, v) => so[s].contains(&fo[v]),
        Formula::Not(f) => !denote(g, f, fo, so),
        Formula::And(l, r) => denote(g, l, fo, so) && denote(g, r, fo, so),
        Formula::Or(l, r) => denote(g, l, fo, so) || denote(g, r, fo, so),
        Formula::Exists(v, f) => (0..g.node_count()).any(|a| denote(g, f, &bind(fo, v, a), so)),
        Formula::Forall(v, f) => (0..g.node_count()).all(|a| denote(g, f, &bind(fo, v, a), so)),
        Formula::Count { var, body, cmp, bound } => {
            let count = (0..g.node_count())
                .filter(|&a| denote(g, body, &bind(fo, var, a), so))
                .count() as u64;
            cmp.holds(count, *bound)
        }
        Formula::Lfp { set, var, body, arg } => {
            let mut current = BTreeSet::new();
            loop {
                let mut inner_so = so.clone();
                inner_so.insert(set.clone(), current.clone());
                let next: BTreeSet<usize> = (0..g.node_count())
                    .filter(|&a| denote(g, body, &bind(fo, var, a), &inner_so))
                    .collect();
                if next == current {
                    break;
                }
                current = next;
            }
            current.contains(&fo[arg])
        }
    }
}

fn bind(fo: &BTreeMap<String, usize>, v: &str, a: usize) -> BTreeMap<String, usize> {
    let mut out = fo.clone();
    out.insert(v.to_string(), a);
    out
}

/// Reference verdict in the evaluator's shape: a boolean for sentences, a
/// node set for one free variable, sorted rows otherwise.
pub fn reference_verdict(g: &ImprovementGraph, phi: &Formula) -> VerdictValue {
    let vars: Vec<String> = free_vars(phi).fo.into_iter().collect();
    let n = g.node_count();
    let total = n.pow(vars.len() as u32);
    let mut rows = Vec::new();
    for idx in 0..total {
        let mut rest = idx;
        let mut tuple = vec![0; vars.len()];
        for slot in tuple.iter_mut().rev() {
            *slot = rest % n.max(1);
            rest /= n.max(1);
        }
        let fo: BTreeMap<String, usize> = vars.iter().cloned().zip(tuple.iter().copied()).collect();
        if denote(g, phi, &fo, &BTreeMap::new()) {
            rows.push(tuple.into_iter().map(NodeId).collect::<Vec<_>>());
        }
    }
    match vars.len() {
        0 => VerdictValue::Boolean(!rows.is_empty()),
        1 => VerdictValue::NodeSet(rows.into_iter().map(|r| r[0]).collect()),
        _ => VerdictValue::Table { vars, rows },
    }
}

pub fn node_set(v: &Verdict) -> BTreeSet<NodeId> {
    v.as_node_set().cloned().expect("node-set verdict")
}

pub fn boolean(v: &Verdict) -> bool {
    v.as_bool().expect("boolean verdict")
}

// ---------------------------------------------------------------------------
// syntactic helpers

/// Replaces free occurrences of `from` by `to`; `to` must not be bound
/// anywhere in `phi`.
pub fn substitute(phi: &Formula, from: &str, to: &str) -> Formula {
    let r = |v: &String| if v == from { to.to_string() } else { v.clone() };
    match phi {
        Formula::Atom(p, args) => Formula::Atom(p.clone(), args.iter().map(r).collect()),
        Formula::Eq(a, b) => Formula::Eq(r(a), r(b)),
        Formula::SoAtom(s, v) => Formula::SoAtom(s.clone(), r(v)),
        Formula::Not(f) => substitute(f, from, to).not(),
        Formula::And(a, b) => substitute(a, from, to).and(substitute(b, from, to)),
        Formula::Or(a, b) => substitute(a, from, to).or(substitute(b, from, to)),
        Formula::Exists(v, _) | Formula::Forall(v, _) if v == from => phi.clone(),
        Formula::Exists(v, f) => Formula::exists(v, substitute(f, from, to)),
        Formula::Forall(v, f) => Formula::forall(v, substitute(f, from, to)),
        Formula::Count { var, .. } if var == from => phi.clone(),
        Formula::Count { var, body, cmp, bound } => {
            Formula::count(var, substitute(body, from, to), *cmp, *bound)
        }
        Formula::Lfp { set, var, body, arg } => {
            let body = if var == from { (**body).clone() } else { substitute(body, from, to) };
            Formula::lfp(set, var, body, &r(arg))
        }
    }
}

/// `C var (phi) cmp k` rewritten with existential quantifiers and equality,
/// using the fresh names `w0, w1, ...`.
pub fn count_expansion(var: &str, phi: &Formula, cmp: Comparator, k: u64) -> Formula {
    let at_least = |m: u64| -> Formula {
        if m == 0 {
            return Formula::forall("w0", Formula::eq("w0", "w0"));
        }
        let names: Vec<String> = (1..=m).map(|i| format!("w{i}")).collect();
        let mut parts = Vec::new();
        for (i, a) in names.iter().enumerate() {
            for b in &names[i + 1..] {
                parts.push(Formula::eq(a, b).not());
            }
            parts.push(substitute(phi, var, a));
        }
        let mut f = Formula::conjunction(parts).expect("m >= 1");
        for n in names.iter().rev() {
            f = Formula::exists(n, f);
        }
        f
    };
    match cmp {
        Comparator::Ge => at_least(k),
        Comparator::Gt => at_least(k + 1),
        Comparator::Lt => at_least(k).not(),
        Comparator::Le => at_least(k + 1).not(),
        Comparator::Eq => at_least(k).and(at_least(k + 1).not()),
    }
}

// ---------------------------------------------------------------------------
// fixtures

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn two_by_two(s: &[&str], u1: [f64; 4], u2: [f64; 4]) -> GameInstance {
    GameInstance::new(vec![names(s), names(s)], vec![u1.to_vec(), u2.to_vec()]).unwrap()
}

pub fn matching_pennies() -> GameInstance {
    two_by_two(&["H", "T"], [1., -1., -1., 1.], [-1., 1., 1., -1.])
}

pub fn prisoners_dilemma() -> GameInstance {
    two_by_two(&["C", "D"], [3., 0., 5., 1.], [3., 5., 0., 1.])
}

pub fn coordination() -> GameInstance {
    two_by_two(&["A", "B"], [1., 0., 0., 1.], [1., 0., 0., 1.])
}

/// Two players routing over two parallel links with load-dependent delays;
/// utility is minus the delay on the chosen link.
pub fn congestion() -> GameInstance {
    let delay = [[1.0, 3.0], [2.0, 4.0]];
    GameInstance::from_fn(vec![names(&["L1", "L2"]), names(&["L1", "L2"])], |i, p| {
        let load = p.iter().filter(|&&l| l == p[i]).count();
        -delay[p[i]][load - 1]
    })
    .unwrap()
}

pub fn random_game(rng: &mut impl Rng) -> GameInstance {
    let n = rng.gen_range(1..=3);
    let strategies: Vec<Vec<String>> = (0..n)
        .map(|i| {
            let m = rng.gen_range(1..=3);
            (0..m).map(|s| format!("s{}{}", i + 1, s + 1)).collect()
        })
        .collect();
    let profiles: usize = strategies.iter().map(Vec::len).product();
    let utilities = (0..n)
        .map(|_| (0..profiles).map(|_| rng.gen_range(0..4) as f64).collect())
        .collect();
    GameInstance::new(strategies, utilities).unwrap()
}

/// Two agents, items `a` and `b`, additive utilities (3,1) and (1,3).
pub fn goods_fixture() -> AllocationInstance {
    AllocationInstance::new(
        2,
        names(&["a", "b"]),
        false,
        AllocationPrefs::OwnBundle(vec![
            BundleUtility::Additive(vec![3., 1.]),
            BundleUtility::Additive(vec![1., 3.]),
        ]),
    )
    .unwrap()
    .with_initial(vec![Bundle::new([1]), Bundle::new([0])])
    .unwrap()
}

/// Housing market on `h1..hn` where agent `i` starts with `h{i}`.
pub fn housing(prefs: Vec<Vec<f64>>) -> AllocationInstance {
    let n = prefs.len();
    AllocationInstance::new(
        n,
        (1..=n).map(|i| format!("h{i}")).collect(),
        true,
        AllocationPrefs::OwnBundle(prefs.into_iter().map(BundleUtility::Additive).collect()),
    )
    .unwrap()
    .with_initial((0..n).map(|t| Bundle::new([t])).collect())
    .unwrap()
}

/// Housing market with independent uniformly random strict preferences.
pub fn random_housing(rng: &mut impl Rng, n: usize) -> AllocationInstance {
    let prefs = (0..n)
        .map(|_| {
            let mut ranks: Vec<f64> = (0..n).map(|r| r as f64).collect();
            ranks.shuffle(rng);
            ranks
        })
        .collect();
    housing(prefs)
}

pub fn label(tokens: &[&str]) -> NodeLabel {
    NodeLabel::new(tokens.iter().copied())
}

pub fn labels_of(g: &ImprovementGraph, set: &BTreeSet<NodeId>) -> BTreeSet<NodeLabel> {
    set.iter().map(|&x| g.label(x).clone()).collect()
}
