//! Bottom-up table evaluation with least fixed-point iteration.
//!
//! Every subformula evaluates to a [`Table`] over its free first-order
//! variables that are not fixed by the environment. Fixpoint bodies are
//! re-evaluated once per stage with the set variable bound to the current
//! stage; subformulas that mention neither a set variable nor an
//! environment-fixed variable are computed once and memoized.

mod table;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;

use fixedbitset::FixedBitSet;
use serde_json::{json, Value};
use thiserror::Error;

use crate::graph::{AtomInterp, ImprovementGraph, NodeId};
use crate::logic::{free_vars, validate, EdgeRel, Formula, Predicate, VarSets, WellFormedError};

pub use table::Table;
use table::{broadcast, count_over, Odometer};

/// Default cap on the number of free variables of any subformula.
pub const MAX_TABLE_VARS: usize = 3;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error(transparent)]
    IllFormed(#[from] WellFormedError),
    #[error("vocabulary error: {0}")]
    Vocabulary(String),
    #[error("query has free set variable {0}")]
    FreeSetVariable(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    /// Permit subformulas with more than [`MAX_TABLE_VARS`] free variables.
    pub allow_wide: bool,
    /// Keep every stage of every fixpoint run in the stats.
    pub trace_lfp: bool,
}

/// Stage sets of one fixpoint run, starting with `f(∅)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LfpTrace {
    pub stages: Vec<FixedBitSet>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvalStats {
    /// Operator applications per fixpoint run, including the final one that
    /// confirms stabilization.
    pub lfp_stages: Vec<usize>,
    /// Table cells computed, memoized tables counted once.
    pub cells: u64,
    pub traces: Vec<LfpTrace>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerdictValue {
    Boolean(bool),
    NodeSet(BTreeSet<NodeId>),
    Table {
        vars: Vec<String>,
        rows: Vec<Vec<NodeId>>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub value: VerdictValue,
    pub stats: EvalStats,
}

impl Verdict {
    fn from_table(table: &Table, stats: EvalStats) -> Self {
        let value = match table.vars().len() {
            0 => VerdictValue::Boolean(table.truth()),
            1 => VerdictValue::NodeSet(table.bits().ones().map(NodeId).collect()),
            _ => VerdictValue::Table {
                vars: table.vars().to_vec(),
                rows: table.true_rows().collect(),
            },
        };
        Verdict { value, stats }
    }

    /// Sentence truth, or nonemptiness for open formulas.
    pub fn holds(&self) -> bool {
        match &self.value {
            VerdictValue::Boolean(b) => *b,
            VerdictValue::NodeSet(s) => !s.is_empty(),
            VerdictValue::Table { rows, .. } => !rows.is_empty(),
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self.value {
            VerdictValue::Boolean(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_node_set(&self) -> Option<&BTreeSet<NodeId>> {
        match &self.value {
            VerdictValue::NodeSet(s) => Some(s),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.value {
            VerdictValue::Boolean(_) => "boolean",
            VerdictValue::NodeSet(_) => "node-set",
            VerdictValue::Table { .. } => "table",
        }
    }

    pub fn to_json(&self) -> Value {
        let value = match &self.value {
            VerdictValue::Boolean(b) => json!(b),
            VerdictValue::NodeSet(s) => json!(s.iter().map(|v| v.0).collect::<Vec<_>>()),
            VerdictValue::Table { vars, rows } => json!({
                "vars": vars,
                "rows": rows
                    .iter()
                    .map(|r| r.iter().map(|v| v.0).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
            }),
        };
        json!({
            "kind": self.kind(),
            "value": value,
            "stats": {
                "lfp_stages": self.stats.lfp_stages,
                "cells": self.stats.cells,
            },
        })
    }
}

/// Assignment of first-order variables to nodes and set variables to node sets.
#[derive(Debug, Clone, Default)]
pub struct Env {
    pub fo: BTreeMap<String, usize>,
    pub so: HashMap<String, Rc<FixedBitSet>>,
}

impl Env {
    pub fn with_set(mut self, name: &str, members: impl IntoIterator<Item = NodeId>, domain: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(domain);
        for v in members {
            bits.insert(v.0);
        }
        self.so.insert(name.to_string(), Rc::new(bits));
        self
    }

    pub fn with_node(mut self, name: &str, node: NodeId) -> Self {
        self.fo.insert(name.to_string(), node.0);
        self
    }

    fn without_fo(&self, var: &str) -> Env {
        let mut env = self.clone();
        env.fo.remove(var);
        env
    }
}

/// Extensional relation read off the graph.
enum Relation {
    Unary(FixedBitSet),
    Binary(Vec<FixedBitSet>),
}

impl Relation {
    fn holds(&self, args: &[usize]) -> bool {
        match (self, args) {
            (Relation::Unary(s), [a]) => s.contains(*a),
            (Relation::Binary(rows), [a, b]) => rows[*a].contains(*b),
            _ => unreachable!("arity checked before evaluation"),
        }
    }
}

type Key = *const Formula;

struct Evaluator<'g> {
    graph: &'g ImprovementGraph,
    opts: EvalOptions,
    relations: HashMap<Predicate, Rc<Relation>>,
    free: HashMap<Key, Rc<VarSets>>,
    memo: HashMap<Key, Rc<Table>>,
    stats: EvalStats,
}

impl<'g> Evaluator<'g> {
    fn new(graph: &'g ImprovementGraph, opts: EvalOptions) -> Self {
        Evaluator {
            graph,
            opts,
            relations: HashMap::new(),
            free: HashMap::new(),
            memo: HashMap::new(),
            stats: EvalStats::default(),
        }
    }

    fn domain(&self) -> usize {
        self.graph.node_count()
    }

    /// Caches free variables of every subformula and enforces the width cap.
    fn prepare(&mut self, phi: &Formula) -> Result<Rc<VarSets>, EvalError> {
        for child in phi.children() {
            self.prepare(child)?;
        }
        let vs = Rc::new(free_vars(phi));
        if vs.fo.len() > MAX_TABLE_VARS && !self.opts.allow_wide {
            return Err(EvalError::Resource(format!(
                "subformula {phi} has {} free variables (limit {MAX_TABLE_VARS})",
                vs.fo.len()
            )));
        }
        self.free.insert(phi as Key, vs.clone());
        Ok(vs)
    }

    fn vars_of(&self, phi: &Formula) -> Rc<VarSets> {
        match self.free.get(&(phi as Key)) {
            Some(v) => v.clone(),
            None => Rc::new(free_vars(phi)),
        }
    }

    fn check_vocabulary(&self, phi: &Formula) -> Result<(), EvalError> {
        if let Formula::Atom(pred, args) = phi {
            match pred {
                Predicate::Edge(EdgeRel::Union) => {}
                Predicate::Edge(EdgeRel::Coalition(u)) => {
                    if u.span() > self.graph.agents() {
                        return Err(EvalError::Vocabulary(format!(
                            "{pred} names an agent beyond {}",
                            self.graph.agents()
                        )));
                    }
                }
                Predicate::Edge(EdgeRel::UpTo(k)) => {
                    self.graph
                        .check_k(*k)
                        .map_err(|e| EvalError::InvalidArgument(e.to_string()))?;
                }
                Predicate::Named(name) => match self.graph.atom(name) {
                    None => {
                        return Err(EvalError::Vocabulary(format!("unknown predicate {name}")))
                    }
                    Some(interp) if interp.arity() != args.len() => {
                        return Err(WellFormedError::Arity {
                            pred: name.clone(),
                            expected: interp.arity(),
                            found: args.len(),
                        }
                        .into())
                    }
                    Some(_) => {}
                },
            }
        }
        phi.children().try_for_each(|c| self.check_vocabulary(c))
    }

    fn relation(&mut self, pred: &Predicate) -> Rc<Relation> {
        if let Some(r) = self.relations.get(pred) {
            return r.clone();
        }
        let g = self.graph;
        let rel = match pred {
            Predicate::Edge(EdgeRel::Union) => Relation::Binary(g.adjacency(|u| u.len() == 1)),
            Predicate::Edge(EdgeRel::Coalition(c)) => {
                let c = *c;
                Relation::Binary(g.adjacency(move |u| u == c))
            }
            Predicate::Edge(EdgeRel::UpTo(k)) => {
                let k = *k;
                Relation::Binary(g.adjacency(move |u| u.len() <= k))
            }
            Predicate::Named(name) => match g.atom(name).expect("vocabulary checked") {
                AtomInterp::Unary(s) => {
                    let mut bits = FixedBitSet::with_capacity(g.node_count());
                    s.iter().for_each(|v| bits.insert(v.0));
                    Relation::Unary(bits)
                }
                AtomInterp::Binary(s) => {
                    let mut rows = vec![FixedBitSet::with_capacity(g.node_count()); g.node_count()];
                    s.iter().for_each(|(a, b)| rows[a.0].insert(b.0));
                    Relation::Binary(rows)
                }
            },
        };
        let rel = Rc::new(rel);
        self.relations.insert(pred.clone(), rel.clone());
        rel
    }

    /// Sorted free variables of `phi` not fixed by `env`.
    fn open_vars(&self, phi: &Formula, env: &Env) -> Vec<String> {
        self.vars_of(phi)
            .fo
            .iter()
            .filter(|v| !env.fo.contains_key(*v))
            .cloned()
            .collect()
    }

    fn eval(&mut self, phi: &Formula, env: &Env) -> Result<Rc<Table>, EvalError> {
        let vs = self.vars_of(phi);
        let memoizable = vs.so.is_empty() && vs.fo.iter().all(|v| !env.fo.contains_key(v));
        if memoizable {
            if let Some(t) = self.memo.get(&(phi as Key)) {
                return Ok(t.clone());
            }
        }
        let table = Rc::new(self.compute(phi, env)?);
        self.stats.cells += table.len() as u64;
        if memoizable {
            self.memo.insert(phi as Key, table.clone());
        }
        Ok(table)
    }

    fn compute(&mut self, phi: &Formula, env: &Env) -> Result<Table, EvalError> {
        let domain = self.domain();
        match phi {
            Formula::Atom(pred, args) => {
                let rel = self.relation(pred);
                let out = self.open_vars(phi, env);
                Ok(self.fill(out, env, |vals| {
                    let tuple: Vec<usize> = args.iter().map(|a| vals(a)).collect();
                    rel.holds(&tuple)
                }))
            }
            Formula::Eq(a, b) => {
                let out = self.open_vars(phi, env);
                Ok(self.fill(out, env, |vals| vals(a) == vals(b)))
            }
            Formula::SoAtom(set, x) => {
                let members = env
                    .so
                    .get(set)
                    .cloned()
                    .ok_or_else(|| EvalError::FreeSetVariable(set.clone()))?;
                let out = self.open_vars(phi, env);
                Ok(self.fill(out, env, |vals| members.contains(vals(x))))
            }
            Formula::Not(inner) => {
                let t = self.eval(inner, env)?;
                let mut bits = t.bits().clone();
                bits.toggle_range(..);
                Ok(Table::from_bits(t.vars().to_vec(), domain, bits))
            }
            Formula::And(l, r) | Formula::Or(l, r) => {
                let lt = self.eval(l, env)?;
                let rt = self.eval(r, env)?;
                let out: Vec<String> = lt
                    .vars()
                    .iter()
                    .chain(rt.vars())
                    .cloned()
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let mut bits = broadcast(&lt, &out);
                let other = broadcast(&rt, &out);
                if matches!(phi, Formula::And(..)) {
                    bits.intersect_with(&other);
                } else {
                    bits.union_with(&other);
                }
                Ok(Table::from_bits(out, domain, bits))
            }
            Formula::Exists(var, body) | Formula::Forall(var, body) | Formula::Count { var, body, .. } => {
                let inner_env = env.without_fo(var);
                let t = self.eval(body, &inner_env)?;
                let (out, counts) = if t.vars().iter().any(|v| v == var) {
                    count_over(&t, var)
                } else {
                    // vacuous binder: every value of var agrees with the body
                    let per = domain as u64;
                    let counts = (0..t.len())
                        .map(|i| if t.bits().contains(i) { per } else { 0 })
                        .collect();
                    (t.vars().to_vec(), counts)
                };
                let test: Box<dyn Fn(u64) -> bool> = match phi {
                    Formula::Exists(..) => Box::new(|c| c >= 1),
                    Formula::Forall(..) => Box::new(move |c| c == domain as u64),
                    Formula::Count { cmp, bound, .. } => {
                        let (cmp, bound) = (*cmp, *bound);
                        Box::new(move |c| cmp.holds(c, bound))
                    }
                    _ => unreachable!(),
                };
                let mut result = Table::empty(out, domain);
                for (i, &c) in counts.iter().enumerate() {
                    if test(c) {
                        result.bits_mut().insert(i);
                    }
                }
                Ok(result)
            }
            Formula::Lfp { .. } => self.lfp_table(phi, env),
        }
    }

    /// Builds a table over `out` by testing each assignment; `test` receives
    /// a lookup from variable name to node (fixed or assigned).
    fn fill(
        &self,
        out: Vec<String>,
        env: &Env,
        test: impl Fn(&dyn Fn(&str) -> usize) -> bool,
    ) -> Table {
        let domain = self.domain();
        let mut table = Table::empty(out, domain);
        let width = table.vars().len();
        let mut odo = Odometer::new(width, domain);
        if odo.remaining() == 0 {
            return table;
        }
        let mut idx = 0usize;
        loop {
            let lookup = |name: &str| -> usize {
                match table.vars().iter().position(|v| v == name) {
                    Some(p) => odo.digits[p],
                    None => env.fo[name],
                }
            };
            if test(&lookup) {
                table.bits_mut().insert(idx);
            }
            idx += 1;
            if odo.advance().is_none() {
                break;
            }
        }
        table
    }

    fn lfp_table(&mut self, phi: &Formula, env: &Env) -> Result<Table, EvalError> {
        let Formula::Lfp {
            set,
            var,
            body,
            arg,
        } = phi
        else {
            unreachable!()
        };
        let domain = self.domain();
        let params: Vec<String> = self
            .vars_of(body)
            .fo
            .iter()
            .filter(|v| *v != var && !env.fo.contains_key(*v))
            .cloned()
            .collect();
        let out = self.open_vars(phi, env);
        let mut result = Table::empty(out.clone(), domain);
        let mut odo = Odometer::new(params.len(), domain);
        if odo.remaining() == 0 {
            return Ok(result);
        }
        loop {
            let mut inner = env.clone();
            for (p, &d) in params.iter().zip(&odo.digits) {
                inner.fo.insert(p.clone(), d);
            }
            let fixpoint = self.iterate(set, var, body, &inner)?;
            let mut tuple: Vec<NodeId> = out
                .iter()
                .map(|v| match params.iter().position(|p| p == v) {
                    Some(k) => NodeId(odo.digits[k]),
                    None => NodeId(0),
                })
                .collect();
            match (env.fo.get(arg), out.iter().position(|v| v == arg)) {
                (Some(&a), _) => {
                    if fixpoint.contains(a) {
                        let i = result.index_of(&tuple);
                        result.bits_mut().insert(i);
                    }
                }
                (None, Some(slot)) => {
                    for a in fixpoint.ones() {
                        tuple[slot] = NodeId(a);
                        let i = result.index_of(&tuple);
                        result.bits_mut().insert(i);
                    }
                }
                (None, None) => unreachable!("lfp argument is free"),
            }
            if odo.advance().is_none() {
                break;
            }
        }
        Ok(result)
    }

    /// Iterates `B ↦ { a | body[set := B, var := a] }` from the empty set.
    fn iterate(&mut self, set: &str, var: &str, body: &Formula, env: &Env) -> Result<FixedBitSet, EvalError> {
        let domain = self.domain();
        let mut inner = env.without_fo(var);
        let mut current = FixedBitSet::with_capacity(domain);
        let mut stages = 0usize;
        let mut trace = Vec::new();
        loop {
            inner.so.insert(set.to_string(), Rc::new(current.clone()));
            let t = self.eval(body, &inner)?;
            stages += 1;
            let next = if t.vars().is_empty() {
                // body independent of var: all or nothing
                let mut all = FixedBitSet::with_capacity(domain);
                if t.truth() {
                    all.insert_range(..);
                }
                all
            } else {
                debug_assert_eq!(t.vars(), [var.to_string()]);
                t.bits().clone()
            };
            debug_assert!(current.is_subset(&next), "non-monotone fixpoint stage");
            if self.opts.trace_lfp {
                trace.push(next.clone());
            }
            if next == current {
                break;
            }
            current = next;
        }
        self.stats.lfp_stages.push(stages);
        if self.opts.trace_lfp {
            self.stats.traces.push(LfpTrace { stages: trace });
        }
        Ok(current)
    }
}

fn check_query(phi: &Formula, ev: &mut Evaluator<'_>) -> Result<(), EvalError> {
    validate(phi)?;
    ev.check_vocabulary(phi)?;
    ev.prepare(phi)?;
    Ok(())
}

/// Checks `phi` on `graph`: a boolean for sentences, a node set for one free
/// variable, a table otherwise.
pub fn eval(graph: &ImprovementGraph, phi: &Formula) -> Result<Verdict, EvalError> {
    eval_with(graph, phi, EvalOptions::default())
}

/// [`eval`], keeping the statistics used for scaling measurements.
pub fn eval_with_stats(graph: &ImprovementGraph, phi: &Formula) -> Result<Verdict, EvalError> {
    eval_with(graph, phi, EvalOptions::default())
}

pub fn eval_with(graph: &ImprovementGraph, phi: &Formula, opts: EvalOptions) -> Result<Verdict, EvalError> {
    let mut ev = Evaluator::new(graph, opts);
    check_query(phi, &mut ev)?;
    if let Some(s) = ev.vars_of(phi).so.iter().next() {
        return Err(EvalError::FreeSetVariable(s.clone()));
    }
    let table = ev.eval(phi, &Env::default())?;
    Ok(Verdict::from_table(&table, ev.stats))
}

/// Table of `phi` over all its free first-order variables, with its free set
/// variables taken from `env.so`. A unary atom named after a set in `env.so`
/// denotes that set. First-order bindings in `env` are ignored.
pub fn eval_sub(graph: &ImprovementGraph, phi: &Formula, env: &Env, opts: EvalOptions) -> Result<Table, EvalError> {
    let bound = bind_set_atoms(phi, env);
    let phi = &bound;
    let mut ev = Evaluator::new(graph, opts);
    check_query(phi, &mut ev)?;
    let so_env = Env {
        fo: BTreeMap::new(),
        so: env.so.clone(),
    };
    if let Some(s) = ev.vars_of(phi).so.iter().find(|s| !env.so.contains_key(*s)) {
        return Err(EvalError::FreeSetVariable(s.clone()));
    }
    let t = ev.eval(phi, &so_env)?;
    Ok((*t).clone())
}

fn bind_set_atoms(phi: &Formula, env: &Env) -> Formula {
    let go = |f: &Formula| Box::new(bind_set_atoms(f, env));
    match phi {
        Formula::Atom(Predicate::Named(name), args) if args.len() == 1 && env.so.contains_key(name) => {
            Formula::SoAtom(name.clone(), args[0].clone())
        }
        Formula::Atom(..) | Formula::Eq(..) | Formula::SoAtom(..) => phi.clone(),
        Formula::Not(f) => Formula::Not(go(f)),
        Formula::And(l, r) => Formula::And(go(l), go(r)),
        Formula::Or(l, r) => Formula::Or(go(l), go(r)),
        Formula::Exists(v, f) => Formula::Exists(v.clone(), go(f)),
        Formula::Forall(v, f) => Formula::Forall(v.clone(), go(f)),
        Formula::Count { var, body, cmp, bound } => Formula::Count {
            var: var.clone(),
            body: go(body),
            cmp: *cmp,
            bound: *bound,
        },
        Formula::Lfp { set, var, body, arg } => Formula::Lfp {
            set: set.clone(),
            var: var.clone(),
            body: go(body),
            arg: arg.clone(),
        },
    }
}

/// Result of one fixpoint computation.
#[derive(Debug, Clone)]
pub struct LfpRun {
    pub fixpoint: BTreeSet<NodeId>,
    /// Stage sets `f(∅), f²(∅), ...` up to the repeated one.
    pub stages: Vec<BTreeSet<NodeId>>,
}

fn split_lfp(lfp: &Formula) -> Result<(&str, &str, &Formula), EvalError> {
    match lfp {
        Formula::Lfp { set, var, body, .. } => Ok((set, var, body)),
        _ => Err(EvalError::InvalidArgument("expected an lfp formula".into())),
    }
}

fn to_set(bits: &FixedBitSet) -> BTreeSet<NodeId> {
    bits.ones().map(NodeId).collect()
}

fn check_lfp_env(ev: &Evaluator<'_>, lfp: &Formula, env: &Env) -> Result<(), EvalError> {
    let (set, var, body) = split_lfp(lfp)?;
    let vs = ev.vars_of(body);
    if let Some(v) = vs.fo.iter().find(|v| *v != var && !env.fo.contains_key(*v)) {
        return Err(EvalError::InvalidArgument(format!("parameter {v} is unassigned")));
    }
    if let Some(s) = vs.so.iter().find(|s| *s != set && !env.so.contains_key(*s)) {
        return Err(EvalError::FreeSetVariable(s.clone()));
    }
    if env.fo.values().any(|&v| v >= ev.domain()) {
        return Err(EvalError::InvalidArgument("assigned node out of range".into()));
    }
    Ok(())
}

/// Least fixed point of the operator induced by an `lfp` formula's body under
/// the given assignment of its parameters, with every stage.
pub fn lfp_eval(graph: &ImprovementGraph, lfp: &Formula, env: &Env) -> Result<LfpRun, EvalError> {
    let opts = EvalOptions {
        trace_lfp: true,
        ..EvalOptions::default()
    };
    let mut ev = Evaluator::new(graph, opts);
    check_query(lfp, &mut ev)?;
    check_lfp_env(&ev, lfp, env)?;
    let (set, var, body) = split_lfp(lfp)?;
    let fixpoint = ev.iterate(set, var, body, env)?;
    let trace = ev.stats.traces.pop().expect("trace recorded");
    Ok(LfpRun {
        fixpoint: to_set(&fixpoint),
        stages: trace.stages.iter().map(to_set).collect(),
    })
}

/// One application of the operator induced by an `lfp` formula's body to `current`.
pub fn apply_operator(
    graph: &ImprovementGraph,
    lfp: &Formula,
    env: &Env,
    current: &BTreeSet<NodeId>,
) -> Result<BTreeSet<NodeId>, EvalError> {
    let mut ev = Evaluator::new(graph, EvalOptions::default());
    check_query(lfp, &mut ev)?;
    check_lfp_env(&ev, lfp, env)?;
    let (set, var, body) = split_lfp(lfp)?;
    let inner = env
        .without_fo(var)
        .with_set(set, current.iter().copied(), graph.node_count());
    let t = ev.eval(body, &inner)?;
    Ok(if t.vars().is_empty() {
        if t.truth() {
            graph.node_ids().collect()
        } else {
            BTreeSet::new()
        }
    } else {
        to_set(t.bits())
    })
}
