//! Named formulas for equilibrium and convergence properties.
//!
//! Constructors render concrete syntax and parse it, so built-in properties
//! pass the same well-formedness checks as user formulas.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::builders::coalitions;
use crate::logic::{free_vars, parse, Formula, LogicError};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PropertyError {
    #[error("unknown property `{0}`")]
    Unknown(String),
    #[error("property `{property}` needs parameter `{param}`")]
    MissingParam { property: String, param: &'static str },
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("embedded predicate: {0}")]
    Predicate(String),
    #[error(transparent)]
    Logic(#[from] LogicError),
}

/// `x` has no outgoing edge.
pub fn sink() -> Formula {
    parse_known(&sink_text("x", "y"))
}

fn sink_text(x: &str, y: &str) -> String {
    format!("all {y}. !E({x},{y})")
}

/// No edge of a coalition with at most `k` members leaves `x`.
pub fn sink_k(k: usize) -> Result<Formula, PropertyError> {
    check_k(k, None)?;
    Ok(parse_known(&format!("all y. !E#{k}(x,y)")))
}

/// [`sink_k`] with the bounded edge spelled out as a disjunction over every
/// coalition of `n` agents with at most `k` members.
pub fn sink_k_literal(k: usize, n: usize) -> Result<Formula, PropertyError> {
    check_k(k, Some(n))?;
    Ok(parse_known(&format!("all y. !({})", k_edge_literal(k, n, "x", "y"))))
}

fn k_edge_literal(k: usize, n: usize, a: &str, b: &str) -> String {
    coalitions(n, 1, k)
        .map(|u| {
            let parts: Vec<String> = u.one_based().iter().map(usize::to_string).collect();
            format!("E_{{{}}}({a},{b})", parts.join(","))
        })
        .collect::<Vec<_>>()
        .join(" | ")
}

fn check_k(k: usize, n: Option<usize>) -> Result<(), PropertyError> {
    if k == 0 {
        return Err(PropertyError::OutOfRange("k must be at least 1".into()));
    }
    if let Some(n) = n {
        if k > n {
            return Err(PropertyError::OutOfRange(format!("k = {k} exceeds n = {n}")));
        }
    }
    Ok(())
}

const TRAP: &str = "all y. (E(y,x) -> S(y))";

fn reach_text(target: &str) -> String {
    format!("({target}) | (ex y. (E(x,y) & S(y)))")
}

/// Every node lies outside the reach of any cycle.
pub fn acyclic() -> Formula {
    parse_known(&format!("all u. lfp S,x. ({TRAP}) @ u"))
}

/// Nodes that no cycle can reach.
pub fn acyclic_nodes() -> Formula {
    parse_known(&format!("lfp S,x. ({TRAP}) @ u"))
}

/// Some improvement path from every node ends in a sink.
pub fn weakly_acyclic() -> Formula {
    parse_known(&format!("all u. lfp S,x. ({}) @ u", reach_text(&sink_text("x", "z"))))
}

/// Nodes with an improvement path to a sink.
pub fn sink_reach_nodes() -> Formula {
    parse_known(&format!("lfp S,x. ({}) @ u", reach_text(&sink_text("x", "z"))))
}

/// The graph restricted to coalitions of at most `k` agents is acyclic.
pub fn k_fip(k: usize) -> Result<Formula, PropertyError> {
    check_k(k, None)?;
    Ok(parse_known(&format!("all u. lfp S,x. (all y. (E#{k}(y,x) -> S(y))) @ u")))
}

/// [`k_fip`] with the bounded edge spelled out for `n` agents.
pub fn k_fip_literal(k: usize, n: usize) -> Result<Formula, PropertyError> {
    check_k(k, Some(n))?;
    Ok(parse_known(&format!(
        "all u. lfp S,x. (all y. (({}) -> S(y))) @ u",
        k_edge_literal(k, n, "y", "x")
    )))
}

pub fn k_fip_nodes(k: usize) -> Result<Formula, PropertyError> {
    check_k(k, None)?;
    Ok(parse_known(&format!("lfp S,x. (all y. (E#{k}(y,x) -> S(y))) @ u")))
}

/// From every node some path (possibly empty) reaches a node satisfying
/// `phi`, which must have exactly one free first-order variable.
pub fn phi_reachable(phi: &Formula) -> Result<Formula, PropertyError> {
    phi_reachable_within(phi, None)
}

/// Nodes from which a `phi` node is reachable. The free variable is `u`,
/// or a fresh variant of it when `phi` already uses that name.
pub fn phi_reach_nodes(phi: &Formula) -> Result<Formula, PropertyError> {
    phi_reach_nodes_within(phi, None)
}

/// [`phi_reachable`] along edges of coalitions of at most `k` agents when
/// `k` is given, which is what allocation graphs need.
pub fn phi_reachable_within(phi: &Formula, k: Option<usize>) -> Result<Formula, PropertyError> {
    let (body, u) = phi_reach_body(phi, k)?;
    Ok(parse_known(&format!("all {u}. {body}")))
}

pub fn phi_reach_nodes_within(phi: &Formula, k: Option<usize>) -> Result<Formula, PropertyError> {
    Ok(parse_known(&phi_reach_body(phi, k)?.0))
}

fn phi_reach_body(phi: &Formula, k: Option<usize>) -> Result<(String, String), PropertyError> {
    let edge = match k {
        None => "E".to_string(),
        Some(k) => {
            check_k(k, None)?;
            format!("E#{k}")
        }
    };
    let (var, set, y, u) = reach_names(phi)?;
    let body = format!("lfp {set},{var}. (({phi}) | (ex {y}. ({edge}({var},{y}) & {set}({y})))) @ {u}");
    Ok((body, u))
}

fn reach_names(phi: &Formula) -> Result<(String, String, String, String), PropertyError> {
    let free = free_vars(phi);
    if !free.so.is_empty() {
        return Err(PropertyError::Predicate(format!(
            "free set variables are not allowed: {}",
            free.so.iter().cloned().collect::<Vec<_>>().join(", ")
        )));
    }
    if free.fo.len() != 1 {
        return Err(PropertyError::Predicate(format!(
            "expected exactly one free variable, found {}",
            free.fo.len()
        )));
    }
    let var = free.fo.into_iter().next().expect("one variable");
    let mut used = BTreeSet::new();
    names_in(phi, &mut used);
    let mut fresh = |base: &str| {
        let mut name = base.to_string();
        let mut i = 1;
        while used.contains(&name) {
            name = format!("{base}{i}");
            i += 1;
        }
        used.insert(name.clone());
        name
    };
    let set = fresh("S");
    let y = fresh("y");
    let u = fresh("u");
    Ok((var, set, y, u))
}

fn names_in(f: &Formula, out: &mut BTreeSet<String>) {
    match f {
        Formula::Atom(_, args) => out.extend(args.iter().cloned()),
        Formula::Eq(a, b) | Formula::SoAtom(a, b) => {
            out.insert(a.clone());
            out.insert(b.clone());
        }
        Formula::Exists(v, _) | Formula::Forall(v, _) | Formula::Count { var: v, .. } => {
            out.insert(v.clone());
        }
        Formula::Lfp { set, var, arg, .. } => {
            out.insert(set.clone());
            out.insert(var.clone());
            out.insert(arg.clone());
        }
        Formula::Not(_) | Formula::And(..) | Formula::Or(..) => {}
    }
    for c in f.children() {
        names_in(c, out);
    }
}

/// Fewer than `bound` nodes have an improvement path to a sink.
pub fn path_count(bound: u64) -> Formula {
    parse_known(&format!(
        "C u (lfp S,x. ({}) @ u) < {bound}",
        reach_text(&sink_text("x", "z"))
    ))
}

/// The counting trap sentence: a node enters once, if its in-degree is
/// below `k`, all its predecessors are in.
pub fn special(k: u64) -> Result<Formula, PropertyError> {
    if k == 0 {
        return Err(PropertyError::OutOfRange("k must be at least 1".into()));
    }
    Ok(parse_known(&format!(
        "all u. lfp S,x. ((C y (E(y,x)) < {k}) -> (all z. (E(z,x) -> S(z)))) @ u"
    )))
}

/// No agent envies another at `x`: for agents `i != j` there is no node
/// `y` that `i` strictly prefers to `x` and where `i` holds `j`'s bundle
/// at `x`. Needs the `pref_i` and `samebundle_i_j` atoms.
pub fn envy_free(n: usize) -> Result<Formula, PropertyError> {
    if n == 0 {
        return Err(PropertyError::OutOfRange("n must be at least 1".into()));
    }
    if n == 1 {
        return Ok(parse_known("x = x"));
    }
    let mut parts = Vec::new();
    for i in 1..=n {
        for j in (1..=n).filter(|&j| j != i) {
            parts.push(format!("!(ex y. (samebundle_{i}_{j}(y,x) & pref_{i}(x,y)))"));
        }
    }
    Ok(parse_known(&parts.join(" & ")))
}

fn parse_known(text: &str) -> Formula {
    parse(text).unwrap_or_else(|e| panic!("built-in formula `{text}` does not parse: {e}"))
}

/// Parameters a named property may take.
#[derive(Debug, Clone, Default)]
pub struct PropertyArgs {
    pub k: Option<usize>,
    pub bound: Option<u64>,
    /// Agent count, needed for the literal coalition forms and envy-freeness.
    pub n: Option<usize>,
    /// Embedded node predicate for reachability properties.
    pub phi: Option<Formula>,
    /// Spell bounded edges out as coalition disjunctions.
    pub literal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PropertyInfo {
    pub name: &'static str,
    pub params: &'static str,
    pub summary: &'static str,
}

pub const PROPERTIES: &[PropertyInfo] = &[
    PropertyInfo {
        name: "sink",
        params: "",
        summary: "nodes without outgoing edges (Nash equilibria on unilateral graphs)",
    },
    PropertyInfo {
        name: "sink-k",
        params: "k [n with --literal]",
        summary: "nodes no coalition of at most k agents can leave",
    },
    PropertyInfo {
        name: "acyclic",
        params: "",
        summary: "every improvement path is finite",
    },
    PropertyInfo {
        name: "acyclic-nodes",
        params: "",
        summary: "nodes no cycle can reach",
    },
    PropertyInfo {
        name: "weakly-acyclic",
        params: "",
        summary: "every node has an improvement path to a sink",
    },
    PropertyInfo {
        name: "sink-reach-nodes",
        params: "",
        summary: "nodes with an improvement path to a sink",
    },
    PropertyInfo {
        name: "k-fip",
        params: "k [n with --literal]",
        summary: "every improvement path by coalitions of at most k agents is finite",
    },
    PropertyInfo {
        name: "k-fip-nodes",
        params: "k",
        summary: "nodes no cycle of the k-coalition graph can reach",
    },
    PropertyInfo {
        name: "phi-reachable",
        params: "phi [k]",
        summary: "every node reaches a node satisfying phi",
    },
    PropertyInfo {
        name: "phi-reach-nodes",
        params: "phi [k]",
        summary: "nodes that reach a node satisfying phi",
    },
    PropertyInfo {
        name: "path-count",
        params: "bound",
        summary: "fewer than bound nodes have an improvement path to a sink",
    },
    PropertyInfo {
        name: "special",
        params: "k",
        summary: "counting trap: nodes of in-degree below k enter once their predecessors have",
    },
    PropertyInfo {
        name: "envy-free",
        params: "n",
        summary: "allocations at which no agent envies another",
    },
    PropertyInfo {
        name: "envy-free-reachable",
        params: "n [k]",
        summary: "every node reaches an envy-free allocation",
    },
];

/// Canonical (hyphenated) name of a property, accepting underscores.
pub fn canonical_name(name: &str) -> Option<&'static str> {
    let wanted = name.trim().replace('_', "-");
    PROPERTIES.iter().map(|p| p.name).find(|p| *p == wanted)
}

/// Builds a property by name.
pub fn property(name: &str, args: &PropertyArgs) -> Result<Formula, PropertyError> {
    let canon = canonical_name(name).ok_or_else(|| PropertyError::Unknown(name.to_string()))?;
    let missing = |param| PropertyError::MissingParam {
        property: canon.to_string(),
        param,
    };
    let k = || args.k.ok_or_else(|| missing("k"));
    let n = || args.n.ok_or_else(|| missing("n"));
    let phi = || args.phi.as_ref().ok_or_else(|| missing("phi"));
    match canon {
        "sink" => Ok(sink()),
        "sink-k" if args.literal => sink_k_literal(k()?, n()?),
        "sink-k" => {
            if let Some(n) = args.n {
                check_k(k()?, Some(n))?;
            }
            sink_k(k()?)
        }
        "acyclic" => Ok(acyclic()),
        "acyclic-nodes" => Ok(acyclic_nodes()),
        "weakly-acyclic" => Ok(weakly_acyclic()),
        "sink-reach-nodes" => Ok(sink_reach_nodes()),
        "k-fip" if args.literal => k_fip_literal(k()?, n()?),
        "k-fip" => {
            if let Some(n) = args.n {
                check_k(k()?, Some(n))?;
            }
            k_fip(k()?)
        }
        "k-fip-nodes" => k_fip_nodes(k()?),
        "phi-reachable" => phi_reachable_within(phi()?, args.k),
        "phi-reach-nodes" => phi_reach_nodes_within(phi()?, args.k),
        "path-count" => Ok(path_count(args.bound.ok_or_else(|| missing("bound"))?)),
        "special" => special(k()? as u64),
        "envy-free" => envy_free(n()?),
        "envy-free-reachable" => phi_reachable_within(&envy_free(n()?)?, args.k),
        _ => unreachable!("registry and dispatch disagree on {canon}"),
    }
}
