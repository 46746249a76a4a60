//! Coalition-labelled improvement graphs.
//!
//! Nodes are choice profiles (one token per agent). An edge `(x, u, y)` says
//! that coalition `u` can move the profile from `x` to `y`: every member of
//! `u` changes its component and every agent outside `u` keeps it. Since the
//! coalition of an edge is determined by its endpoints, there is at most one
//! edge per ordered node pair.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest agent count a [`Coalition`] bitmask can hold.
pub const MAX_AGENTS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("inconsistent graph: {0}")]
    Inconsistent(String),
    #[error("malformed graph file: {0}")]
    Format(String),
}

/// Zero-based agent index. All file formats and printed output use one-based agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(pub usize);

/// Dense node index, stable for the lifetime of its graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Nonempty set of agents, stored as a bitmask over zero-based indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coalition(u64);

impl Coalition {
    pub fn new<I: IntoIterator<Item = AgentId>>(members: I) -> Result<Self, GraphError> {
        let mut bits = 0u64;
        for AgentId(i) in members {
            if i >= MAX_AGENTS {
                return Err(GraphError::InvalidArgument(format!(
                    "agent {} exceeds the {MAX_AGENTS}-agent limit",
                    i + 1
                )));
            }
            if bits & (1 << i) != 0 {
                return Err(GraphError::InvalidArgument(format!(
                    "agent {} listed twice in coalition",
                    i + 1
                )));
            }
            bits |= 1 << i;
        }
        if bits == 0 {
            return Err(GraphError::InvalidArgument("empty coalition".into()));
        }
        Ok(Coalition(bits))
    }

    /// Builds a coalition from one-based agent numbers.
    pub fn from_one_based(agents: &[usize]) -> Result<Self, GraphError> {
        if agents.contains(&0) {
            return Err(GraphError::InvalidArgument(
                "agents are numbered from 1".into(),
            ));
        }
        Self::new(agents.iter().map(|&a| AgentId(a - 1)))
    }

    pub fn singleton(agent: AgentId) -> Self {
        assert!(agent.0 < MAX_AGENTS, "agent index out of range");
        Coalition(1 << agent.0)
    }

    pub(crate) fn from_bits(bits: u64) -> Option<Self> {
        (bits != 0).then_some(Coalition(bits))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn contains(self, agent: AgentId) -> bool {
        agent.0 < MAX_AGENTS && self.0 & (1 << agent.0) != 0
    }

    /// Highest member index plus one.
    pub fn span(self) -> usize {
        MAX_AGENTS - self.0.leading_zeros() as usize
    }

    pub fn members(self) -> impl Iterator<Item = AgentId> {
        (0..MAX_AGENTS)
            .filter(move |i| self.0 & (1 << i) != 0)
            .map(AgentId)
    }

    pub fn one_based(self) -> Vec<usize> {
        self.members().map(|a| a.0 + 1).collect()
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.one_based().iter().map(usize::to_string).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Per-agent choice tokens of one profile.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeLabel(pub Vec<String>);

impl NodeLabel {
    pub fn new<S: Into<String>, I: IntoIterator<Item = S>>(tokens: I) -> Self {
        NodeLabel(tokens.into_iter().map(Into::into).collect())
    }

    pub fn component(&self, agent: AgentId) -> &str {
        &self.0[agent.0]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Agents whose components differ between the two labels.
    pub fn diff(&self, other: &NodeLabel) -> Option<Coalition> {
        let bits = self
            .0
            .iter()
            .zip(&other.0)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .fold(0u64, |acc, (i, _)| acc | (1 << i));
        Coalition::from_bits(bits)
    }
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.0.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub source: NodeId,
    pub coalition: Coalition,
    pub target: NodeId,
}

/// Extensional interpretation of a named node predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AtomInterp {
    Unary(BTreeSet<NodeId>),
    Binary(BTreeSet<(NodeId, NodeId)>),
}

impl AtomInterp {
    pub fn arity(&self) -> usize {
        match self {
            AtomInterp::Unary(_) => 1,
            AtomInterp::Binary(_) => 2,
        }
    }
}

/// True for names the logic reserves for edge relations: `E`, `E_<agents>`, `E#<k>`.
pub fn is_edge_atom_name(name: &str) -> bool {
    name == "E" || name.starts_with("E_") || name.starts_with("E#")
}

#[derive(Debug, Clone)]
pub struct ImprovementGraph {
    n: usize,
    nodes: Vec<NodeLabel>,
    index: HashMap<NodeLabel, NodeId>,
    edges: Vec<Edge>,
    coalition_of: HashMap<(NodeId, NodeId), Coalition>,
    out: Vec<Vec<(Coalition, NodeId)>>,
    inc: Vec<Vec<(Coalition, NodeId)>>,
    atoms: BTreeMap<String, AtomInterp>,
}

impl ImprovementGraph {
    /// Validates and assembles a graph. Duplicate edges are merged.
    pub fn new(
        n: usize,
        nodes: Vec<NodeLabel>,
        edges: impl IntoIterator<Item = Edge>,
        atoms: BTreeMap<String, AtomInterp>,
    ) -> Result<Self, GraphError> {
        if n == 0 || n > MAX_AGENTS {
            return Err(GraphError::InvalidArgument(format!(
                "agent count must be in 1..={MAX_AGENTS}, got {n}"
            )));
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, label) in nodes.iter().enumerate() {
            if label.len() != n {
                return Err(GraphError::Inconsistent(format!(
                    "node {i} has {} components, expected {n}",
                    label.len()
                )));
            }
            if index.insert(label.clone(), NodeId(i)).is_some() {
                return Err(GraphError::Inconsistent(format!(
                    "duplicate node label {label}"
                )));
            }
        }

        let mut edges: Vec<Edge> = edges.into_iter().collect();
        edges.sort_unstable();
        edges.dedup();
        let mut coalition_of = HashMap::with_capacity(edges.len());
        let mut out = vec![Vec::new(); nodes.len()];
        let mut inc = vec![Vec::new(); nodes.len()];
        for e in &edges {
            let (x, y) = (e.source.0, e.target.0);
            if x >= nodes.len() || y >= nodes.len() {
                return Err(GraphError::InvalidArgument(format!(
                    "edge {x}->{y} references a missing node"
                )));
            }
            if e.coalition.span() > n {
                return Err(GraphError::InvalidArgument(format!(
                    "edge {x}->{y} uses coalition {} beyond {n} agents",
                    e.coalition
                )));
            }
            match nodes[x].diff(&nodes[y]) {
                None => {
                    return Err(GraphError::Inconsistent(format!(
                        "self-loop or identical labels on edge {x}->{y}"
                    )))
                }
                Some(d) if d != e.coalition => {
                    return Err(GraphError::Inconsistent(format!(
                        "edge {x}->{y} labelled {} but labels differ exactly at {d}",
                        e.coalition
                    )))
                }
                Some(_) => {}
            }
            if coalition_of.insert((e.source, e.target), e.coalition).is_some() {
                return Err(GraphError::Inconsistent(format!(
                    "two coalitions on edge {x}->{y}"
                )));
            }
            out[x].push((e.coalition, e.target));
            inc[y].push((e.coalition, e.source));
        }

        for (name, interp) in &atoms {
            if is_edge_atom_name(name) {
                return Err(GraphError::InvalidArgument(format!(
                    "atom name {name} is reserved for edge relations"
                )));
            }
            let in_range = |v: &NodeId| v.0 < nodes.len();
            let ok = match interp {
                AtomInterp::Unary(s) => s.iter().all(in_range),
                AtomInterp::Binary(s) => s.iter().all(|(a, b)| in_range(a) && in_range(b)),
            };
            if !ok {
                return Err(GraphError::InvalidArgument(format!(
                    "atom {name} references a missing node"
                )));
            }
        }

        Ok(ImprovementGraph {
            n,
            nodes,
            index,
            edges,
            coalition_of,
            out,
            inc,
            atoms,
        })
    }

    /// One-agent graph over `count` nodes labelled `v0, v1, ...`; handy for
    /// arbitrary digraphs since any two distinct single-token labels differ.
    pub fn single_agent(count: usize, arcs: &[(usize, usize)]) -> Result<Self, GraphError> {
        let width = count.saturating_sub(1).to_string().len();
        let nodes = (0..count)
            .map(|i| NodeLabel::new([format!("v{i:0width$}")]))
            .collect();
        let me = Coalition::singleton(AgentId(0));
        let edges = arcs.iter().map(|&(x, y)| Edge {
            source: NodeId(x),
            coalition: me,
            target: NodeId(y),
        });
        Self::new(1, nodes, edges, BTreeMap::new())
    }

    pub fn agents(&self) -> usize {
        self.n
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn label(&self, x: NodeId) -> &NodeLabel {
        &self.nodes[x.0]
    }

    pub fn labels(&self) -> &[NodeLabel] {
        &self.nodes
    }

    pub fn find(&self, label: &NodeLabel) -> Option<NodeId> {
        self.index.get(label).copied()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn atoms(&self) -> &BTreeMap<String, AtomInterp> {
        &self.atoms
    }

    pub fn atom(&self, name: &str) -> Option<&AtomInterp> {
        self.atoms.get(name)
    }

    /// Adds or replaces a named atom.
    pub fn with_atom(mut self, name: &str, interp: AtomInterp) -> Result<Self, GraphError> {
        let mut atoms = std::mem::take(&mut self.atoms);
        atoms.insert(name.to_string(), interp);
        Self::new(self.n, self.nodes, self.edges, atoms)
    }

    fn check_node(&self, x: NodeId) -> Result<(), GraphError> {
        if x.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(GraphError::InvalidArgument(format!(
                "node {x} out of range (graph has {} nodes)",
                self.nodes.len()
            )))
        }
    }

    fn check_coalition(&self, u: Coalition) -> Result<(), GraphError> {
        if u.span() <= self.n {
            Ok(())
        } else {
            Err(GraphError::InvalidArgument(format!(
                "coalition {u} names agents beyond {}",
                self.n
            )))
        }
    }

    /// The coalition labelling `x -> y`, if the edge exists.
    pub fn coalition(&self, x: NodeId, y: NodeId) -> Option<Coalition> {
        self.coalition_of.get(&(x, y)).copied()
    }

    pub fn edge(&self, u: Coalition, x: NodeId, y: NodeId) -> Result<bool, GraphError> {
        self.check_node(x)?;
        self.check_node(y)?;
        self.check_coalition(u)?;
        Ok(self.coalition(x, y) == Some(u))
    }

    /// Unilateral edge under any agent.
    pub fn union_edge(&self, x: NodeId, y: NodeId) -> Result<bool, GraphError> {
        self.check_node(x)?;
        self.check_node(y)?;
        Ok(self.coalition(x, y).is_some_and(|u| u.len() == 1))
    }

    /// Edge under a coalition of at most `k` agents.
    pub fn k_edge(&self, k: usize, x: NodeId, y: NodeId) -> Result<bool, GraphError> {
        self.check_k(k)?;
        self.check_node(x)?;
        self.check_node(y)?;
        Ok(self.coalition(x, y).is_some_and(|u| u.len() <= k))
    }

    pub(crate) fn check_k(&self, k: usize) -> Result<(), GraphError> {
        if (1..=self.n).contains(&k) {
            Ok(())
        } else {
            Err(GraphError::InvalidArgument(format!(
                "coalition bound k={k} outside 1..={}",
                self.n
            )))
        }
    }

    pub fn successors(&self, x: NodeId) -> Result<BTreeSet<NodeId>, GraphError> {
        self.check_node(x)?;
        Ok(self.out[x.0].iter().map(|&(_, y)| y).collect())
    }

    pub fn predecessors(&self, x: NodeId) -> Result<BTreeSet<NodeId>, GraphError> {
        self.check_node(x)?;
        Ok(self.inc[x.0].iter().map(|&(_, y)| y).collect())
    }

    /// Outgoing `(coalition, target)` pairs without range checking the source.
    pub fn out_edges(&self, x: NodeId) -> &[(Coalition, NodeId)] {
        &self.out[x.0]
    }

    pub fn in_edges(&self, x: NodeId) -> &[(Coalition, NodeId)] {
        &self.inc[x.0]
    }

    /// Adjacency rows (one bitset of targets per source) for edges whose
    /// coalition satisfies `keep`.
    pub fn adjacency(&self, keep: impl Fn(Coalition) -> bool) -> Vec<FixedBitSet> {
        let count = self.nodes.len();
        let mut rows = vec![FixedBitSet::with_capacity(count); count];
        for e in &self.edges {
            if keep(e.coalition) {
                rows[e.source.0].insert(e.target.0);
            }
        }
        rows
    }
}

// ---------------------------------------------------------------------------
// JSON file format

#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    n: usize,
    nodes: Vec<Vec<String>>,
    edges: Vec<(usize, Vec<usize>, usize)>,
    #[serde(default)]
    atoms: BTreeMap<String, AtomFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AtomFile {
    arity: usize,
    tuples: Vec<TupleFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum TupleFile {
    One(usize),
    Many(Vec<usize>),
}

impl ImprovementGraph {
    pub fn to_json(&self) -> String {
        let file = GraphFile {
            n: self.n,
            nodes: self.nodes.iter().map(|l| l.0.clone()).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| (e.source.0, e.coalition.one_based(), e.target.0))
                .collect(),
            atoms: self
                .atoms
                .iter()
                .map(|(name, interp)| {
                    let (arity, tuples) = match interp {
                        AtomInterp::Unary(s) => (1, s.iter().map(|v| TupleFile::One(v.0)).collect()),
                        AtomInterp::Binary(s) => (
                            2,
                            s.iter().map(|(a, b)| TupleFile::Many(vec![a.0, b.0])).collect(),
                        ),
                    };
                    (name.clone(), AtomFile { arity, tuples })
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("graph serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let file: GraphFile =
            serde_json::from_str(text).map_err(|e| GraphError::Format(e.to_string()))?;
        let edges = file
            .edges
            .iter()
            .map(|(x, agents, y)| {
                Ok(Edge {
                    source: NodeId(*x),
                    coalition: Coalition::from_one_based(agents)?,
                    target: NodeId(*y),
                })
            })
            .collect::<Result<Vec<_>, GraphError>>()?;
        let mut atoms = BTreeMap::new();
        for (name, atom) in file.atoms {
            let interp = match atom.arity {
                1 => AtomInterp::Unary(
                    atom.tuples
                        .iter()
                        .map(|t| match t {
                            TupleFile::One(v) => Ok(NodeId(*v)),
                            TupleFile::Many(v) if v.len() == 1 => Ok(NodeId(v[0])),
                            _ => Err(GraphError::Format(format!("atom {name}: expected unary tuples"))),
                        })
                        .collect::<Result<_, _>>()?,
                ),
                2 => AtomInterp::Binary(
                    atom.tuples
                        .iter()
                        .map(|t| match t {
                            TupleFile::Many(v) if v.len() == 2 => Ok((NodeId(v[0]), NodeId(v[1]))),
                            _ => Err(GraphError::Format(format!("atom {name}: expected pairs"))),
                        })
                        .collect::<Result<_, _>>()?,
                ),
                a => return Err(GraphError::Format(format!("atom {name}: unsupported arity {a}"))),
            };
            atoms.insert(name, interp);
        }
        let nodes = file.nodes.into_iter().map(NodeLabel).collect();
        Self::new(file.n, nodes, edges, atoms)
    }
}
