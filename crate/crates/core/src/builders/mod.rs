//! Compilers from source models to improvement graphs.
//!
//! All builders enumerate the full choice space, sort node labels
//! lexicographically, and only emit edges for strict improvements.

mod allocation;
mod game;
mod json;
mod voting;

use thiserror::Error;

use crate::graph::{Coalition, GraphError};

pub use allocation::{
    build_allocation_graph, build_allocation_graph_with, top_trading_cycle, AllocationInstance,
    AllocationPrefs, Bundle, BundleUtility, ATOM_NODE_LIMIT,
};
pub use game::{build_game_graph, build_game_graph_with, GameInstance, GameMode};
pub use voting::{
    ballot_token, build_voting_graph, build_voting_graph_with, CommitteePrefs, VotingInstance,
    VotingRule, MAX_CANDIDATES, MAX_VOTERS,
};

/// Node count above which builders refuse to run unless forced.
pub const DEFAULT_MAX_NODES: usize = 1_000_000;

/// Environment variable overriding [`DEFAULT_MAX_NODES`].
pub const GUARD_ENV: &str = "IGCHECK_GUARD_NODES";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BuildError {
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("resource limit: {0}")]
    Resource(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_nodes: usize,
    /// Skip every size guard.
    pub force: bool,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_nodes: DEFAULT_MAX_NODES,
            force: false,
        }
    }
}

impl Limits {
    /// Default limits with the node guard taken from `IGCHECK_GUARD_NODES` when set.
    pub fn from_env() -> Self {
        let max_nodes = std::env::var(GUARD_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_MAX_NODES);
        Limits {
            max_nodes,
            force: false,
        }
    }

    pub fn forced() -> Self {
        Limits {
            force: true,
            ..Limits::default()
        }
    }

    pub(crate) fn check_nodes(&self, count: Option<usize>, what: &str) -> Result<usize, BuildError> {
        let count = count.ok_or_else(|| BuildError::Resource(format!("{what}: node count overflows")))?;
        if count > self.max_nodes && !self.force {
            return Err(BuildError::Resource(format!(
                "{what}: {count} nodes exceeds the guard of {}",
                self.max_nodes
            )));
        }
        Ok(count)
    }
}

/// Any of the three source models.
#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Game(GameInstance),
    Voting(VotingInstance),
    Allocation(AllocationInstance),
}

impl Instance {
    /// Parses an instance file. The model is taken from `"kind"` when
    /// present (`game`, `voting`, `allocation`) and otherwise inferred from
    /// the keys `strategies`, `rule` or `items`.
    pub fn from_json(text: &str) -> Result<Self, BuildError> {
        let value = json::parse_json(text)?;
        let root = json::At::root(&value);
        if !value.is_object() {
            return root.err("expected an object");
        }
        let kind = match root.opt("kind") {
            Some(k) => k.str()?.to_string(),
            None if root.has("strategies") => "game".into(),
            None if root.has("rule") => "voting".into(),
            None if root.has("items") => "allocation".into(),
            None => return root.err("cannot tell the instance kind; add `kind`"),
        };
        match kind.as_str() {
            "game" => Ok(Instance::Game(GameInstance::from_value(&root)?)),
            "voting" => Ok(Instance::Voting(VotingInstance::from_value(&root)?)),
            "allocation" | "housing" => Ok(Instance::Allocation(AllocationInstance::from_value(&root)?)),
            other => root.field("kind")?.err(format!("unknown kind `{other}`")),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Instance::Game(_) => "game",
            Instance::Voting(_) => "voting",
            Instance::Allocation(_) => "allocation",
        }
    }
}

/// All coalitions over `n` agents with between `min` and `max` members, in
/// increasing bitmask order.
pub(crate) fn coalitions(n: usize, min: usize, max: usize) -> impl Iterator<Item = Coalition> {
    (1u64..(1u64 << n))
        .filter(move |b| (min..=max).contains(&(b.count_ones() as usize)))
        .filter_map(Coalition::from_bits)
}
