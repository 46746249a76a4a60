use std::collections::BTreeMap;

use serde_json::Value;

use super::json::{agent_key, At};
use super::{coalitions, BuildError, Limits};
use crate::graph::{AgentId, Coalition, Edge, ImprovementGraph, NodeId, NodeLabel};

/// Which deviations become edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameMode {
    /// Single-agent strict improvements.
    Unilateral,
    /// Joint deviations by up to `k` agents, each of whom changes strategy
    /// and strictly gains.
    Coalition(usize),
    /// Unilateral improvements that land on a best response.
    BestResponse,
}

impl std::str::FromStr for GameMode {
    type Err = BuildError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unilateral" => Ok(GameMode::Unilateral),
            "best-response" | "best_response" => Ok(GameMode::BestResponse),
            _ => match s.strip_prefix("coalition") {
                Some(rest) => {
                    let k = rest
                        .trim_start_matches([':', '(', '='])
                        .trim_end_matches(')')
                        .parse()
                        .map_err(|_| BuildError::Invalid(format!("bad coalition mode `{s}`")))?;
                    Ok(GameMode::Coalition(k))
                }
                None => Err(BuildError::Invalid(format!("unknown game mode `{s}`"))),
            },
        }
    }
}

/// A finite normal-form game with one utility per agent and profile.
///
/// Profiles are indexed in mixed radix with agent 1 most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct GameInstance {
    strategies: Vec<Vec<String>>,
    utilities: Vec<Vec<f64>>,
}

impl GameInstance {
    /// `utilities[i][p]` is agent `i`'s payoff at profile index `p`.
    pub fn new(strategies: Vec<Vec<String>>, utilities: Vec<Vec<f64>>) -> Result<Self, BuildError> {
        let profiles = check_strategies(&strategies)?;
        if utilities.len() != strategies.len() {
            return Err(BuildError::Invalid(format!(
                "{} utility vectors for {} agents",
                utilities.len(),
                strategies.len()
            )));
        }
        for (i, u) in utilities.iter().enumerate() {
            if u.len() != profiles {
                return Err(BuildError::Invalid(format!(
                    "agent {} has {} utilities for {profiles} profiles",
                    i + 1,
                    u.len()
                )));
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(BuildError::Invalid(format!(
                    "agent {} has a non-finite utility",
                    i + 1
                )));
            }
        }
        Ok(GameInstance {
            strategies,
            utilities,
        })
    }

    /// Builds utilities from `f(agent, strategy_indices)`.
    pub fn from_fn(
        strategies: Vec<Vec<String>>,
        f: impl Fn(usize, &[usize]) -> f64,
    ) -> Result<Self, BuildError> {
        let profiles = check_strategies(&strategies)?;
        let radix: Vec<usize> = strategies.iter().map(Vec::len).collect();
        let mut utilities = vec![Vec::with_capacity(profiles); strategies.len()];
        let mut digits = vec![0; radix.len()];
        for _ in 0..profiles {
            for (i, u) in utilities.iter_mut().enumerate() {
                u.push(f(i, &digits));
            }
            step(&mut digits, &radix);
        }
        Self::new(strategies, utilities)
    }

    /// Builds preferences from rankings: `rankings[i]` lists tiers of
    /// profiles (as strategy indices), best tier first. Profiles within a
    /// tier are tied; every profile must appear exactly once per agent.
    pub fn from_rankings(
        strategies: Vec<Vec<String>>,
        rankings: &[Vec<Vec<Vec<usize>>>],
    ) -> Result<Self, BuildError> {
        let profiles = check_strategies(&strategies)?;
        if rankings.len() != strategies.len() {
            return Err(BuildError::Invalid(format!(
                "{} rankings for {} agents",
                rankings.len(),
                strategies.len()
            )));
        }
        let radix: Vec<usize> = strategies.iter().map(Vec::len).collect();
        let mut utilities = Vec::with_capacity(rankings.len());
        for (i, tiers) in rankings.iter().enumerate() {
            let mut u = vec![f64::NAN; profiles];
            for (t, tier) in tiers.iter().enumerate() {
                for profile in tier {
                    let p = index_of(&radix, profile).ok_or_else(|| {
                        BuildError::Invalid(format!("agent {} ranks an invalid profile", i + 1))
                    })?;
                    if !u[p].is_nan() {
                        return Err(BuildError::Invalid(format!(
                            "agent {} ranks a profile twice",
                            i + 1
                        )));
                    }
                    u[p] = -(t as f64);
                }
            }
            if u.iter().any(|v| v.is_nan()) {
                return Err(BuildError::Invalid(format!(
                    "agent {} leaves a profile unranked",
                    i + 1
                )));
            }
            utilities.push(u);
        }
        Self::new(strategies, utilities)
    }

    pub fn agents(&self) -> usize {
        self.strategies.len()
    }

    pub fn strategies(&self) -> &[Vec<String>] {
        &self.strategies
    }

    pub fn profile_count(&self) -> usize {
        self.utilities[0].len()
    }

    pub fn utility(&self, agent: usize, profile: &[usize]) -> f64 {
        self.utilities[agent][self.profile_index(profile)]
    }

    pub fn profile_index(&self, profile: &[usize]) -> usize {
        index_of(&self.radix(), profile).expect("profile out of range")
    }

    pub fn profile_of(&self, mut index: usize) -> Vec<usize> {
        let radix = self.radix();
        let mut digits = vec![0; radix.len()];
        for (d, r) in digits.iter_mut().zip(&radix).rev() {
            *d = index % r;
            index /= r;
        }
        digits
    }

    pub fn label(&self, profile: &[usize]) -> NodeLabel {
        NodeLabel::new(
            profile
                .iter()
                .zip(&self.strategies)
                .map(|(&s, names)| names[s].clone()),
        )
    }

    fn radix(&self) -> Vec<usize> {
        self.strategies.iter().map(Vec::len).collect()
    }

    pub(crate) fn from_value(at: &At<'_>) -> Result<Self, BuildError> {
        let strat_at = at.field("strategies")?;
        let mut strategies = Vec::new();
        for s in strat_at.items()? {
            strategies.push(s.strings()?);
        }
        if let Err(BuildError::Invalid(msg)) = check_strategies(&strategies) {
            return strat_at.err(msg);
        }
        let n = strategies.len();
        let radix: Vec<usize> = strategies.iter().map(Vec::len).collect();
        let lookup: Vec<BTreeMap<&str, usize>> = strategies
            .iter()
            .map(|names| names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect())
            .collect();
        let profiles: usize = radix.iter().product();

        let util_at = at.field("utilities")?;
        let mut utilities: Vec<Option<Vec<f64>>> = vec![None; n];
        for (key, per_agent) in util_at.entries()? {
            let agent = agent_key(&per_agent, key, n)?;
            let mut u = vec![f64::NAN; profiles];
            for (pkey, value) in per_agent.entries()? {
                let tokens: Vec<&str> = pkey.split(',').map(str::trim).collect();
                if tokens.len() != n {
                    return value.err(format!("profile key must name {n} strategies"));
                }
                let mut profile = Vec::with_capacity(n);
                for (i, t) in tokens.iter().enumerate() {
                    match lookup[i].get(t) {
                        Some(&s) => profile.push(s),
                        None => return value.err(format!("unknown strategy `{t}` for agent {}", i + 1)),
                    }
                }
                u[index_of(&radix, &profile).expect("in range")] = value.f64()?;
            }
            if let Some(p) = u.iter().position(|v| v.is_nan()) {
                let mut digits = vec![0; n];
                let mut rest = p;
                for (d, r) in digits.iter_mut().zip(&radix).rev() {
                    *d = rest % r;
                    rest /= r;
                }
                let key: Vec<&str> = digits
                    .iter()
                    .zip(&strategies)
                    .map(|(&d, s)| s[d].as_str())
                    .collect();
                return per_agent.err(format!("missing utility for profile `{}`", key.join(",")));
            }
            utilities[agent] = Some(u);
        }
        let mut out = Vec::with_capacity(n);
        for (i, u) in utilities.into_iter().enumerate() {
            match u {
                Some(u) => out.push(u),
                None => return util_at.err(format!("missing utilities for agent {}", i + 1)),
            }
        }
        Self::new(strategies, out)
    }

    /// Instance JSON in the same shape `from_value` reads.
    pub fn to_value(&self) -> Value {
        let mut utilities = serde_json::Map::new();
        for (i, u) in self.utilities.iter().enumerate() {
            let mut per = serde_json::Map::new();
            for (p, v) in u.iter().enumerate() {
                let key: Vec<String> = self.label(&self.profile_of(p)).0;
                per.insert(key.join(","), Value::from(*v));
            }
            utilities.insert((i + 1).to_string(), Value::Object(per));
        }
        serde_json::json!({ "strategies": self.strategies, "utilities": utilities })
    }
}

fn check_strategies(strategies: &[Vec<String>]) -> Result<usize, BuildError> {
    if strategies.is_empty() || strategies.len() > crate::graph::MAX_AGENTS {
        return Err(BuildError::Invalid(format!(
            "agent count must be in 1..={}",
            crate::graph::MAX_AGENTS
        )));
    }
    let mut profiles = 1usize;
    for (i, names) in strategies.iter().enumerate() {
        if names.is_empty() {
            return Err(BuildError::Invalid(format!("agent {} has no strategies", i + 1)));
        }
        for (j, s) in names.iter().enumerate() {
            if s.is_empty() || s.contains(',') || s.chars().any(char::is_whitespace) {
                return Err(BuildError::Invalid(format!(
                    "strategy name `{s}` of agent {} must be a nonempty token without commas or spaces",
                    i + 1
                )));
            }
            if names[..j].contains(s) {
                return Err(BuildError::Invalid(format!(
                    "agent {} repeats strategy `{s}`",
                    i + 1
                )));
            }
        }
        profiles = profiles
            .checked_mul(names.len())
            .ok_or_else(|| BuildError::Resource("profile count overflows".into()))?;
    }
    Ok(profiles)
}

fn index_of(radix: &[usize], profile: &[usize]) -> Option<usize> {
    if profile.len() != radix.len() {
        return None;
    }
    profile.iter().zip(radix).try_fold(0usize, |acc, (&d, &r)| {
        (d < r).then(|| acc * r + d)
    })
}

fn step(digits: &mut [usize], radix: &[usize]) {
    for (d, r) in digits.iter_mut().zip(radix).rev() {
        *d += 1;
        if *d < *r {
            return;
        }
        *d = 0;
    }
}

/// Compiles a game into its improvement graph under `mode`, using the
/// node guard from the environment.
pub fn build_game_graph(game: &GameInstance, mode: GameMode) -> Result<ImprovementGraph, BuildError> {
    build_game_graph_with(game, mode, &Limits::from_env())
}

pub fn build_game_graph_with(
    game: &GameInstance,
    mode: GameMode,
    limits: &Limits,
) -> Result<ImprovementGraph, BuildError> {
    let n = game.agents();
    let profiles = limits.check_nodes(Some(game.profile_count()), "game")?;
    let max_size = match mode {
        GameMode::Unilateral | GameMode::BestResponse => 1,
        GameMode::Coalition(0) => {
            return Err(BuildError::Invalid("coalition size must be at least 1".into()))
        }
        GameMode::Coalition(k) => k.min(n),
    };
    let radix = game.radix();
    let labels: Vec<NodeLabel> = (0..profiles).map(|p| game.label(&game.profile_of(p))).collect();
    let order = sorted_ids(&labels);

    let groups: Vec<Coalition> = coalitions(n, 1, max_size).collect();
    let mut edges = Vec::new();
    let mut digits = vec![0; n];
    for p in 0..profiles {
        for &u in &groups {
            let members: Vec<usize> = u.members().map(|a| a.0).collect();
            if mode == GameMode::BestResponse {
                best_response_edges(game, &radix, &digits, p, members[0], &order, &mut edges);
                continue;
            }
            // every member switches to some other strategy
            let mut choice: Vec<usize> = members.iter().map(|_| 0).collect();
            let alt: Vec<usize> = members.iter().map(|&i| radix[i] - 1).collect();
            if alt.contains(&0) {
                continue;
            }
            loop {
                let mut q = digits.clone();
                for (k, &i) in members.iter().enumerate() {
                    let c = choice[k];
                    q[i] = if c >= digits[i] { c + 1 } else { c };
                }
                let qi = index_of(&radix, &q).expect("in range");
                if members
                    .iter()
                    .all(|&i| game.utilities[i][qi] > game.utilities[i][p])
                {
                    edges.push(Edge {
                        source: order[p],
                        coalition: u,
                        target: order[qi],
                    });
                }
                if !bump(&mut choice, &alt) {
                    break;
                }
            }
        }
        step(&mut digits, &radix);
    }
    let mut nodes = vec![NodeLabel(Vec::new()); profiles];
    for (p, label) in labels.into_iter().enumerate() {
        nodes[order[p].0] = label;
    }
    Ok(ImprovementGraph::new(n, nodes, edges, BTreeMap::new())?)
}

fn best_response_edges(
    game: &GameInstance,
    radix: &[usize],
    digits: &[usize],
    p: usize,
    agent: usize,
    order: &[NodeId],
    edges: &mut Vec<Edge>,
) {
    let u = &game.utilities[agent];
    let stride: usize = radix[agent + 1..].iter().product();
    let base = p - digits[agent] * stride;
    let best = (0..radix[agent])
        .map(|s| u[base + s * stride])
        .fold(f64::NEG_INFINITY, f64::max);
    if best <= u[p] {
        return;
    }
    for s in 0..radix[agent] {
        let q = base + s * stride;
        if u[q] == best {
            edges.push(Edge {
                source: order[p],
                coalition: Coalition::singleton(AgentId(agent)),
                target: order[q],
            });
        }
    }
}

fn bump(choice: &mut [usize], limit: &[usize]) -> bool {
    for (c, l) in choice.iter_mut().zip(limit).rev() {
        *c += 1;
        if *c < *l {
            return true;
        }
        *c = 0;
    }
    false
}

/// Position of each raw index after sorting the labels.
pub(crate) fn sorted_ids(labels: &[NodeLabel]) -> Vec<NodeId> {
    let mut perm: Vec<usize> = (0..labels.len()).collect();
    perm.sort_by(|&a, &b| labels[a].cmp(&labels[b]));
    let mut order = vec![NodeId(0); labels.len()];
    for (pos, &raw) in perm.iter().enumerate() {
        order[raw] = NodeId(pos);
    }
    order
}
