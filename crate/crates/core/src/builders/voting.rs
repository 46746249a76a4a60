use std::collections::{BTreeMap, HashMap};

use super::game::sorted_ids;
use super::json::{agent_key, At};
use super::{BuildError, Limits};
use crate::graph::{AgentId, Coalition, Edge, ImprovementGraph, NodeLabel};

/// Candidate count allowed without `force`.
pub const MAX_CANDIDATES: usize = 4;
/// Voter count allowed without `force`.
pub const MAX_VOTERS: usize = 3;

/// Committee selection rule. Ties break toward lower candidate indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VotingRule {
    /// The `k` candidates ranked first most often.
    PluralityTopK,
    /// The `k` candidates with the highest Borda score.
    BordaTopK,
}

impl std::str::FromStr for VotingRule {
    type Err = BuildError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "plurality-top-k" | "plurality" => Ok(VotingRule::PluralityTopK),
            "borda-top-k" | "borda" => Ok(VotingRule::BordaTopK),
            _ => Err(BuildError::Invalid(format!("unknown voting rule `{s}`"))),
        }
    }
}

impl VotingRule {
    /// Winning committee (sorted candidate indices) for a ballot profile,
    /// where each ballot lists candidates best first.
    pub fn winners(self, ballots: &[&[usize]], m: usize, k: usize) -> Vec<usize> {
        let mut score = vec![0usize; m];
        for b in ballots {
            match self {
                VotingRule::PluralityTopK => score[b[0]] += 1,
                VotingRule::BordaTopK => {
                    for (pos, &c) in b.iter().enumerate() {
                        score[c] += m - 1 - pos;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| score[b].cmp(&score[a]).then(a.cmp(&b)));
        let mut committee = order[..k].to_vec();
        committee.sort_unstable();
        committee
    }
}

/// Voter preferences over committees.
#[derive(Debug, Clone, PartialEq)]
pub enum CommitteePrefs {
    /// `utils[i][c]`: voter `i`'s value for candidate `c`; committees add up.
    Additive(Vec<Vec<f64>>),
    /// Per voter, a value for every committee (sorted 0-based candidates).
    Extensional(Vec<BTreeMap<Vec<usize>, f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VotingInstance {
    n: usize,
    m: usize,
    k: usize,
    rule: VotingRule,
    prefs: CommitteePrefs,
}

impl VotingInstance {
    pub fn new(
        n: usize,
        m: usize,
        k: usize,
        rule: VotingRule,
        prefs: CommitteePrefs,
    ) -> Result<Self, BuildError> {
        if n == 0 || n > crate::graph::MAX_AGENTS {
            return Err(BuildError::Invalid(format!(
                "voter count must be in 1..={}",
                crate::graph::MAX_AGENTS
            )));
        }
        if m == 0 || m > 9 {
            return Err(BuildError::Invalid("candidate count must be in 1..=9".into()));
        }
        if k == 0 || k > m {
            return Err(BuildError::Invalid(format!("committee size {k} not in 1..={m}")));
        }
        match &prefs {
            CommitteePrefs::Additive(u) => {
                if u.len() != n || u.iter().any(|r| r.len() != m) {
                    return Err(BuildError::Invalid(format!(
                        "additive utilities must be {n} rows of {m} values"
                    )));
                }
                if u.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(BuildError::Invalid("non-finite candidate utility".into()));
                }
            }
            CommitteePrefs::Extensional(maps) => {
                if maps.len() != n {
                    return Err(BuildError::Invalid(format!(
                        "{} committee preference maps for {n} voters",
                        maps.len()
                    )));
                }
                let all = committees(m, k);
                for (i, map) in maps.iter().enumerate() {
                    for c in &all {
                        match map.get(c) {
                            Some(v) if v.is_finite() => {}
                            _ => {
                                return Err(BuildError::Invalid(format!(
                                    "voter {} has no value for committee {}",
                                    i + 1,
                                    committee_key(c)
                                )))
                            }
                        }
                    }
                    if map.len() != all.len() {
                        return Err(BuildError::Invalid(format!(
                            "voter {} values a set that is not a committee of size {k}",
                            i + 1
                        )));
                    }
                }
            }
        }
        Ok(VotingInstance { n, m, k, rule, prefs })
    }

    pub fn voters(&self) -> usize {
        self.n
    }

    pub fn candidates(&self) -> usize {
        self.m
    }

    pub fn committee_size(&self) -> usize {
        self.k
    }

    pub fn rule(&self) -> VotingRule {
        self.rule
    }

    pub fn utility(&self, voter: usize, committee: &[usize]) -> f64 {
        match &self.prefs {
            CommitteePrefs::Additive(u) => committee.iter().map(|&c| u[voter][c]).sum(),
            CommitteePrefs::Extensional(maps) => maps[voter][committee],
        }
    }

    pub(crate) fn from_value(at: &At<'_>) -> Result<Self, BuildError> {
        let n_at = at.field("n")?;
        let n = n_at.usize()?;
        if n == 0 || n > crate::graph::MAX_AGENTS {
            return n_at.err(format!("voter count must be in 1..={}", crate::graph::MAX_AGENTS));
        }
        let m = at.field("m")?.usize()?;
        let k = at.field("k")?.usize()?;
        let rule_at = at.field("rule")?;
        let rule = match rule_at.str()?.parse::<VotingRule>() {
            Ok(r) => r,
            Err(e) => return rule_at.err(e.to_string()),
        };
        let prefs = if let Some(v) = at.opt("voter_utils") {
            let rows = v.items()?;
            if rows.len() != n {
                return v.err(format!("expected {n} rows"));
            }
            let mut out = Vec::with_capacity(n);
            for row in &rows {
                let vals = row.numbers()?;
                if vals.len() != m {
                    return row.err(format!("expected {m} candidate utilities"));
                }
                out.push(vals);
            }
            CommitteePrefs::Additive(out)
        } else if let Some(c) = at.opt("committee_prefs") {
            let mut maps: Vec<Option<BTreeMap<Vec<usize>, f64>>> = vec![None; n];
            let entries = match c.value() {
                serde_json::Value::Array(_) => c
                    .items()?
                    .into_iter()
                    .enumerate()
                    .collect::<Vec<_>>(),
                _ => {
                    let mut v = Vec::new();
                    for (key, a) in c.entries()? {
                        v.push((agent_key(&a, key, n)?, a));
                    }
                    v
                }
            };
            for (voter, per) in &entries {
                if *voter >= n {
                    return per.err(format!("only {n} voters"));
                }
                let mut map = BTreeMap::new();
                for (key, val) in per.entries()? {
                    let mut committee = Vec::new();
                    for t in key.split(',') {
                        match t.trim().parse::<usize>() {
                            Ok(x) if (1..=m).contains(&x) => committee.push(x - 1),
                            _ => return val.err(format!("committee key must list candidates in 1..={m}")),
                        }
                    }
                    committee.sort_unstable();
                    committee.dedup();
                    if committee.len() != k {
                        return val.err(format!("committee must have {k} distinct candidates"));
                    }
                    map.insert(committee, val.f64()?);
                }
                maps[*voter] = Some(map);
            }
            let mut out = Vec::with_capacity(n);
            for (i, map) in maps.into_iter().enumerate() {
                match map {
                    Some(map) => out.push(map),
                    None => return c.err(format!("missing preferences for voter {}", i + 1)),
                }
            }
            CommitteePrefs::Extensional(out)
        } else {
            return at.err("expected `voter_utils` or `committee_prefs`");
        };
        Self::new(n, m, k, rule, prefs).or_else(|e| match e {
            BuildError::Invalid(msg) => at.err(msg),
            other => Err(other),
        })
    }
}

fn committees(m: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << m))
        .filter(|b| b.count_ones() as usize == k)
        .map(|b| (0..m).filter(|c| b >> c & 1 == 1).collect())
        .collect()
}

fn committee_key(c: &[usize]) -> String {
    c.iter().map(|x| (x + 1).to_string()).collect::<Vec<_>>().join(",")
}

/// All linear orders of `0..m` in lexicographic order.
pub(crate) fn permutations(m: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..m).collect();
    let mut out = vec![cur.clone()];
    loop {
        let Some(i) = (1..m).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..m).rev().find(|&j| cur[j] > cur[i - 1]).expect("pivot");
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

/// Ballot token such as `2>1>3` (1-based candidates).
pub fn ballot_token(ballot: &[usize]) -> String {
    ballot.iter().map(|c| (c + 1).to_string()).collect::<Vec<_>>().join(">")
}

pub fn build_voting_graph(v: &VotingInstance) -> Result<ImprovementGraph, BuildError> {
    build_voting_graph_with(v, &Limits::from_env())
}

pub fn build_voting_graph_with(
    v: &VotingInstance,
    limits: &Limits,
) -> Result<ImprovementGraph, BuildError> {
    if !limits.force && (v.m > MAX_CANDIDATES || v.n > MAX_VOTERS) {
        return Err(BuildError::Resource(format!(
            "voting graphs are limited to {MAX_CANDIDATES} candidates and {MAX_VOTERS} voters unless forced"
        )));
    }
    let ballots = permutations(v.m);
    let b = ballots.len();
    let total = limits.check_nodes(b.checked_pow(v.n as u32), "voting")?;

    // winners and voter utilities per raw profile (voter 1 most significant)
    let mut committee_ids: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut committee_util: Vec<Vec<f64>> = Vec::new();
    let mut winner = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let tokens: Vec<String> = ballots.iter().map(|x| ballot_token(x)).collect();
    let mut digits = vec![0usize; v.n];
    for _ in 0..total {
        let profile: Vec<&[usize]> = digits.iter().map(|&d| ballots[d].as_slice()).collect();
        let c = v.rule.winners(&profile, v.m, v.k);
        let next = committee_ids.len();
        let id = *committee_ids.entry(c.clone()).or_insert_with(|| {
            committee_util.push((0..v.n).map(|i| v.utility(i, &c)).collect());
            next
        });
        winner.push(id);
        labels.push(NodeLabel::new(digits.iter().map(|&d| tokens[d].clone())));
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < b {
                break;
            }
            *d = 0;
        }
    }
    let order = sorted_ids(&labels);

    let mut edges = Vec::new();
    for p in 0..total {
        let here = &committee_util[winner[p]];
        let mut stride = 1;
        for i in (0..v.n).rev() {
            let d = p / stride % b;
            let base = p - d * stride;
            for alt in (0..b).filter(|&a| a != d) {
                let q = base + alt * stride;
                if committee_util[winner[q]][i] > here[i] {
                    edges.push(Edge {
                        source: order[p],
                        coalition: Coalition::singleton(AgentId(i)),
                        target: order[q],
                    });
                }
            }
            stride *= b;
        }
    }
    let mut nodes = vec![NodeLabel(Vec::new()); total];
    for (p, label) in labels.into_iter().enumerate() {
        nodes[order[p].0] = label;
    }
    Ok(ImprovementGraph::new(v.n, nodes, edges, BTreeMap::new())?)
}
