use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::game::sorted_ids;
use super::json::{agent_key, At};
use super::voting::permutations;
use super::{coalitions, BuildError, Limits};
use crate::graph::{AtomInterp, Edge, ImprovementGraph, NodeId, NodeLabel};

/// Graphs with more nodes than this are built without the binary
/// `pref_*`/`samebundle_*` atoms, which need quadratic space.
pub const ATOM_NODE_LIMIT: usize = 2048;

/// A set of items, as sorted item indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bundle(Vec<usize>);

impl Bundle {
    pub fn new(items: impl IntoIterator<Item = usize>) -> Self {
        let set: BTreeSet<usize> = items.into_iter().collect();
        Bundle(set.into_iter().collect())
    }

    pub fn empty() -> Self {
        Bundle(Vec::new())
    }

    pub fn items(&self) -> &[usize] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn mask(&self) -> u64 {
        self.0.iter().fold(0, |m, &t| m | 1 << t)
    }

    fn from_mask(mask: u64) -> Self {
        Bundle((0..64).filter(|t| mask >> t & 1 == 1).collect())
    }
}

/// One agent's utility for the bundles it may hold.
#[derive(Debug, Clone, PartialEq)]
pub enum BundleUtility {
    /// Sum of per-item values.
    Additive(Vec<f64>),
    /// Explicit value per bundle.
    Table(BTreeMap<Bundle, f64>),
}

impl BundleUtility {
    pub fn value(&self, bundle: &Bundle) -> Option<f64> {
        match self {
            BundleUtility::Additive(v) => bundle.0.iter().map(|&t| v.get(t).copied()).sum(),
            BundleUtility::Table(t) => t.get(bundle).copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AllocationPrefs {
    /// Each agent cares only about its own bundle.
    OwnBundle(Vec<BundleUtility>),
    /// Each agent values whole allocations (externalities).
    Allocations(Vec<BTreeMap<Vec<Bundle>, f64>>),
}

/// Indivisible items shared among agents. In a housing market there are as
/// many items as agents and each agent holds exactly one.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationInstance {
    n: usize,
    items: Vec<String>,
    housing: bool,
    prefs: AllocationPrefs,
    initial: Option<Vec<Bundle>>,
}

impl AllocationInstance {
    pub fn new(
        n: usize,
        items: Vec<String>,
        housing: bool,
        prefs: AllocationPrefs,
    ) -> Result<Self, BuildError> {
        if n == 0 || n > crate::graph::MAX_AGENTS {
            return Err(BuildError::Invalid(format!(
                "agent count must be in 1..={}",
                crate::graph::MAX_AGENTS
            )));
        }
        let m = items.len();
        if m > 64 {
            return Err(BuildError::Invalid("at most 64 items are supported".into()));
        }
        if housing && m != n {
            return Err(BuildError::Invalid(format!(
                "a housing market needs as many items as agents ({n}), got {m}"
            )));
        }
        for (t, name) in items.iter().enumerate() {
            let bad = name.is_empty()
                || name == "-"
                || name.contains(['+', ','])
                || name.chars().any(char::is_whitespace);
            if bad {
                return Err(BuildError::Invalid(format!(
                    "item name `{name}` must be a token without `+`, `,` or spaces, other than `-`"
                )));
            }
            if items[..t].contains(name) {
                return Err(BuildError::Invalid(format!("duplicate item `{name}`")));
            }
        }
        let inst = AllocationInstance {
            n,
            items,
            housing,
            prefs,
            initial: None,
        };
        inst.check_prefs()?;
        Ok(inst)
    }

    fn check_prefs(&self) -> Result<(), BuildError> {
        let m = self.items.len();
        let count = match &self.prefs {
            AllocationPrefs::OwnBundle(u) => u.len(),
            AllocationPrefs::Allocations(u) => u.len(),
        };
        if count != self.n {
            return Err(BuildError::Invalid(format!(
                "{count} preference entries for {} agents",
                self.n
            )));
        }
        match &self.prefs {
            AllocationPrefs::OwnBundle(utils) => {
                for (i, u) in utils.iter().enumerate() {
                    let agent = i + 1;
                    match u {
                        BundleUtility::Additive(v) => {
                            if v.len() != m {
                                return Err(BuildError::Invalid(format!(
                                    "agent {agent} has {} item values for {m} items",
                                    v.len()
                                )));
                            }
                        }
                        BundleUtility::Table(t) => {
                            // every bundle the agent can end up with needs a value
                            let needed: Vec<Bundle> = if self.housing {
                                (0..m).map(|t| Bundle(vec![t])).collect()
                            } else if m <= 20 {
                                (0..1u64 << m).map(Bundle::from_mask).collect()
                            } else {
                                return Err(BuildError::Invalid(
                                    "bundle tables need at most 20 items".into(),
                                ));
                            };
                            if let Some(b) = needed.iter().find(|b| !t.contains_key(b)) {
                                return Err(BuildError::Invalid(format!(
                                    "agent {agent} has no value for bundle `{}`",
                                    self.bundle_token(b)
                                )));
                            }
                            if t.keys().flat_map(|b| &b.0).any(|&x| x >= m) {
                                return Err(BuildError::Invalid(format!(
                                    "agent {agent} values an unknown item"
                                )));
                            }
                        }
                    }
                    let finite = match u {
                        BundleUtility::Additive(v) => v.iter().all(|x| x.is_finite()),
                        BundleUtility::Table(t) => t.values().all(|x| x.is_finite()),
                    };
                    if !finite {
                        return Err(BuildError::Invalid(format!(
                            "agent {agent} has a non-finite utility"
                        )));
                    }
                }
            }
            AllocationPrefs::Allocations(maps) => {
                for (i, map) in maps.iter().enumerate() {
                    for (alloc, v) in map {
                        if !v.is_finite() {
                            return Err(BuildError::Invalid(format!(
                                "agent {} has a non-finite utility",
                                i + 1
                            )));
                        }
                        self.check_allocation(alloc)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Sets the starting allocation.
    pub fn with_initial(mut self, initial: Vec<Bundle>) -> Result<Self, BuildError> {
        self.check_allocation(&initial)?;
        self.initial = Some(initial);
        Ok(self)
    }

    fn check_allocation(&self, alloc: &[Bundle]) -> Result<(), BuildError> {
        if alloc.len() != self.n {
            return Err(BuildError::Invalid(format!(
                "allocation has {} bundles for {} agents",
                alloc.len(),
                self.n
            )));
        }
        let mut seen = 0u64;
        for b in alloc {
            if b.0.iter().any(|&t| t >= self.items.len()) {
                return Err(BuildError::Invalid("allocation uses an unknown item".into()));
            }
            if self.housing && b.0.len() != 1 {
                return Err(BuildError::Invalid(
                    "housing allocations give each agent exactly one item".into(),
                ));
            }
            if seen & b.mask() != 0 {
                return Err(BuildError::Invalid("an item is allocated twice".into()));
            }
            seen |= b.mask();
        }
        if seen.count_ones() as usize != self.items.len() {
            return Err(BuildError::Invalid("some item is unallocated".into()));
        }
        Ok(())
    }

    pub fn agents(&self) -> usize {
        self.n
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn is_housing(&self) -> bool {
        self.housing
    }

    pub fn has_externalities(&self) -> bool {
        matches!(self.prefs, AllocationPrefs::Allocations(_))
    }

    pub fn prefs(&self) -> &AllocationPrefs {
        &self.prefs
    }

    pub fn initial(&self) -> Option<&[Bundle]> {
        self.initial.as_deref()
    }

    /// Item names joined by `+`, or `-` for the empty bundle.
    pub fn bundle_token(&self, b: &Bundle) -> String {
        if b.is_empty() {
            "-".into()
        } else {
            b.0.iter()
                .map(|&t| self.items[t].as_str())
                .collect::<Vec<_>>()
                .join("+")
        }
    }

    pub fn parse_bundle(&self, token: &str) -> Option<Bundle> {
        let token = token.trim();
        if token == "-" {
            return Some(Bundle::empty());
        }
        let mut out = Vec::new();
        for name in token.split('+') {
            out.push(self.items.iter().position(|x| x == name.trim())?);
        }
        let b = Bundle::new(out.iter().copied());
        (b.0.len() == out.len()).then_some(b)
    }

    pub fn label(&self, alloc: &[Bundle]) -> NodeLabel {
        NodeLabel::new(alloc.iter().map(|b| self.bundle_token(b)))
    }

    /// Inverse of [`label`](Self::label).
    pub fn parse_label(&self, label: &NodeLabel) -> Option<Vec<Bundle>> {
        let alloc: Vec<Bundle> = label
            .0
            .iter()
            .map(|t| self.parse_bundle(t))
            .collect::<Option<_>>()?;
        self.check_allocation(&alloc).ok()?;
        Some(alloc)
    }

    /// Agent's utility for an allocation under its own preferences.
    pub fn utility(&self, agent: usize, alloc: &[Bundle]) -> Option<f64> {
        match &self.prefs {
            AllocationPrefs::OwnBundle(u) => u[agent].value(&alloc[agent]),
            AllocationPrefs::Allocations(maps) => maps[agent].get(alloc).copied(),
        }
    }

    pub(crate) fn from_value(at: &At<'_>) -> Result<Self, BuildError> {
        let n_at = at.field("n")?;
        let n = n_at.usize()?;
        if n == 0 || n > crate::graph::MAX_AGENTS {
            return n_at.err(format!("agent count must be in 1..={}", crate::graph::MAX_AGENTS));
        }
        let items = at.field("items")?.strings()?;
        let housing = match at.opt("housing") {
            Some(h) => h.bool()?,
            None => false,
        };
        let explicit = match at.opt("externalities") {
            Some(e) => Some(e.bool()?),
            None => None,
        };
        let schema = |e: BuildError, where_: &At<'_>| match e {
            BuildError::Invalid(msg) => where_.err(msg),
            other => Err(other),
        };
        // a shell with empty prefs gives access to the token helpers
        let shell = AllocationInstance {
            n,
            items: items.clone(),
            housing,
            prefs: AllocationPrefs::OwnBundle(Vec::new()),
            initial: None,
        };
        let prefs = match (at.opt("bundle_utils"), at.opt("allocation_prefs"), explicit) {
            (Some(b), None, None | Some(false)) => {
                let mut out = Vec::with_capacity(n);
                for (agent, entry) in per_agent(&b, n)? {
                    debug_assert_eq!(agent, out.len());
                    let u = match entry.value() {
                        serde_json::Value::Array(_) => BundleUtility::Additive(entry.numbers()?),
                        _ => {
                            let mut table = BTreeMap::new();
                            for (key, v) in entry.entries()? {
                                match shell.parse_bundle(key) {
                                    Some(bundle) => table.insert(bundle, v.f64()?),
                                    None => return v.err(format!("bad bundle key `{key}`")),
                                };
                            }
                            BundleUtility::Table(table)
                        }
                    };
                    out.push(u);
                }
                AllocationPrefs::OwnBundle(out)
            }
            (None, Some(a), None | Some(true)) => {
                let mut out = Vec::with_capacity(n);
                for (_, entry) in per_agent(&a, n)? {
                    let mut map = BTreeMap::new();
                    for (key, v) in entry.entries()? {
                        let bundles: Option<Vec<Bundle>> =
                            key.split(',').map(|t| shell.parse_bundle(t)).collect();
                        match bundles {
                            Some(alloc) if alloc.len() == n => map.insert(alloc, v.f64()?),
                            _ => return v.err(format!("bad allocation key `{key}`")),
                        };
                    }
                    out.push(map);
                }
                AllocationPrefs::Allocations(out)
            }
            (Some(_), Some(_), _) => {
                return at.err("give either `bundle_utils` or `allocation_prefs`, not both")
            }
            (None, None, _) => return at.err("expected `bundle_utils` or `allocation_prefs`"),
            (Some(_), None, Some(true)) => {
                return at.err("`externalities` needs `allocation_prefs`")
            }
            (None, Some(_), Some(false)) => {
                return at.err("`allocation_prefs` needs `externalities` to be true")
            }
        };
        let inst = Self::new(n, items, housing, prefs).or_else(|e| schema(e, at))?;
        match at.opt("initial") {
            Some(init) => {
                let mut alloc = Vec::new();
                for t in init.items()? {
                    match shell.parse_bundle(t.str()?) {
                        Some(b) => alloc.push(b),
                        None => return t.err("unknown item in bundle"),
                    }
                }
                inst.with_initial(alloc).or_else(|e| schema(e, &init))
            }
            None => Ok(inst),
        }
    }
}

/// Entries given either as an array in agent order or as an object keyed by
/// one-based agent numbers.
fn per_agent<'a>(at: &'a At<'a>, n: usize) -> Result<Vec<(usize, At<'a>)>, BuildError> {
    let mut out: Vec<(usize, At<'a>)> = match at.value() {
        serde_json::Value::Array(_) => at.items()?.into_iter().enumerate().collect(),
        _ => {
            let mut v = Vec::new();
            for (key, a) in at.entries()? {
                v.push((agent_key(&a, key, n)?, a));
            }
            v
        }
    };
    out.sort_by_key(|(i, _)| *i);
    if out.len() != n || out.iter().enumerate().any(|(k, (i, _))| k != *i) {
        return at.err(format!("expected one entry for each of {n} agents"));
    }
    Ok(out)
}

/// Raw node space: housing nodes are permutations, general nodes are owner
/// vectors in base `n` with item 1 most significant.
struct Space {
    n: usize,
    m: usize,
    housing: bool,
    perms: Vec<Vec<usize>>,
    perm_index: HashMap<Vec<usize>, usize>,
}

impl Space {
    fn new(a: &AllocationInstance, limits: &Limits) -> Result<(Self, usize), BuildError> {
        let (n, m) = (a.n, a.items.len());
        if a.housing {
            let count = (1..=n).try_fold(1usize, |acc, k| acc.checked_mul(k));
            let total = limits.check_nodes(count, "housing market")?;
            let perms = permutations(n);
            let perm_index = perms.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
            Ok((
                Space {
                    n,
                    m,
                    housing: true,
                    perms,
                    perm_index,
                },
                total,
            ))
        } else {
            let total = limits.check_nodes(n.checked_pow(m as u32), "allocation")?;
            Ok((
                Space {
                    n,
                    m,
                    housing: false,
                    perms: Vec::new(),
                    perm_index: HashMap::new(),
                },
                total,
            ))
        }
    }

    /// Bundle masks per agent at a raw node.
    fn masks(&self, raw: usize) -> Vec<u64> {
        let mut masks = vec![0u64; self.n];
        if self.housing {
            for (i, &t) in self.perms[raw].iter().enumerate() {
                masks[i] = 1 << t;
            }
        } else {
            let mut rest = raw;
            for t in (0..self.m).rev() {
                masks[rest % self.n] |= 1 << t;
                rest /= self.n;
            }
        }
        masks
    }

    fn raw_of(&self, masks: &[u64]) -> usize {
        if self.housing {
            let perm: Vec<usize> = masks.iter().map(|m| m.trailing_zeros() as usize).collect();
            self.perm_index[&perm]
        } else {
            let mut owner = vec![0; self.m];
            for (i, &mask) in masks.iter().enumerate() {
                for (t, o) in owner.iter_mut().enumerate() {
                    if mask >> t & 1 == 1 {
                        *o = i;
                    }
                }
            }
            owner.iter().fold(0, |acc, &o| acc * self.n + o)
        }
    }
}

/// Compiles an allocation instance into its exchange graph: edges are trades
/// among 2..=`max_coalition` agents in which every member's bundle changes
/// and every member strictly gains.
pub fn build_allocation_graph(
    a: &AllocationInstance,
    max_coalition: usize,
) -> Result<ImprovementGraph, BuildError> {
    build_allocation_graph_with(a, max_coalition, &Limits::from_env())
}

pub fn build_allocation_graph_with(
    a: &AllocationInstance,
    max_coalition: usize,
    limits: &Limits,
) -> Result<ImprovementGraph, BuildError> {
    let n = a.n;
    if max_coalition < 2 {
        return Err(BuildError::Invalid(format!(
            "coalition bound must be at least 2, got {max_coalition}"
        )));
    }
    if max_coalition > n {
        return Err(BuildError::Invalid(format!(
            "coalition bound {max_coalition} exceeds the {n} agents"
        )));
    }
    let (space, total) = Space::new(a, limits)?;

    let masks: Vec<Vec<u64>> = (0..total).map(|r| space.masks(r)).collect();
    let bundles = |r: usize| -> Vec<Bundle> { masks[r].iter().map(|&m| Bundle::from_mask(m)).collect() };
    let mut util = vec![Vec::with_capacity(total); n];
    for r in 0..total {
        let alloc = bundles(r);
        for (i, u) in util.iter_mut().enumerate() {
            match a.utility(i, &alloc) {
                Some(v) => u.push(v),
                None => {
                    return Err(BuildError::Invalid(format!(
                        "agent {} has no value for allocation `{}`",
                        i + 1,
                        a.label(&alloc).0.join(",")
                    )))
                }
            }
        }
    }
    let labels: Vec<NodeLabel> = (0..total).map(|r| a.label(&bundles(r))).collect();
    let order = sorted_ids(&labels);

    let mut edges = Vec::new();
    let groups: Vec<_> = coalitions(n, 2, max_coalition).collect();
    for r in 0..total {
        let here = &masks[r];
        for &u in &groups {
            let members: Vec<usize> = u.members().map(|x| x.0).collect();
            let pool: Vec<usize> = (0..space.m)
                .filter(|&t| members.iter().any(|&i| here[i] >> t & 1 == 1))
                .collect();
            let mut push = |next: &[u64]| {
                if members.iter().any(|&i| next[i] == here[i]) {
                    return;
                }
                let q = space.raw_of(next);
                if members.iter().all(|&i| util[i][q] > util[i][r]) {
                    edges.push(Edge {
                        source: order[r],
                        coalition: u,
                        target: order[q],
                    });
                }
            };
            let mut next = here.clone();
            if space.housing {
                for perm in permutations(members.len()) {
                    for (k, &i) in members.iter().enumerate() {
                        next[i] = here[members[perm[k]]];
                    }
                    push(&next);
                }
            } else {
                // every assignment of the pooled items to the members
                let mut choice = vec![0usize; pool.len()];
                loop {
                    for &i in &members {
                        next[i] = 0;
                    }
                    for (k, &t) in pool.iter().enumerate() {
                        next[members[choice[k]]] |= 1 << t;
                    }
                    push(&next);
                    let mut carry = true;
                    for c in choice.iter_mut().rev() {
                        *c += 1;
                        if *c < members.len() {
                            carry = false;
                            break;
                        }
                        *c = 0;
                    }
                    if carry {
                        break;
                    }
                }
            }
        }
    }

    let mut atoms = BTreeMap::new();
    if total <= ATOM_NODE_LIMIT {
        for (i, u) in util.iter().enumerate() {
            let mut pairs = BTreeSet::new();
            for x in 0..total {
                for y in 0..total {
                    if u[y] > u[x] {
                        pairs.insert((order[x], order[y]));
                    }
                }
            }
            atoms.insert(format!("pref_{}", i + 1), AtomInterp::Binary(pairs));
        }
        for j in 0..n {
            let mut holders: HashMap<u64, Vec<NodeId>> = HashMap::new();
            for (y, m) in masks.iter().enumerate() {
                holders.entry(m[j]).or_default().push(order[y]);
            }
            for i in (0..n).filter(|&i| i != j) {
                let mut pairs = BTreeSet::new();
                for (x, m) in masks.iter().enumerate() {
                    for &y in holders.get(&m[i]).map(Vec::as_slice).unwrap_or(&[]) {
                        pairs.insert((order[x], y));
                    }
                }
                atoms.insert(
                    format!("samebundle_{}_{}", i + 1, j + 1),
                    AtomInterp::Binary(pairs),
                );
            }
        }
    }
    if let Some(init) = &a.initial {
        let masks: Vec<u64> = init.iter().map(Bundle::mask).collect();
        let r = space.raw_of(&masks);
        atoms.insert(
            "initial".to_string(),
            AtomInterp::Unary(BTreeSet::from([order[r]])),
        );
    }

    let mut nodes = vec![NodeLabel(Vec::new()); total];
    for (r, label) in labels.into_iter().enumerate() {
        nodes[order[r].0] = label;
    }
    Ok(ImprovementGraph::new(n, nodes, edges, atoms)?)
}

/// Gale's Top Trading Cycle from the initial allocation of a housing market.
pub fn top_trading_cycle(a: &AllocationInstance) -> Result<NodeLabel, BuildError> {
    if !a.housing {
        return Err(BuildError::Invalid("top trading cycle needs a housing market".into()));
    }
    let init = a
        .initial
        .as_ref()
        .ok_or_else(|| BuildError::Invalid("top trading cycle needs an initial allocation".into()))?;
    let AllocationPrefs::OwnBundle(utils) = &a.prefs else {
        return Err(BuildError::Invalid(
            "top trading cycle needs preferences over own items".into(),
        ));
    };
    let n = a.n;
    // rankings[i]: items best first
    let mut rankings = Vec::with_capacity(n);
    for (i, u) in utils.iter().enumerate() {
        let values: Vec<f64> = (0..n)
            .map(|t| u.value(&Bundle(vec![t])).expect("validated"))
            .collect();
        let mut items: Vec<usize> = (0..n).collect();
        items.sort_by(|&x, &y| values[y].total_cmp(&values[x]));
        if items.windows(2).any(|w| values[w[0]] == values[w[1]]) {
            return Err(BuildError::Invalid(format!(
                "agent {} has tied item preferences",
                i + 1
            )));
        }
        rankings.push(items);
    }
    let mut owner = vec![0usize; n];
    for (i, b) in init.iter().enumerate() {
        owner[b.0[0]] = i;
    }
    let mut remaining = vec![true; n];
    let mut item_left = vec![true; n];
    let mut result = vec![usize::MAX; n];
    while remaining.iter().any(|&r| r) {
        let favourite = |i: usize| *rankings[i].iter().find(|&&t| item_left[t]).expect("item left");
        let start = (0..n).find(|&i| remaining[i]).expect("agent left");
        // walk pointers until an agent repeats
        let mut seen = vec![usize::MAX; n];
        let mut path = Vec::new();
        let mut cur = start;
        while seen[cur] == usize::MAX {
            seen[cur] = path.len();
            path.push(cur);
            cur = owner[favourite(cur)];
        }
        let cycle: Vec<usize> = path[seen[cur]..].to_vec();
        let picks: Vec<usize> = cycle.iter().map(|&i| favourite(i)).collect();
        for (&i, &t) in cycle.iter().zip(&picks) {
            result[i] = t;
            remaining[i] = false;
            item_left[t] = false;
        }
    }
    let alloc: Vec<Bundle> = result.into_iter().map(|t| Bundle(vec![t])).collect();
    Ok(a.label(&alloc))
}
