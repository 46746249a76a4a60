use fixedbitset::FixedBitSet;

use crate::graph::NodeId;

/// Truth table of a formula over its free first-order variables: one bit
/// per assignment in `domain^vars.len()`, row-major with the first variable
/// most significant. Variables are kept sorted by name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    vars: Vec<String>,
    domain: usize,
    bits: FixedBitSet,
}

impl Table {
    pub(crate) fn empty(vars: Vec<String>, domain: usize) -> Self {
        debug_assert!(vars.windows(2).all(|w| w[0] < w[1]));
        let len = cells(domain, vars.len());
        Table {
            vars,
            domain,
            bits: FixedBitSet::with_capacity(len),
        }
    }

    pub(crate) fn from_bits(vars: Vec<String>, domain: usize, bits: FixedBitSet) -> Self {
        debug_assert_eq!(bits.len(), cells(domain, vars.len()));
        Table { vars, domain, bits }
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &FixedBitSet {
        &self.bits
    }

    pub(crate) fn bits_mut(&mut self) -> &mut FixedBitSet {
        &mut self.bits
    }

    pub fn index_of(&self, tuple: &[NodeId]) -> usize {
        assert_eq!(tuple.len(), self.vars.len(), "tuple width mismatch");
        tuple.iter().fold(0, |acc, v| {
            assert!(v.0 < self.domain, "node out of range");
            acc * self.domain + v.0
        })
    }

    pub fn get(&self, tuple: &[NodeId]) -> bool {
        self.bits.contains(self.index_of(tuple))
    }

    /// Value of a table with no variables.
    pub fn truth(&self) -> bool {
        assert!(self.vars.is_empty(), "table has free variables");
        self.bits.contains(0)
    }

    pub fn count_true(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn tuple_of(&self, mut index: usize) -> Vec<NodeId> {
        let mut tuple = vec![NodeId(0); self.vars.len()];
        for slot in tuple.iter_mut().rev() {
            *slot = NodeId(index % self.domain);
            index /= self.domain;
        }
        tuple
    }

    /// True assignments in index order.
    pub fn true_rows(&self) -> impl Iterator<Item = Vec<NodeId>> + '_ {
        self.bits.ones().map(|i| self.tuple_of(i))
    }
}

pub(crate) fn cells(domain: usize, width: usize) -> usize {
    (0..width).fold(1usize, |acc, _| acc.saturating_mul(domain))
}

/// Visits every assignment of `width` variables over `domain` in index
/// order, keeping per-variable digits.
pub(crate) struct Odometer {
    pub digits: Vec<usize>,
    domain: usize,
    remaining: usize,
}

impl Odometer {
    pub fn new(width: usize, domain: usize) -> Self {
        Odometer {
            digits: vec![0; width],
            domain,
            remaining: cells(domain, width),
        }
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    /// Advances to the next assignment; returns the position of the most
    /// significant digit that changed, or `None` when exhausted.
    pub fn advance(&mut self) -> Option<usize> {
        self.remaining = self.remaining.saturating_sub(1);
        if self.remaining == 0 {
            return None;
        }
        for pos in (0..self.digits.len()).rev() {
            self.digits[pos] += 1;
            if self.digits[pos] < self.domain {
                return Some(pos);
            }
            self.digits[pos] = 0;
        }
        None
    }
}

/// Re-indexes `table` onto `out_vars` (a superset of its variables).
pub(crate) fn broadcast(table: &Table, out_vars: &[String]) -> FixedBitSet {
    if table.vars == out_vars {
        return table.bits.clone();
    }
    let domain = table.domain;
    let total = cells(domain, out_vars.len());
    let mut out = FixedBitSet::with_capacity(total);
    if total == 0 {
        return out;
    }
    let strides = child_strides(table, out_vars);
    let mut odo = Odometer::new(out_vars.len(), domain);
    let mut child = 0usize;
    let mut idx = 0usize;
    loop {
        if table.bits.contains(child) {
            out.insert(idx);
        }
        idx += 1;
        let Some(pos) = odo.advance() else { break };
        child += strides[pos];
        for (p, s) in strides.iter().enumerate().skip(pos + 1) {
            child -= s * (domain - 1);
            debug_assert_eq!(odo.digits[p], 0);
        }
    }
    out
}

/// Stride in `table` of each variable of `out_vars` (zero when absent).
fn child_strides(table: &Table, out_vars: &[String]) -> Vec<usize> {
    let width = table.vars.len();
    out_vars
        .iter()
        .map(|v| match table.vars.iter().position(|w| w == v) {
            Some(p) => cells(table.domain, width - 1 - p),
            None => 0,
        })
        .collect()
}

/// Counts, for each assignment of the other variables, how many values of
/// `var` make `table` true. `var` must be one of the table's variables.
pub(crate) fn count_over(table: &Table, var: &str) -> (Vec<String>, Vec<u64>) {
    let domain = table.domain;
    let pos = table
        .vars
        .iter()
        .position(|v| v == var)
        .expect("counted variable must be present");
    let out_vars: Vec<String> = table
        .vars
        .iter()
        .filter(|v| *v != var)
        .cloned()
        .collect();
    let total_out = cells(domain, out_vars.len());
    let mut counts = vec![0u64; total_out];
    if domain == 0 {
        return (out_vars, counts);
    }
    if pos == table.vars.len() - 1 {
        // counted variable varies fastest: each output cell is a contiguous block
        for (o, c) in counts.iter_mut().enumerate() {
            *c = table.bits.count_ones(o * domain..(o + 1) * domain) as u64;
        }
    } else {
        let inner = cells(domain, table.vars.len() - 1 - pos);
        for i in table.bits.ones() {
            let high = i / (inner * domain);
            let low = i % inner;
            counts[high * inner + low] += 1;
        }
    }
    (out_vars, counts)
}
