use std::fmt;

use crate::graph::Coalition;

/// Edge relations built into the vocabulary of every improvement graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EdgeRel {
    /// `E`: unilateral edge under any agent.
    Union,
    /// `E_i` or `E_{i,j,...}`: edge labelled with exactly this coalition.
    Coalition(Coalition),
    /// `E#k`: edge under some coalition of at most `k` agents.
    UpTo(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Predicate {
    Edge(EdgeRel),
    Named(String),
}

impl Predicate {
    pub fn union_edge() -> Self {
        Predicate::Edge(EdgeRel::Union)
    }

    pub fn named(name: &str) -> Self {
        Predicate::Named(name.to_string())
    }

    pub fn expected_arity(&self) -> Option<usize> {
        match self {
            Predicate::Edge(_) => Some(2),
            Predicate::Named(_) => None,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Edge(EdgeRel::Union) => write!(f, "E"),
            Predicate::Edge(EdgeRel::Coalition(u)) if u.len() == 1 => {
                write!(f, "E_{}", u.one_based()[0])
            }
            Predicate::Edge(EdgeRel::Coalition(u)) => {
                let parts: Vec<String> = u.one_based().iter().map(usize::to_string).collect();
                write!(f, "E_{{{}}}", parts.join(","))
            }
            Predicate::Edge(EdgeRel::UpTo(k)) => write!(f, "E#{k}"),
            Predicate::Named(name) => write!(f, "{name}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparator {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Comparator {
    pub const ALL: [Comparator; 5] = [
        Comparator::Lt,
        Comparator::Le,
        Comparator::Eq,
        Comparator::Ge,
        Comparator::Gt,
    ];

    pub fn holds(self, count: u64, bound: u64) -> bool {
        match self {
            Comparator::Lt => count < bound,
            Comparator::Le => count <= bound,
            Comparator::Eq => count == bound,
            Comparator::Ge => count >= bound,
            Comparator::Gt => count > bound,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Eq => "=",
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
        }
    }
}

/// MLFPC formula. Implication is not a constructor: the parser rewrites
/// `a -> b` to `!a | b`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Atom(Predicate, Vec<String>),
    Eq(String, String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Exists(String, Box<Formula>),
    Forall(String, Box<Formula>),
    /// `C var (body) cmp bound`: the number of nodes satisfying `body` for
    /// `var` compared against `bound`.
    Count {
        var: String,
        body: Box<Formula>,
        cmp: Comparator,
        bound: u64,
    },
    /// `lfp set,var. body @ arg`: `arg` belongs to the least fixed point of
    /// the operator `B -> { a | body[set := B, var := a] }`.
    Lfp {
        set: String,
        var: String,
        body: Box<Formula>,
        arg: String,
    },
    /// Membership `set(var)` of a monadic second-order variable.
    SoAtom(String, String),
}

impl Formula {
    pub fn atom(pred: Predicate, args: &[&str]) -> Self {
        Formula::Atom(pred, args.iter().map(|s| s.to_string()).collect())
    }

    pub fn edge(x: &str, y: &str) -> Self {
        Self::atom(Predicate::union_edge(), &[x, y])
    }

    pub fn eq(x: &str, y: &str) -> Self {
        Formula::Eq(x.into(), y.into())
    }

    pub fn so_atom(set: &str, var: &str) -> Self {
        Formula::SoAtom(set.into(), var.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Self {
        Formula::Not(Box::new(self))
    }

    pub fn and(self, other: Formula) -> Self {
        Formula::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Formula) -> Self {
        Formula::Or(Box::new(self), Box::new(other))
    }

    /// `self -> other`, encoded as `!self | other`.
    pub fn implies(self, other: Formula) -> Self {
        self.not().or(other)
    }

    pub fn exists(var: &str, body: Formula) -> Self {
        Formula::Exists(var.into(), Box::new(body))
    }

    pub fn forall(var: &str, body: Formula) -> Self {
        Formula::Forall(var.into(), Box::new(body))
    }

    pub fn count(var: &str, body: Formula, cmp: Comparator, bound: u64) -> Self {
        Formula::Count {
            var: var.into(),
            body: Box::new(body),
            cmp,
            bound,
        }
    }

    pub fn lfp(set: &str, var: &str, body: Formula, arg: &str) -> Self {
        Formula::Lfp {
            set: set.into(),
            var: var.into(),
            body: Box::new(body),
            arg: arg.into(),
        }
    }

    /// Conjunction of a nonempty list, associated to the left.
    pub fn conjunction(parts: impl IntoIterator<Item = Formula>) -> Option<Self> {
        parts.into_iter().reduce(Formula::and)
    }

    pub fn disjunction(parts: impl IntoIterator<Item = Formula>) -> Option<Self> {
        parts.into_iter().reduce(Formula::or)
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        1 + self.children().map(Formula::size).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children().map(Formula::depth).max().unwrap_or(0)
    }

    pub fn children(&self) -> impl Iterator<Item = &Formula> {
        let (a, b): (Option<&Formula>, Option<&Formula>) = match self {
            Formula::Atom(..) | Formula::Eq(..) | Formula::SoAtom(..) => (None, None),
            Formula::Not(f)
            | Formula::Exists(_, f)
            | Formula::Forall(_, f)
            | Formula::Count { body: f, .. }
            | Formula::Lfp { body: f, .. } => (Some(f), None),
            Formula::And(l, r) | Formula::Or(l, r) => (Some(l), Some(r)),
        };
        a.into_iter().chain(b)
    }
}

// Every compound is printed with enough parentheses that reparsing yields the
// same tree; quantifier bodies are always bracketed.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom(p, args) => write!(f, "{p}({})", args.join(",")),
            Formula::Eq(a, b) => write!(f, "{a} = {b}"),
            Formula::SoAtom(s, x) => write!(f, "{s}({x})"),
            Formula::Not(inner) => match **inner {
                Formula::Atom(..) | Formula::SoAtom(..) | Formula::Not(_) => write!(f, "!{inner}"),
                _ => write!(f, "!({inner})"),
            },
            Formula::And(l, r) => write!(f, "({l} & {r})"),
            Formula::Or(l, r) => write!(f, "({l} | {r})"),
            Formula::Exists(v, body) => write!(f, "(ex {v}. {body})"),
            Formula::Forall(v, body) => write!(f, "(all {v}. {body})"),
            Formula::Count {
                var,
                body,
                cmp,
                bound,
            } => write!(f, "(C {var} ({body}) {} {bound})", cmp.symbol()),
            Formula::Lfp {
                set,
                var,
                body,
                arg,
            } => write!(f, "(lfp {set},{var}. ({body}) @ {arg})"),
        }
    }
}
