//! Free variables, polarity, and well-formedness of fixpoint formers.

use std::collections::BTreeSet;

use thiserror::Error;

use super::ast::{Comparator, Formula};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VarSets {
    pub fo: BTreeSet<String>,
    pub so: BTreeSet<String>,
}

impl VarSets {
    fn union(mut self, other: VarSets) -> VarSets {
        self.fo.extend(other.fo);
        self.so.extend(other.so);
        self
    }
}

pub fn free_vars(phi: &Formula) -> VarSets {
    match phi {
        Formula::Atom(_, args) => VarSets {
            fo: args.iter().cloned().collect(),
            so: BTreeSet::new(),
        },
        Formula::Eq(a, b) => VarSets {
            fo: BTreeSet::from([a.clone(), b.clone()]),
            so: BTreeSet::new(),
        },
        Formula::SoAtom(s, x) => VarSets {
            fo: BTreeSet::from([x.clone()]),
            so: BTreeSet::from([s.clone()]),
        },
        Formula::Not(f) => free_vars(f),
        Formula::And(l, r) | Formula::Or(l, r) => free_vars(l).union(free_vars(r)),
        Formula::Exists(x, f) | Formula::Forall(x, f) | Formula::Count { var: x, body: f, .. } => {
            let mut vs = free_vars(f);
            vs.fo.remove(x);
            vs
        }
        Formula::Lfp {
            set,
            var,
            body,
            arg,
        } => {
            let mut vs = free_vars(body);
            vs.fo.remove(var);
            vs.so.remove(set);
            vs.fo.insert(arg.clone());
            vs
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Polarity {
    pub positive: bool,
    pub negative: bool,
}

/// Which polarities the free occurrences of `set` take in `phi`.
///
/// Negation flips polarity. A counting quantifier with `>=`/`>` is monotone
/// in its body, with `<`/`<=` antitone, and with `=` neither, so occurrences
/// below an `=` count are recorded with both polarities.
pub fn polarity(phi: &Formula, set: &str) -> Polarity {
    let mut acc = Polarity::default();
    walk_polarity(phi, set, true, false, &mut acc);
    acc
}

fn walk_polarity(phi: &Formula, set: &str, pos: bool, both: bool, acc: &mut Polarity) {
    match phi {
        Formula::SoAtom(s, _) if s == set => {
            if both {
                acc.positive = true;
                acc.negative = true;
            } else if pos {
                acc.positive = true;
            } else {
                acc.negative = true;
            }
        }
        Formula::Atom(..) | Formula::Eq(..) | Formula::SoAtom(..) => {}
        Formula::Not(f) => walk_polarity(f, set, !pos, both, acc),
        Formula::And(l, r) | Formula::Or(l, r) => {
            walk_polarity(l, set, pos, both, acc);
            walk_polarity(r, set, pos, both, acc);
        }
        Formula::Exists(_, f) | Formula::Forall(_, f) => walk_polarity(f, set, pos, both, acc),
        Formula::Count { body, cmp, .. } => match cmp {
            Comparator::Ge | Comparator::Gt => walk_polarity(body, set, pos, both, acc),
            Comparator::Lt | Comparator::Le => walk_polarity(body, set, !pos, both, acc),
            Comparator::Eq => walk_polarity(body, set, pos, true, acc),
        },
        Formula::Lfp { set: bound, body, .. } => {
            if bound != set {
                walk_polarity(body, set, pos, both, acc);
            }
        }
    }
}

/// True iff `set` never occurs negatively in `phi`.
pub fn check_positive(phi: &Formula, set: &str) -> bool {
    !polarity(phi, set).negative
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum WellFormedError {
    #[error("set variable {set} occurs negatively in the body of its fixpoint")]
    NotPositive { set: String },
    #[error("set variable {set} does not occur free in the body of its fixpoint")]
    SetVarNotFree { set: String },
    #[error("fixpoint variable {var} does not occur free in the fixpoint body")]
    LfpVarNotFree { var: String },
    #[error("fixpoint argument {var} already occurs free in the fixpoint body")]
    ArgFreeInBody { var: String },
    #[error("{pred} expects {expected} argument(s), got {found}")]
    Arity {
        pred: String,
        expected: usize,
        found: usize,
    },
}

/// Checks every fixpoint former and built-in atom arity.
pub fn validate(phi: &Formula) -> Result<(), WellFormedError> {
    match phi {
        Formula::Atom(p, args) => match p.expected_arity() {
            Some(expected) if expected != args.len() => Err(WellFormedError::Arity {
                pred: p.to_string(),
                expected,
                found: args.len(),
            }),
            _ => Ok(()),
        },
        Formula::Eq(..) | Formula::SoAtom(..) => Ok(()),
        Formula::Lfp {
            set,
            var,
            body,
            arg,
        } => {
            validate(body)?;
            let vs = free_vars(body);
            if !vs.so.contains(set) {
                return Err(WellFormedError::SetVarNotFree { set: set.clone() });
            }
            if !vs.fo.contains(var) {
                return Err(WellFormedError::LfpVarNotFree { var: var.clone() });
            }
            if vs.fo.contains(arg) || arg == var {
                return Err(WellFormedError::ArgFreeInBody { var: arg.clone() });
            }
            if !check_positive(body, set) {
                return Err(WellFormedError::NotPositive { set: set.clone() });
            }
            Ok(())
        }
        _ => phi.children().try_for_each(validate),
    }
}
