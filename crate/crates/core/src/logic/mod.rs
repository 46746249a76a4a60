//! Monadic least fixed-point logic with counting: syntax tree, parser,
//! free variables and the positivity check that licenses `lfp`.

mod ast;
mod parser;
mod vars;

pub use ast::{Comparator, EdgeRel, Formula, Predicate};
pub use parser::{parse, parse_file, Definition, FormulaFile, LogicError, ParseError};
pub use vars::{check_positive, free_vars, polarity, validate, Polarity, VarSets, WellFormedError};
