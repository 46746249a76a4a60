//! Model checking of monadic fixed-point logic with counting over improvement
//! graphs, with graph builders for normal-form games, committee elections and
//! indivisible-goods allocations, and brute-force oracles for cross-checking.

pub mod bench;
pub mod builders;
pub mod graph;
pub mod logic;
pub mod oracle;
pub mod eval;
pub mod properties;
