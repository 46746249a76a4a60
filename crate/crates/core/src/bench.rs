//! Scaling measurements on seeded random sparse graphs.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eval::{eval_with_stats, EvalError};
use crate::graph::{GraphError, ImprovementGraph};
use crate::logic::Formula;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark request: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub nodes: usize,
    pub edges: usize,
    /// Fastest of the repeated runs, in seconds.
    pub seconds: f64,
    /// Largest stage count over the formula's fixed points.
    pub lfp_stages: usize,
}

/// Single-agent graph where every node gets between 0 and 3 random
/// successors.
pub fn random_sparse_graph(nodes: usize, rng: &mut impl Rng) -> Result<ImprovementGraph, GraphError> {
    let mut arcs = Vec::new();
    for x in 0..nodes {
        let degree = rng.gen_range(0..=3usize);
        for _ in 0..degree {
            let y = rng.gen_range(0..nodes);
            if y != x {
                arcs.push((x, y));
            }
        }
    }
    ImprovementGraph::single_agent(nodes, &arcs)
}

/// Times `phi` on one random graph per size. Sizes must be strictly
/// ascending; each graph is evaluated `repeats` times and the fastest run
/// is kept.
pub fn run_bench(
    sizes: &[usize],
    phi: &Formula,
    seed: u64,
    repeats: usize,
) -> Result<Vec<BenchRow>, BenchError> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::InvalidArgument(
            "sizes must be nonempty and strictly ascending".into(),
        ));
    }
    if repeats == 0 {
        return Err(BenchError::InvalidArgument("repeats must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let g = random_sparse_graph(n, &mut rng)?;
        let mut best = f64::INFINITY;
        let mut stages = 0;
        for _ in 0..repeats {
            let start = Instant::now();
            let verdict = eval_with_stats(&g, phi)?;
            best = best.min(start.elapsed().as_secs_f64());
            stages = verdict.stats.lfp_stages.iter().copied().max().unwrap_or(0);
        }
        rows.push(BenchRow {
            nodes: n,
            edges: g.edges().len(),
            seconds: best,
            lfp_stages: stages,
        });
    }
    Ok(rows)
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("nodes,edges,seconds,lfp_stages\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.6},{}\n", r.nodes, r.edges, r.seconds, r.lfp_stages));
    }
    out
}

/// Checks that time grows at most quadratically between consecutive sizes,
/// allowing a multiplicative `noise` factor.
pub fn check_quadratic(rows: &[BenchRow], noise: f64) -> Result<(), String> {
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let allowed = noise * (b.nodes as f64 / a.nodes as f64).powi(2);
        let ratio = b.seconds / a.seconds.max(1e-9);
        if ratio > allowed {
            return Err(format!(
                "time grew {ratio:.1}x from {} to {} nodes, allowed {allowed:.1}x",
                a.nodes, b.nodes
            ));
        }
    }
    Ok(())
}
