//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any criterion fails.

mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use igcheck_core::bench::{check_quadratic, run_bench, to_csv};
use igcheck_core::builders::{build_allocation_graph, build_game_graph, top_trading_cycle, GameMode};
use igcheck_core::eval::{apply_operator, eval, eval_with, lfp_eval, Env, EvalOptions};
use igcheck_core::graph::{ImprovementGraph, NodeId};
use igcheck_core::logic::{free_vars, parse, Comparator, Formula};
use igcheck_core::oracle::{
    oracle_acyclic, oracle_nash, oracle_reach_count, oracle_sinks, oracle_weakly_acyclic,
};
use igcheck_core::properties::{
    acyclic, acyclic_nodes, k_fip, k_fip_nodes, path_count, sink, sink_k, sink_reach_nodes, special,
    weakly_acyclic,
};
use support::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn wide() -> EvalOptions {
    EvalOptions {
        allow_wide: true,
        ..EvalOptions::default()
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn oracle_sweep() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(0x5eed_0001);
    let mut checks = 0usize;
    let (mut cyclic, mut not_weak) = (0, 0);
    for round in 0..500 {
        let g = random_mixed_graph(&mut rng, 64, 4);
        let v = g.node_count();
        let err = |what: &str| format!("graph {round} ({v} nodes): {what} disagrees");
        ensure(node_set(&eval(&g, &sink()).unwrap()) == oracle_sinks(&g, 1), || err("sink"))?;
        ensure(boolean(&eval(&g, &acyclic()).unwrap()) == oracle_acyclic(&g, 1), || err("acyclic"))?;
        ensure(
            boolean(&eval(&g, &weakly_acyclic()).unwrap()) == oracle_weakly_acyclic(&g, 1),
            || err("weakly-acyclic"),
        )?;
        for k in 1..=g.agents() {
            let f = k_fip(k).unwrap();
            ensure(boolean(&eval(&g, &f).unwrap()) == oracle_acyclic(&g, k), || err(&format!("{k}-FIP")))?;
        }
        let reach = oracle_reach_count(&g);
        for b in [1, 5, v as u64] {
            let got = boolean(&eval(&g, &path_count(b)).unwrap());
            ensure(got == ((reach as u64) < b), || err(&format!("path-count({b})")))?;
        }
        checks += 6 + g.agents();
        cyclic += usize::from(!oracle_acyclic(&g, 1));
        not_weak += usize::from(!oracle_weakly_acyclic(&g, 1));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    ensure(cyclic > 0 && cyclic < 500 && not_weak > 0, || "sweep lacks cyclic or acyclic cases".into())?;
    Ok(format!(
        "500 graphs ({cyclic} cyclic, {not_weak} not weakly acyclic), {checks} verdicts, 0 disagreements, {secs:.2}s"
    ))
}

fn semantics_conformance() -> Outcome {
    let mut rng = rng(0x5eed_0002);
    for round in 0..200 {
        let g = with_random_atoms(random_mixed_graph(&mut rng, 6, 3), &mut rng);
        let phi = random_formula(&mut rng, g.agents(), 4);
        let got = eval_with(&g, &phi, wide()).map_err(|e| format!("formula {round} `{phi}`: {e}"))?;
        let want = reference_verdict(&g, &phi);
        ensure(got.value == want, || {
            format!("formula {round} `{phi}`: evaluator {:?}, reference {want:?}", got.value)
        })?;
    }
    Ok("200 formulas agree with the direct recursion".into())
}

fn game_fixtures() -> Outcome {
    let mut lines = Vec::new();
    let fixtures = [
        ("matching pennies", matching_pennies(), Some(vec![]), false, Some(false)),
        ("prisoner's dilemma", prisoners_dilemma(), Some(vec![label(&["D", "D"])]), true, None),
        ("coordination", coordination(), None, true, None),
        ("congestion", congestion(), None, true, None),
    ];
    for (name, game, expected_sinks, expected_acyclic, expected_weak) in fixtures {
        let g = build_game_graph(&game, GameMode::Unilateral).map_err(|e| e.to_string())?;
        let sinks = node_set(&eval(&g, &sink()).unwrap());
        let acyc = boolean(&eval(&g, &acyclic()).unwrap());
        let weak = boolean(&eval(&g, &weakly_acyclic()).unwrap());
        // cross-check against the enumeration oracles before the fixed values
        ensure(sinks == oracle_sinks(&g, 1), || format!("{name}: sinks differ from oracle"))?;
        ensure(labels_of(&g, &sinks) == oracle_nash(&game), || format!("{name}: sinks differ from Nash set"))?;
        ensure(acyc == oracle_acyclic(&g, 1), || format!("{name}: acyclic differs from oracle"))?;
        ensure(weak == oracle_weakly_acyclic(&g, 1), || format!("{name}: weak acyclicity differs"))?;
        if let Some(want) = expected_sinks {
            let want: BTreeSet<_> = want.into_iter().collect();
            ensure(labels_of(&g, &sinks) == want, || format!("{name}: sink set {:?}", labels_of(&g, &sinks)))?;
        }
        if name == "coordination" {
            ensure(sinks.len() == 2, || format!("{name}: {} sinks", sinks.len()))?;
        }
        ensure(acyc == expected_acyclic, || format!("{name}: acyclic = {acyc}"))?;
        if let Some(w) = expected_weak {
            ensure(weak == w, || format!("{name}: weakly-acyclic = {weak}"))?;
        }
        lines.push(format!("{name}: {} sinks, acyclic {acyc}", sinks.len()));
    }
    Ok(lines.join("; "))
}

fn nash_cross_check() -> Outcome {
    let mut rng = rng(0x5eed_0004);
    for round in 0..200 {
        let game = random_game(&mut rng);
        let g = build_game_graph(&game, GameMode::Unilateral).map_err(|e| e.to_string())?;
        let sinks = labels_of(&g, &node_set(&eval(&g, &sink()).unwrap()));
        let nash = oracle_nash(&game);
        ensure(sinks == nash, || format!("game {round}: sinks {sinks:?}, Nash {nash:?}"))?;
    }
    Ok("200 random games".into())
}

fn ttc_core_stability() -> Outcome {
    let mut rng = rng(0x5eed_0005);
    for round in 0..200 {
        let market = random_housing(&mut rng, 3);
        let g = build_allocation_graph(&market, 3).map_err(|e| e.to_string())?;
        let ttc = top_trading_cycle(&market).map_err(|e| e.to_string())?;
        let x = g.find(&ttc).ok_or_else(|| format!("market {round}: TTC label {ttc:?} missing"))?;
        let oracle = oracle_sinks(&g, 3);
        ensure(oracle.contains(&x), || format!("market {round}: TTC output {ttc:?} has a blocking coalition"))?;
        let evaluated = node_set(&eval(&g, &sink_k(3).unwrap()).unwrap());
        ensure(evaluated == oracle, || format!("market {round}: sink_3 differs from oracle"))?;
    }
    Ok("200 random 3-agent housing markets".into())
}

fn check_run(g: &ImprovementGraph, lfp: &Formula, env: &Env) -> Result<usize, String> {
    let run = lfp_eval(g, lfp, env).map_err(|e| format!("`{lfp}`: {e}"))?;
    let v = g.node_count();
    ensure(run.stages.len() <= v + 1, || format!("`{lfp}`: {} stages on {v} nodes", run.stages.len()))?;
    ensure(run.stages.windows(2).all(|w| w[0].is_subset(&w[1])), || format!("`{lfp}`: stages not monotone"))?;
    ensure(run.stages.last() == Some(&run.fixpoint), || format!("`{lfp}`: last stage is not the fixpoint"))?;
    let again = apply_operator(g, lfp, env, &run.fixpoint).map_err(|e| e.to_string())?;
    ensure(again == run.fixpoint, || format!("`{lfp}`: one more application changes the fixpoint"))?;
    Ok(run.stages.len())
}

fn lfp_subformulas<'f>(phi: &'f Formula, out: &mut Vec<&'f Formula>) {
    if let Formula::Lfp { .. } = phi {
        out.push(phi);
    }
    for c in phi.children() {
        lfp_subformulas(c, out);
    }
}

fn lfp_mechanics() -> Outcome {
    let mut rng = rng(0x5eed_0006);
    let mut runs = 0usize;
    let mut longest = 0usize;
    for _ in 0..200 {
        let g = with_random_atoms(random_mixed_graph(&mut rng, 24, 3), &mut rng);
        let v = g.node_count();
        let mut fixed = vec![acyclic_nodes(), sink_reach_nodes(), special(2).unwrap()];
        for k in 1..=g.agents() {
            fixed.push(k_fip_nodes(k).unwrap());
        }
        for phi in &fixed {
            let mut lfps = Vec::new();
            lfp_subformulas(phi, &mut lfps);
            for lfp in lfps {
                longest = longest.max(check_run(&g, lfp, &Env::default())?);
                runs += 1;
            }
        }
        // closed-parameter fixpoints inside random formulas, under every assignment
        let phi = random_formula(&mut rng, g.agents(), 3);
        let mut lfps = Vec::new();
        lfp_subformulas(&phi, &mut lfps);
        for lfp in lfps {
            let Formula::Lfp { set, var, body, .. } = lfp else { unreachable!() };
            let vs = free_vars(body);
            if vs.so.iter().any(|s| s != set) || vs.fo.iter().any(|x| x != var && !FREE_VARS.contains(&x.as_str())) {
                continue;
            }
            for a in 0..v {
                for b in 0..v {
                    let env = Env::default().with_node("a", NodeId(a)).with_node("b", NodeId(b));
                    longest = longest.max(check_run(&g, lfp, &env)?);
                    runs += 1;
                }
            }
        }
        // stage counts reported by full evaluation obey the same bound
        let traced = eval_with(&g, &phi, EvalOptions { allow_wide: true, trace_lfp: true }).unwrap();
        ensure(traced.stats.lfp_stages.iter().all(|&s| s <= v + 1), || "stage count over bound".into())?;
        for t in &traced.stats.traces {
            ensure(t.stages.windows(2).all(|w| w[0].is_subset(&w[1])), || "traced stages not monotone".into())?;
        }
    }
    Ok(format!("{runs} fixpoint runs, longest {longest} stages"))
}

fn counting_agreement() -> Outcome {
    let mut rng = rng(0x5eed_0007);
    let mut compared = 0;
    for round in 0..100 {
        let g = with_random_atoms(random_mixed_graph(&mut rng, 6, 3), &mut rng);
        let phi = random_formula(&mut rng, g.agents(), 3);
        for k in 0..=3 {
            let counted = Formula::count("a", phi.clone(), Comparator::Le, k);
            let expanded = count_expansion("a", &phi, Comparator::Le, k);
            let lhs = eval_with(&g, &counted, wide()).map_err(|e| e.to_string())?;
            let rhs = eval_with(&g, &expanded, wide()).map_err(|e| e.to_string())?;
            ensure(lhs.value == rhs.value, || {
                format!("formula {round} `{phi}` with k = {k}: {:?} vs {:?}", lhs.value, rhs.value)
            })?;
            ensure(lhs.value == reference_verdict(&g, &counted), || format!("formula {round}: reference differs"))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} count/expansion pairs agree"))
}

fn scaling() -> Outcome {
    let start = Instant::now();
    let rows = run_bench(&[16, 64, 256, 1024], &weakly_acyclic(), 0x5eed_0008, 5).map_err(|e| e.to_string())?;
    print!("{}", to_csv(&rows));
    check_quadratic(&rows, 3.0)?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 300.0, || format!("bench took {secs:.1}s"))?;
    Ok(format!("within 3x of quadratic, {secs:.2}s total"))
}

const ILL_FORMED: [(&str, &str); 20] = [
    ("negated set atom", "lfp S,x. (!S(x)) @ u"),
    ("triple negation", "lfp S,x. (!(!(!S(x)))) @ u"),
    ("set atom in antecedent", "lfp S,x. (S(x) -> E(x,x)) @ u"),
    ("set atom under negated exists", "lfp S,x. (E(x,x) | !(ex z. S(z))) @ u"),
    ("set atom under count below", "lfp S,x. (C y (S(y)) < 2) @ u"),
    ("set atom under count at most", "lfp S,x. (C y (S(y) & E(x,y)) <= 1) @ u"),
    ("set atom under count equal", "lfp S,x. (C y (S(y)) = 1) @ u"),
    ("outer set negated in inner fixpoint", "lfp S,x. (ex y. (E(x,y) & lfp T,z. (!S(z) | T(z)) @ y)) @ u"),
    ("argument free in body", "lfp S,x. (E(x,u) | S(x)) @ u"),
    ("argument is the bound variable", "lfp S,x. (S(x)) @ x"),
    ("argument free in nested body", "all u. lfp S,x. (S(x) | ex y. (E(u,y) & E(y,x))) @ u"),
    ("set variable absent", "lfp S,x. (E(x,x)) @ u"),
    ("fixpoint variable absent", "lfp S,x. (ex y. S(y)) @ u"),
    ("edge with one argument", "E(x)"),
    ("edge with three arguments", "E(x,y,z)"),
    ("coalition edge with one argument", "E_1(x)"),
    ("unary atom used as binary", "P(x,y)"),
    ("binary atom used as unary", "R(x)"),
    ("unknown predicate", "Q(x)"),
    ("free set variable", "S(x) | E(x,x)"),
];

fn well_formedness() -> Outcome {
    let mut rng = rng(0x5eed_0009);
    let g = with_random_atoms(random_graph(&mut rng, 6, 2, 0.3), &mut rng);
    let mut kinds = BTreeMap::new();
    for (name, text) in ILL_FORMED {
        let outcome = catch_unwind(AssertUnwindSafe(|| match parse(text) {
            Err(e) => Err(format!("parse: {e}")),
            Ok(phi) => eval(&g, &phi).map(|v| v.value).map_err(|e| format!("eval: {e}")),
        }));
        match outcome {
            Err(_) => return Err(format!("{name}: panicked")),
            Ok(Ok(v)) => return Err(format!("{name}: produced verdict {v:?}")),
            Ok(Err(msg)) => {
                *kinds.entry(msg.split(':').next().unwrap_or("").to_string()).or_insert(0) += 1;
            }
        }
    }
    Ok(format!("20 rejected ({kinds:?})"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("oracle equivalence sweep", oracle_sweep),
        ("semantics conformance", semantics_conformance),
        ("game fixtures", game_fixtures),
        ("nash cross-check", nash_cross_check),
        ("ttc core stability", ttc_core_stability),
        ("lfp mechanics", lfp_mechanics),
        ("counting agreement", counting_agreement),
        ("scaling sanity", scaling),
        ("well-formedness rejection", well_formedness),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {}: {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
