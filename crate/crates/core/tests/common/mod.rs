//! Brute-force reference implementations shared by the integration tests.
//! Nothing here reduces or prunes; the point is to be obviously right.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use fence_forge::checker::{Event, FinalState, OrderingConstraint};
use fence_forge::hitset::Collection;
use fence_forge::ir::{Op, StmtId, UnrolledProgram, Value};
use fence_forge::memmodel::{Arch, PairSet, StatementPair};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, PartialEq, Eq, Hash)]
struct State {
    pcs: Vec<usize>,
    locals: Vec<Vec<Value>>,
    memory: Vec<Value>,
    /// Per thread, (var, value, sid) in issue order.
    buffers: Vec<Vec<(usize, Value, StmtId)>>,
    reordered: BTreeSet<StatementPair>,
}

/// What a full exploration saw.
#[derive(Default)]
pub struct Reach {
    pub finals: BTreeSet<FinalState>,
    /// Reordered-pair sets of executions that violate an assertion.
    pub violations: BTreeSet<BTreeSet<StatementPair>>,
}

/// Explores every interleaving of statements and buffer drains.
pub fn explore(u: &UnrolledProgram, arch: Arch) -> Reach {
    let init = State {
        pcs: vec![0; u.threads.len()],
        locals: u.locals.iter().map(|l| vec![0; l.len()]).collect(),
        memory: u.initial_memory(),
        buffers: vec![Vec::new(); u.threads.len()],
        reordered: BTreeSet::new(),
    };
    let mut reach = Reach::default();
    let mut seen = HashSet::new();
    let mut stack = vec![init];
    while let Some(s) = stack.pop() {
        if !seen.insert(s.clone()) {
            continue;
        }
        let nthreads = u.threads.len();
        let done = (0..nthreads).all(|t| s.pcs[t] == u.threads[t].len());
        if done && s.buffers.iter().all(Vec::is_empty) {
            reach.finals.insert(FinalState {
                memory: s.memory.clone(),
                locals: s.locals.clone(),
            });
            if let Some(fa) = &u.final_assert {
                if fa.eval(&[], &s.memory, &|t, l| s.locals[t][l]).unwrap() == 0 {
                    reach.violations.insert(s.reordered.clone());
                }
            }
            continue;
        }
        for t in 0..nthreads {
            if s.pcs[t] < u.threads[t].len() {
                match thread_step(u, arch, &s, t) {
                    Some(Ok(next)) => stack.push(next),
                    Some(Err(())) => {
                        reach.violations.insert(s.reordered.clone());
                    }
                    None => {}
                }
            }
            for i in 0..s.buffers[t].len() {
                let (var, value, sid) = s.buffers[t][i];
                let drainable = match arch {
                    Arch::Sc => false,
                    Arch::Tso => i == 0,
                    Arch::Pso => s.buffers[t][..i].iter().all(|e| e.0 != var),
                };
                if !drainable {
                    continue;
                }
                let mut next = s.clone();
                next.buffers[t].remove(i);
                next.memory[var] = value;
                for older in &s.buffers[t][..i] {
                    next.reordered.insert(StatementPair::new(older.2, sid));
                }
                stack.push(next);
            }
        }
    }
    reach
}

/// `None` when blocked, `Err` on a failed assertion.
fn thread_step(u: &UnrolledProgram, arch: Arch, s: &State, t: usize) -> Option<Result<State, ()>> {
    let ins = &u.instructions[u.threads[t][s.pcs[t]]];
    let locals = &s.locals[t];
    let mut n = s.clone();
    n.pcs[t] += 1;
    match &ins.op {
        Op::Load { local, var } => {
            let own = s.buffers[t].iter().rev().find(|e| e.0 == *var);
            n.locals[t][*local] = own.map_or(s.memory[*var], |e| e.1);
            for e in &s.buffers[t] {
                if e.0 != *var {
                    n.reordered.insert(StatementPair::new(e.2, ins.sid));
                }
            }
        }
        Op::Store { var, value } => {
            let v = value.eval_local(locals).unwrap();
            if arch == Arch::Sc {
                n.memory[*var] = v;
            } else {
                n.buffers[t].push((*var, v, ins.sid));
            }
        }
        Op::Assign { local, value } => n.locals[t][*local] = value.eval_local(locals).unwrap(),
        Op::Fence => {
            if !s.buffers[t].is_empty() {
                return None;
            }
        }
        Op::Assert(c) => {
            if c.eval_local(locals).unwrap() == 0 {
                return Some(Err(()));
            }
        }
        Op::Assume(c) => {
            if c.eval_local(locals).unwrap() == 0 {
                return None;
            }
        }
        Op::BranchUnless { cond, target } => {
            if cond.eval_local(locals).unwrap() == 0 {
                n.pcs[t] = *target;
            }
        }
        Op::Jump { target } => n.pcs[t] = *target,
    }
    Some(Ok(n))
}

/// The outcome a bounded, constrained check must report, from the full
/// set of violating executions: (unsafe, bound_limited).
pub fn expected_verdict(reach: &Reach, phi: &OrderingConstraint, k: Option<usize>) -> (bool, bool) {
    let admitted: Vec<_> = reach.violations.iter().filter(|r| phi.admits(r)).collect();
    let within = admitted.iter().any(|r| k.is_none_or(|k| r.len() <= k));
    (within, !within && !admitted.is_empty())
}

/// Inversions of program order in a global event order, pair by pair.
pub fn inversions(events: &[Event], u: &UnrolledProgram) -> PairSet {
    let mut out = PairSet::new();
    for (i, late) in events.iter().enumerate() {
        for early in &events[i + 1..] {
            let (a, b) = (&u.instructions[early.iid], &u.instructions[late.iid]);
            if a.tid == b.tid && a.po_index < b.po_index && early.var != late.var {
                out.insert(StatementPair::new(a.sid, b.sid));
            }
        }
    }
    out
}

/// Smallest hitting set size by trying every subset of the elements.
pub fn brute_min_size(c: &Collection<u32>) -> usize {
    let elems: Vec<u32> = c
        .sets()
        .iter()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut best = usize::MAX;
    for mask in 0u32..(1 << elems.len()) {
        let pick: BTreeSet<u32> = (0..elems.len())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| elems[i])
            .collect();
        if pick.len() < best && c.sets().iter().all(|s| !s.is_disjoint(&pick)) {
            best = pick.len();
        }
    }
    best
}

/// Every smallest hitting set, in lexicographic order.
pub fn brute_optima(c: &Collection<u32>) -> Vec<BTreeSet<u32>> {
    let elems: Vec<u32> = c
        .sets()
        .iter()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let size = brute_min_size(c);
    let mut out: Vec<BTreeSet<u32>> = (0u32..(1 << elems.len()))
        .filter(|m| m.count_ones() as usize == size)
        .map(|m| {
            (0..elems.len())
                .filter(|i| m >> i & 1 == 1)
                .map(|i| elems[i])
                .collect()
        })
        .filter(|pick: &BTreeSet<u32>| c.sets().iter().all(|s| !s.is_disjoint(pick)))
        .collect();
    out.sort_by(|a, b| a.iter().cmp(b.iter()));
    out
}

/// Seeded random collections: universe below `universe`, up to `max_sets` sets.
pub fn random_collections(
    seed: u64,
    count: usize,
    universe: u32,
    max_sets: usize,
) -> Vec<Collection<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let sets = rng.gen_range(1..=max_sets);
            (0..sets)
                .map(|_| {
                    let size = rng.gen_range(1..=4.min(universe as usize));
                    (0..size)
                        .map(|_| rng.gen_range(0..universe))
                        .collect::<BTreeSet<u32>>()
                })
                .collect()
        })
        .collect()
}

/// Small random programs over shared `x`, `y` and registers `a`, `b`.
pub fn program_text() -> impl Strategy<Value = String> {
    let stmt = prop_oneof![
        3 => (0..2usize, 1..3i64).prop_map(|(v, c)| format!("store {} = {c};", ["x", "y"][v])),
        1 => (0..2usize, 0..2usize).prop_map(|(v, r)| format!("store {} = {} + 1;", ["x", "y"][v], ["a", "b"][r])),
        3 => (0..2usize, 0..2usize).prop_map(|(r, v)| format!("load {} = {};", ["a", "b"][r], ["x", "y"][v])),
        1 => Just("fence;".to_string()),
        1 => (0..2usize, 0..3i64).prop_map(|(r, c)| format!("a = {} + {c};", ["a", "b"][r])),
        1 => (0..2usize, 0..3i64).prop_map(|(r, c)| format!("assume({} <= {c});", ["a", "b"][r])),
        1 => (0..2usize, 0..2usize).prop_map(|(r, v)| {
            format!("if (b == 0) {{ load {} = {}; }} else {{ fence; }}", ["a", "b"][r], ["x", "y"][v])
        }),
    ];
    let thread = prop::collection::vec(stmt, 1..=4);
    let assertion = prop_oneof![
        Just("!(t1.a == 0 && t2.a == 0)"),
        Just("x + y != 3"),
        Just("t1.a <= t2.b || x == 1"),
        Just("!(t1.b == 1 && t2.a == 0)"),
    ];
    (
        prop::collection::vec(thread, 2..=2),
        assertion,
        any::<bool>(),
    )
        .prop_map(|(threads, assertion, inner)| {
            let mut out = String::from("shared x = 0;\nshared y = 0;\n");
            for (i, body) in threads.iter().enumerate() {
                out.push_str(&format!("\nthread t{} {{\n  a = 0;\n  b = 0;\n", i + 1));
                for s in body {
                    out.push_str(&format!("  {s}\n"));
                }
                if inner && i == 1 {
                    out.push_str("  assert(a + b != 2);\n");
                }
                out.push_str("}\n");
            }
            out.push_str(&format!("\nfinal {{ assert({assertion}); }}\n"));
            out
        })
}
