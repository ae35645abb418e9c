mod common;

use fence_forge::bench::corpus;
use fence_forge::checker::{get_reordered_pairs, CheckResult, Checker, OrderingConstraint};
use fence_forge::ir::{parse, unroll, UnrolledProgram};
use fence_forge::memmodel::{enumerate_pairs, Arch, PairSet};
use proptest::prelude::*;

use common::{expected_verdict, explore, inversions, program_text};

const ARCHS: [Arch; 3] = [Arch::Sc, Arch::Tso, Arch::Pso];

fn small_corpus() -> Vec<(String, UnrolledProgram)> {
    corpus()
        .into_iter()
        .map(|e| (e.name.clone(), e.unrolled()))
        .filter(|(_, u)| u.instructions.len() <= 16)
        .collect()
}

/// A trace's pairs: tracked, recomputed, and rederived by brute force, all equal.
fn assert_trace_consistent(u: &UnrolledProgram, r: &CheckResult) {
    if let Some(t) = r.trace() {
        let recomputed = get_reordered_pairs(&t.events, u).unwrap();
        assert_eq!(t.reordered, recomputed);
        assert_eq!(t.reordered, inversions(&t.events, u));
    }
}

/// Some constraints worth checking against: nothing, each single ban, all bans.
fn constraints(u: &UnrolledProgram, arch: Arch) -> Vec<OrderingConstraint> {
    let pairs: Vec<_> = enumerate_pairs(u, arch).into_iter().collect();
    let mut out = vec![OrderingConstraint::new(), OrderingConstraint::bans(&pairs)];
    out.extend(pairs.iter().map(|p| OrderingConstraint::bans([p])));
    if pairs.len() >= 2 {
        let mut either = OrderingConstraint::new();
        either.add_clause(pairs[..2].iter().copied().collect::<PairSet>());
        out.push(either);
    }
    out
}

fn agree_with_oracle(u: &UnrolledProgram, arch: Arch) {
    let reach = explore(u, arch);
    let c = Checker::new(u, arch);
    assert_eq!(
        c.final_states().unwrap(),
        reach.finals,
        "final states under {arch}"
    );
    for phi in constraints(u, arch) {
        for k in [Some(0), Some(1), Some(2), None] {
            let r = c.check(&phi, k).unwrap();
            let (unsafe_, limited) = expected_verdict(&reach, &phi, k);
            assert_eq!(!r.is_safe(), unsafe_, "{arch} k={k:?} phi={phi:?}");
            match &r {
                CheckResult::Safe(ev) => {
                    assert_eq!(ev.bound_limited, limited, "{arch} k={k:?} phi={phi:?}")
                }
                _ => {
                    let t = r.trace().unwrap();
                    assert!(phi.admits(&t.reordered));
                    assert!(k.is_none_or(|k| t.reordered.len() <= k));
                    assert!(reach.violations.contains(&t.reordered));
                }
            }
            assert_trace_consistent(u, &r);
        }
    }
}

#[test]
fn corpus_matches_brute_force() {
    for (name, u) in small_corpus() {
        for arch in ARCHS {
            eprintln!("{name} {arch}");
            agree_with_oracle(&u, arch);
        }
    }
}

#[test]
fn litmus_outcomes() {
    let outcomes = |name: &str, arch: Arch| {
        let e = corpus().into_iter().find(|e| e.name == name).unwrap();
        let u = e.unrolled();
        Checker::new(&u, arch).final_states().unwrap().len()
    };
    // store buffering adds the (0, 0) outcome from TSO on
    assert_eq!(outcomes("sb", Arch::Sc), 3);
    assert_eq!(outcomes("sb", Arch::Tso), 4);
    assert_eq!(outcomes("sb", Arch::Pso), 4);
    // message passing breaks only once stores reorder
    assert_eq!(outcomes("mp", Arch::Tso), 3);
    assert_eq!(outcomes("mp", Arch::Pso), 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn random_programs_match_brute_force(src in program_text()) {
        let p = parse(&src).unwrap();
        let u = unroll(&p, 1);
        for arch in ARCHS {
            agree_with_oracle(&u, arch);
        }
    }
}
