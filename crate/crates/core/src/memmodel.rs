//! Architecture reorderability predicates and the statement pairs they admit.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::ir::{Access, AccessType, Program, Statement, UnrolledProgram};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arch {
    Sc,
    Tso,
    Pso,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Sc => "sc",
            Arch::Tso => "tso",
            Arch::Pso => "pso",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sc" => Ok(Arch::Sc),
            "tso" => Ok(Arch::Tso),
            "pso" => Ok(Arch::Pso),
            other => Err(format!(
                "unknown architecture `{other}` (expected sc, tso or pso)"
            )),
        }
    }
}

/// A po-ordered pair of statements of one thread. The derived order is
/// `(tid, first ordinal, second ordinal)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StatementPair {
    pub first: crate::ir::StmtId,
    pub second: crate::ir::StmtId,
}

impl StatementPair {
    pub fn new(first: crate::ir::StmtId, second: crate::ir::StmtId) -> Self {
        debug_assert_eq!(first.tid, second.tid, "pairs never cross threads");
        StatementPair { first, second }
    }

    /// `t1.1~t1.2`
    pub fn display(&self, p: &Program) -> String {
        format!("{}~{}", p.sid_name(self.first), p.sid_name(self.second))
    }
}

pub type PairSet = BTreeSet<StatementPair>;

/// `;`-joined `sid1~sid2` tokens, in set order.
pub fn format_pairs(p: &Program, pairs: &PairSet) -> String {
    pairs
        .iter()
        .map(|x| x.display(p))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn reorderable_access(a1: Access<'_>, a2: Access<'_>, arch: Arch) -> bool {
    match arch {
        Arch::Sc => false,
        Arch::Tso => {
            a1.var != a2.var && a1.kind == AccessType::Write && a2.kind == AccessType::Read
        }
        Arch::Pso => a1.var != a2.var && a1.kind == AccessType::Write,
    }
}

/// Whether `arch` may reorder `s1` (po-earlier) with `s2`. Statements with
/// no shared access are never reorderable.
pub fn reorderable(s1: &Statement, s2: &Statement, arch: Arch) -> bool {
    match (s1.access(), s2.access()) {
        (Some(a1), Some(a2)) => reorderable_access(a1, a2, arch),
        _ => false,
    }
}

/// Every statement pair some po-ordered instruction pair of one thread can
/// reorder under `arch`, at any program-order distance.
pub fn enumerate_pairs(u: &UnrolledProgram, arch: Arch) -> PairSet {
    let mut out = PairSet::new();
    if arch == Arch::Sc {
        return out;
    }
    let stmts = u.program.statements();
    let lookup = |sid| {
        *stmts
            .iter()
            .find(|s| s.sid == sid)
            .expect("instruction of a known statement")
    };
    for iids in &u.threads {
        let ordered: Vec<&Statement> = iids
            .iter()
            .map(|&iid| lookup(u.instructions[iid].sid))
            .filter(|s| s.access().is_some())
            .collect();
        for (i, s1) in ordered.iter().enumerate() {
            for s2 in &ordered[i + 1..] {
                if reorderable(s1, s2, arch) {
                    out.insert(StatementPair::new(s1.sid, s2.sid));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse, unroll, StmtId};

    const FIG_1A: &str = "shared x = 0; shared y = 0;
        thread t1 { store x = 1; load r1 = y; }
        thread t2 { store y = 1; load r2 = x; }
        final { assert(t1.r1 == 1 || t2.r2 == 1); }";

    const FIG_1B: &str = "shared x = 0; shared y = 0;
        thread t1 { store x = 1; store y = 1; }
        thread t2 { load r1 = y; load r2 = x; }
        final { assert(t2.r1 != 1 || t2.r2 == 1); }";

    fn sid(tid: usize, ordinal: usize) -> StmtId {
        StmtId { tid, ordinal }
    }

    fn pair(tid: usize, a: usize, b: usize) -> StatementPair {
        StatementPair::new(sid(tid, a), sid(tid, b))
    }

    fn acc(var: &str, kind: AccessType) -> Access<'_> {
        Access { var, kind }
    }

    #[test]
    fn tso_allows_only_write_then_read_of_distinct_vars() {
        use AccessType::*;
        assert!(reorderable_access(
            acc("x", Write),
            acc("y", Read),
            Arch::Tso
        ));
        assert!(!reorderable_access(
            acc("x", Write),
            acc("x", Read),
            Arch::Tso
        ));
        assert!(!reorderable_access(
            acc("x", Write),
            acc("y", Write),
            Arch::Tso
        ));
        assert!(!reorderable_access(
            acc("x", Read),
            acc("y", Write),
            Arch::Tso
        ));
        assert!(!reorderable_access(
            acc("x", Read),
            acc("y", Read),
            Arch::Tso
        ));
    }

    #[test]
    fn pso_adds_write_write() {
        use AccessType::*;
        assert!(reorderable_access(
            acc("x", Write),
            acc("y", Write),
            Arch::Pso
        ));
        assert!(reorderable_access(
            acc("x", Write),
            acc("y", Read),
            Arch::Pso
        ));
        assert!(!reorderable_access(
            acc("x", Write),
            acc("x", Write),
            Arch::Pso
        ));
        assert!(!reorderable_access(
            acc("x", Read),
            acc("y", Write),
            Arch::Pso
        ));
    }

    #[test]
    fn sc_allows_nothing() {
        for k1 in [AccessType::Read, AccessType::Write] {
            for k2 in [AccessType::Read, AccessType::Write] {
                assert!(!reorderable_access(acc("x", k1), acc("y", k2), Arch::Sc));
            }
        }
    }

    #[test]
    fn fences_and_locals_are_not_reorderable() {
        let p = parse("shared x = 0; thread t { store x = 1; fence; r = 2; load q = x; }").unwrap();
        let s = p.statements();
        for a in &s {
            for b in &s {
                if a.access().is_none() || b.access().is_none() {
                    assert!(!reorderable(a, b, Arch::Pso));
                }
            }
        }
    }

    #[test]
    fn fig_1a_pairs() {
        let u = unroll(&parse(FIG_1A).unwrap(), 1);
        let tso = enumerate_pairs(&u, Arch::Tso);
        assert_eq!(tso, [pair(0, 1, 2), pair(1, 1, 2)].into_iter().collect());
        assert!(enumerate_pairs(&u, Arch::Sc).is_empty());
    }

    #[test]
    fn fig_1b_write_write_only_under_pso() {
        let u = unroll(&parse(FIG_1B).unwrap(), 1);
        assert!(enumerate_pairs(&u, Arch::Tso).is_empty());
        assert_eq!(
            enumerate_pairs(&u, Arch::Pso),
            [pair(0, 1, 2)].into_iter().collect()
        );
    }

    #[test]
    fn loop_pairs_can_run_against_syntactic_order() {
        // second iteration's store to x follows the first iteration's load of y
        let p = parse(
            "shared x = 0; shared y = 0;
             thread t { i = 0; while (i < 2) { load a = y; store x = 1; i = i + 1; } }",
        )
        .unwrap();
        let u = unroll(&p, 2);
        let pairs = enumerate_pairs(&u, Arch::Tso);
        // store x (t.4) then load y (t.3) in the next iteration
        assert_eq!(pairs, [pair(0, 4, 3)].into_iter().collect());
        let u1 = unroll(&p, 1);
        assert!(enumerate_pairs(&u1, Arch::Tso).is_empty());
    }

    #[test]
    fn arch_parses_case_insensitively() {
        assert_eq!("TSO".parse::<Arch>().unwrap(), Arch::Tso);
        assert!("rmo".parse::<Arch>().is_err());
    }
}
