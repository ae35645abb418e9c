//! Reorder-bounded model checking of unrolled programs under SC, TSO and PSO.
//!
//! The checker explores every execution of the store-buffer machine that
//! respects an [`OrderingConstraint`] and reorders at most `k` distinct
//! statement pairs. A statement pair counts as reordered as soon as a
//! po-later access of the same thread becomes globally visible while a
//! po-earlier store to a different variable is still buffered.
//!
//! A `Safe` verdict carries [`SafetyEvidence`]: `bound_limited` is set
//! exactly when a violating execution admitted by the constraint exists but
//! needs more than `k` reordered pairs. Callers can stop raising `k` once
//! the flag is clear.

mod explore;

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::time::Instant;

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::ir::{AccessType, EvalError, StmtId, UnrolledProgram, Value};
use crate::memmodel::{enumerate_pairs, Arch, PairSet, StatementPair};

/// A globally visible memory access: a read when it executes, a write when
/// it leaves the store buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    /// Position in the global memory order.
    pub seq: usize,
    pub tid: usize,
    pub iid: usize,
    pub var: usize,
    pub kind: AccessType,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Violation {
    /// An `assert` inside a thread body.
    Assertion { sid: StmtId },
    /// The `final` assertion.
    Final,
}

/// Shared memory and every thread's registers once all threads are done.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FinalState {
    pub memory: Vec<Value>,
    /// Indexed like [`UnrolledProgram::locals`].
    pub locals: Vec<Vec<Value>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<Event>,
    /// Pairs the checker saw reordered along this execution.
    pub reordered: PairSet,
    pub violated: Violation,
}

impl Trace {
    /// One event per line: `seq tid iid sid var type`, tab separated.
    pub fn dump(&self, u: &UnrolledProgram) -> String {
        let mut out = String::new();
        for e in &self.events {
            let sid = u.program.sid_name(u.instructions[e.iid].sid);
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                e.seq,
                e.tid,
                e.iid,
                sid,
                u.global_name(e.var),
                e.kind
            )
            .unwrap();
        }
        out
    }
}

/// A CNF over "this pair is not reordered" literals. Every clause must keep
/// at least one of its pairs in program order. No clauses means `true`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OrderingConstraint {
    clauses: Vec<PairSet>,
}

impl OrderingConstraint {
    pub fn new() -> Self {
        Self::default()
    }

    /// One singleton clause per pair: none of them may be reordered.
    pub fn bans<'a>(pairs: impl IntoIterator<Item = &'a StatementPair>) -> Self {
        let mut c = Self::new();
        for p in pairs {
            c.add_clause([*p].into_iter().collect());
        }
        c
    }

    /// Adds the disjunction "some pair of `clause` stays ordered".
    ///
    /// Panics on an empty clause, which would make the constraint unsatisfiable.
    pub fn add_clause(&mut self, clause: PairSet) {
        assert!(!clause.is_empty(), "ordering clauses must be non-empty");
        self.clauses.push(clause);
    }

    pub fn clauses(&self) -> &[PairSet] {
        &self.clauses
    }

    pub fn is_trivial(&self) -> bool {
        self.clauses.is_empty()
    }

    /// Whether an execution reordering exactly `reordered` satisfies every clause.
    pub fn admits(&self, reordered: &PairSet) -> bool {
        self.clauses.iter().all(|c| !c.is_subset(reordered))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SafetyEvidence {
    pub bound_limited: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CheckResult {
    Unsafe(Trace),
    Safe(SafetyEvidence),
    /// A violation reachable without any reordering.
    Unrepairable(Trace),
}

impl CheckResult {
    pub fn is_safe(&self) -> bool {
        matches!(self, CheckResult::Safe(_))
    }

    pub fn trace(&self) -> Option<&Trace> {
        match self {
            CheckResult::Unsafe(t) | CheckResult::Unrepairable(t) => Some(t),
            CheckResult::Safe(_) => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CheckError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("exploration exceeded the node budget of {0}")]
    NodeBudget(u64),
    #[error("exploration timed out")]
    Timeout,
    #[error("pair {0} cannot be reordered under this architecture")]
    IneligiblePair(String),
}

#[derive(Clone, Copy, Debug)]
pub struct Limits {
    /// Maximum number of machine states expanded per search.
    pub max_nodes: u64,
    pub deadline: Option<Instant>,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_nodes: 50_000_000,
            deadline: None,
        }
    }
}

/// How much work to spend on [`SafetyEvidence`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Evidence {
    /// `bound_limited` is exact; may cost a second, unbounded search.
    #[default]
    Exact,
    /// `bound_limited` only records that the bound cut some branch.
    Cut,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes: u64,
    pub memo_entries: usize,
}

/// A checker bound to one unrolled program and architecture. Cheap to
/// query repeatedly with different constraints and bounds.
pub struct Checker<'u> {
    u: &'u UnrolledProgram,
    arch: Arch,
    universe: Vec<StatementPair>,
    /// Per thread, `(ord1 * width + ord2) -> universe index`.
    slots: Vec<Vec<Option<u32>>>,
    widths: Vec<usize>,
    limits: Limits,
}

impl<'u> Checker<'u> {
    pub fn new(u: &'u UnrolledProgram, arch: Arch) -> Self {
        let universe: Vec<StatementPair> = enumerate_pairs(u, arch).into_iter().collect();
        let stmts = u.program.statements();
        let widths: Vec<usize> = (0..u.threads.len())
            .map(|t| {
                stmts
                    .iter()
                    .filter(|s| s.sid.tid == t)
                    .map(|s| s.sid.ordinal)
                    .max()
                    .unwrap_or(0)
                    + 1
            })
            .collect();
        let mut slots: Vec<Vec<Option<u32>>> = widths.iter().map(|w| vec![None; w * w]).collect();
        for (i, p) in universe.iter().enumerate() {
            let w = widths[p.first.tid];
            slots[p.first.tid][p.first.ordinal * w + p.second.ordinal] = Some(i as u32);
        }
        Checker {
            u,
            arch,
            universe,
            slots,
            widths,
            limits: Limits::default(),
        }
    }

    pub fn with_limits(mut self, limits: Limits) -> Self {
        self.limits = limits;
        self
    }

    pub fn set_limits(&mut self, limits: Limits) {
        self.limits = limits;
    }

    pub fn program(&self) -> &'u UnrolledProgram {
        self.u
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    /// The eligible pairs, in pair order.
    pub fn universe(&self) -> &[StatementPair] {
        &self.universe
    }

    fn slot(&self, first: StmtId, second: StmtId) -> usize {
        let w = self.widths[first.tid];
        self.slots[first.tid][first.ordinal * w + second.ordinal]
            .expect("every detected reordering is an eligible pair") as usize
    }

    fn pair_bits(&self, pairs: &PairSet) -> Result<FixedBitSet, CheckError> {
        let mut bits = FixedBitSet::with_capacity(self.universe.len());
        for p in pairs {
            match self.universe.binary_search(p) {
                Ok(i) => bits.insert(i),
                Err(_) => return Err(CheckError::IneligiblePair(p.display(&self.u.program))),
            }
        }
        Ok(bits)
    }

    fn bits_to_pairs(&self, bits: &FixedBitSet) -> PairSet {
        bits.ones().map(|i| self.universe[i]).collect()
    }

    /// Looks for a violation admitted by `phi` with at most `k` reordered
    /// pairs (`None` = unbounded).
    pub fn check(
        &self,
        phi: &OrderingConstraint,
        k: Option<usize>,
    ) -> Result<CheckResult, CheckError> {
        self.check_with_stats(phi, k).map(|(r, _)| r)
    }

    pub fn check_with_stats(
        &self,
        phi: &OrderingConstraint,
        k: Option<usize>,
    ) -> Result<(CheckResult, SearchStats), CheckError> {
        self.check_detailed(phi, k, Evidence::Exact)
    }

    pub fn check_detailed(
        &self,
        phi: &OrderingConstraint,
        k: Option<usize>,
        evidence: Evidence,
    ) -> Result<(CheckResult, SearchStats), CheckError> {
        let clauses = phi
            .clauses()
            .iter()
            .map(|c| self.pair_bits(c))
            .collect::<Result<Vec<_>, _>>()?;
        // A bound no execution can exceed never prunes.
        let k = k.filter(|&k| k < self.universe.len());
        let mut search = explore::Search::new(self, clauses.clone(), k, false);
        let found = search.run()?;
        let mut stats = search.stats();
        let result = match found {
            Some(t) if t.reordered.is_empty() => CheckResult::Unrepairable(t),
            Some(t) => CheckResult::Unsafe(t),
            None => {
                // Safe under the bound; ask whether the bound was the reason.
                let bound_limited = search.bound_pruned()
                    && (evidence == Evidence::Cut || {
                        let mut unbounded = explore::Search::new(self, clauses, None, false);
                        let witness = unbounded.run()?;
                        let s = unbounded.stats();
                        stats.nodes += s.nodes;
                        stats.memo_entries += s.memo_entries;
                        witness.is_some()
                    });
                CheckResult::Safe(SafetyEvidence { bound_limited })
            }
        };
        Ok((result, stats))
    }

    /// Every fully drained terminal state reachable with no constraint and
    /// no bound. Executions that fail a thread assertion or block on an
    /// assumption contribute nothing.
    pub fn final_states(&self) -> Result<BTreeSet<FinalState>, CheckError> {
        let mut search = explore::Search::new(self, Vec::new(), None, true);
        search.run()?;
        Ok(search.into_finals())
    }
}

/// One-shot form of [`Checker::check`].
pub fn check(
    u: &UnrolledProgram,
    arch: Arch,
    phi: &OrderingConstraint,
    k: Option<usize>,
) -> Result<CheckResult, CheckError> {
    Checker::new(u, arch).check(phi, k)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("event {seq} names unknown instruction {iid}")]
    UnknownInstruction { seq: usize, iid: usize },
    #[error("event {seq} claims thread {tid} but instruction {iid} belongs to thread {owner}")]
    WrongThread {
        seq: usize,
        tid: usize,
        iid: usize,
        owner: usize,
    },
}

/// Statement pairs reordered in an event sequence: some event of a
/// po-earlier instruction appears after an event of a po-later instruction
/// of the same thread. Same-variable inversions come only from store-to-load
/// forwarding, which returns program-order values, and are not counted.
pub fn get_reordered_pairs(events: &[Event], u: &UnrolledProgram) -> Result<PairSet, TraceError> {
    let mut ins = Vec::with_capacity(events.len());
    for (seq, e) in events.iter().enumerate() {
        let i = u
            .instruction(e.iid)
            .ok_or(TraceError::UnknownInstruction { seq, iid: e.iid })?;
        if i.tid != e.tid {
            return Err(TraceError::WrongThread {
                seq,
                tid: e.tid,
                iid: e.iid,
                owner: i.tid,
            });
        }
        ins.push(i);
    }
    let mut out = PairSet::new();
    for i in 0..events.len() {
        for j in 0..i {
            let (later, earlier) = (ins[i], ins[j]);
            if later.tid == earlier.tid
                && later.po_index < earlier.po_index
                && events[i].var != events[j].var
            {
                out.insert(StatementPair::new(later.sid, earlier.sid));
            }
        }
    }
    Ok(out)
}

/// Index pairs by their `t1.1~t1.2` rendering.
pub fn pair_names(u: &UnrolledProgram, pairs: &[StatementPair]) -> HashMap<String, StatementPair> {
    pairs.iter().map(|p| (p.display(&u.program), *p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse, unroll};

    const SB: &str = "shared x = 0; shared y = 0;
        thread t1 { store x = 1; load r1 = y; }
        thread t2 { store y = 1; load r2 = x; }
        final { assert(t1.r1 == 1 || t2.r2 == 1); }";

    const MP: &str = "shared x = 0; shared y = 0;
        thread t1 { store x = 1; store y = 1; }
        thread t2 { load r1 = y; load r2 = x; }
        final { assert(t2.r1 != 1 || t2.r2 == 1); }";

    fn sp(tid: usize, a: usize, b: usize) -> StatementPair {
        StatementPair::new(StmtId { tid, ordinal: a }, StmtId { tid, ordinal: b })
    }

    fn load(src: &str) -> UnrolledProgram {
        unroll(&parse(src).unwrap(), 1)
    }

    #[test]
    fn sb_unsafe_under_tso_with_one_reordering() {
        let u = load(SB);
        assert!(!check(&u, Arch::Tso, &OrderingConstraint::new(), None)
            .unwrap()
            .is_safe());
        let r = check(&u, Arch::Tso, &OrderingConstraint::new(), Some(1)).unwrap();
        let t = match r {
            CheckResult::Unsafe(t) => t,
            other => panic!("{other:?}"),
        };
        assert_eq!(t.violated, Violation::Final);
        assert_eq!(t.reordered.len(), 1);
        assert_eq!(get_reordered_pairs(&t.events, &u).unwrap(), t.reordered);
    }

    #[test]
    fn sb_safe_with_both_bans_and_under_sc() {
        let u = load(SB);
        let phi = OrderingConstraint::bans(&[sp(0, 1, 2), sp(1, 1, 2)]);
        assert_eq!(
            check(&u, Arch::Tso, &phi, None).unwrap(),
            CheckResult::Safe(SafetyEvidence {
                bound_limited: false
            })
        );
        assert_eq!(
            check(&u, Arch::Sc, &OrderingConstraint::new(), Some(0)).unwrap(),
            CheckResult::Safe(SafetyEvidence {
                bound_limited: false
            })
        );
    }

    #[test]
    fn zero_bound_is_bound_limited_on_sb() {
        let u = load(SB);
        assert_eq!(
            check(&u, Arch::Tso, &OrderingConstraint::new(), Some(0)).unwrap(),
            CheckResult::Safe(SafetyEvidence {
                bound_limited: true
            })
        );
    }

    #[test]
    fn one_ban_leaves_the_other_culprit() {
        let u = load(SB);
        let phi = OrderingConstraint::bans(&[sp(0, 1, 2)]);
        let t = check(&u, Arch::Tso, &phi, None)
            .unwrap()
            .trace()
            .cloned()
            .unwrap();
        assert_eq!(t.reordered, [sp(1, 1, 2)].into_iter().collect());
    }

    #[test]
    fn mp_needs_write_write_reordering() {
        let u = load(MP);
        let r = check(&u, Arch::Pso, &OrderingConstraint::new(), Some(1)).unwrap();
        assert_eq!(
            r.trace().unwrap().reordered,
            [sp(0, 1, 2)].into_iter().collect()
        );
        assert!(check(&u, Arch::Tso, &OrderingConstraint::new(), None)
            .unwrap()
            .is_safe());
    }

    #[test]
    fn sequential_failure_is_unrepairable() {
        let u = load("shared x = 0; thread t { load a = x; assert(a == 1); }");
        let r = check(&u, Arch::Tso, &OrderingConstraint::new(), None).unwrap();
        match r {
            CheckResult::Unrepairable(t) => assert_eq!(
                t.violated,
                Violation::Assertion {
                    sid: StmtId { tid: 0, ordinal: 2 }
                }
            ),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn forwarding_reads_own_store() {
        let u = load("shared x = 0; thread t { store x = 5; load a = x; assert(a == 5); }");
        assert!(check(&u, Arch::Pso, &OrderingConstraint::new(), None)
            .unwrap()
            .is_safe());
    }

    #[test]
    fn fences_restore_order() {
        let src = "shared x = 0; shared y = 0;
            thread t1 { store x = 1; fence; load r1 = y; }
            thread t2 { store y = 1; fence; load r2 = x; }
            final { assert(t1.r1 == 1 || t2.r2 == 1); }";
        let u = load(src);
        assert_eq!(
            check(&u, Arch::Tso, &OrderingConstraint::new(), Some(0)).unwrap(),
            CheckResult::Safe(SafetyEvidence {
                bound_limited: false
            })
        );
    }

    #[test]
    fn node_budget_is_an_error() {
        let u = load(SB);
        let c = Checker::new(&u, Arch::Tso).with_limits(Limits {
            max_nodes: 3,
            deadline: None,
        });
        let phi = OrderingConstraint::bans(&[sp(0, 1, 2), sp(1, 1, 2)]);
        assert_eq!(c.check(&phi, None), Err(CheckError::NodeBudget(3)));
    }

    #[test]
    fn ineligible_pair_rejected() {
        let u = load(MP);
        let phi = OrderingConstraint::bans(&[sp(0, 1, 2)]);
        assert!(matches!(
            check(&u, Arch::Tso, &phi, None),
            Err(CheckError::IneligiblePair(_))
        ));
    }

    #[test]
    fn reordered_pairs_from_event_order() {
        let u = load(SB);
        // reads of both threads, then both writes
        let ev = |seq, tid, iid, var, kind| Event {
            seq,
            tid,
            iid,
            var,
            kind,
        };
        let events = [
            ev(0, 0, 1, 1, AccessType::Read),
            ev(1, 1, 3, 0, AccessType::Read),
            ev(2, 0, 0, 0, AccessType::Write),
            ev(3, 1, 2, 1, AccessType::Write),
        ];
        let got = get_reordered_pairs(&events, &u).unwrap();
        assert_eq!(got, [sp(0, 1, 2), sp(1, 1, 2)].into_iter().collect());
        let in_order = [events[2], events[0], events[3], events[1]];
        assert!(get_reordered_pairs(&in_order, &u).unwrap().is_empty());
        let bad = [ev(0, 0, 99, 0, AccessType::Read)];
        assert!(matches!(
            get_reordered_pairs(&bad, &u),
            Err(TraceError::UnknownInstruction { .. })
        ));
    }

    #[test]
    fn three_way_inversion() {
        let u = load("shared x = 0; shared y = 0; shared z = 0; thread t { store x = 1; store y = 1; load a = z; }");
        let ev = |seq, iid, var, kind| Event {
            seq,
            tid: 0,
            iid,
            var,
            kind,
        };
        let events = [
            ev(0, 2, 2, AccessType::Read),
            ev(1, 0, 0, AccessType::Write),
            ev(2, 1, 1, AccessType::Write),
        ];
        assert_eq!(
            get_reordered_pairs(&events, &u).unwrap(),
            [sp(0, 1, 3), sp(0, 2, 3)].into_iter().collect()
        );
    }

    #[test]
    fn final_states_of_sb() {
        let u = load(SB);
        let finals = Checker::new(&u, Arch::Tso).final_states().unwrap();
        let outcomes: BTreeSet<_> = finals
            .iter()
            .map(|f| {
                assert_eq!(f.memory, vec![1, 1]);
                (f.locals[0][0], f.locals[1][0])
            })
            .collect();
        // (0, 0) is the store-buffering outcome
        assert_eq!(
            outcomes,
            [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().collect()
        );
    }
}
