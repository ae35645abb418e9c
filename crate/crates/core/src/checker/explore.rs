//! Depth-first exploration of the store-buffer machine.
//!
//! Successors are generated in a fixed order: instruction steps by
//! ascending thread index, then buffer flushes oldest store first. Visited
//! states are memoised together with the reordered set they were reached
//! with; a revisit whose reordered set is a superset of a recorded one is
//! skipped, since pruning only gets stricter as the set grows. With no bound
//! only the pairs mentioned by the constraint can influence pruning, so the
//! set is projected onto them first.

use std::collections::BTreeSet;
use std::time::Instant;

use fixedbitset::FixedBitSet;
use rustc_hash::FxHashMap;

use super::{CheckError, Checker, Event, FinalState, SearchStats, Trace, Violation};
use crate::ir::{AccessType, Op, StmtId, Value};
use crate::memmodel::Arch;

#[derive(Clone, Copy, Debug)]
struct Pending {
    var: usize,
    value: Value,
    iid: usize,
    /// Global issue order; not part of the machine state proper.
    stamp: u64,
}

#[derive(Clone, Debug)]
struct Machine {
    pcs: Vec<usize>,
    locals: Vec<Vec<Value>>,
    memory: Vec<Value>,
    /// Per thread, pending stores in issue order. TSO drains from the
    /// front; PSO drains the oldest entry of any one variable.
    buffers: Vec<Vec<Pending>>,
    reordered: FixedBitSet,
    next_stamp: u64,
}

pub(super) struct Search<'c, 'u> {
    c: &'c Checker<'u>,
    clauses: Vec<FixedBitSet>,
    k: Option<usize>,
    finals: Option<BTreeSet<FinalState>>,
    /// Per machine state, the visits made: (pairs that still matter,
    /// count of the others).
    memo: FxHashMap<Vec<u8>, Vec<(FixedBitSet, usize)>>,
    path: Vec<Event>,
    nodes: u64,
    bound_pruned: bool,
    /// Per thread and pc: variables read (`.0`) and written (`.1`) by the
    /// instructions from that pc on.
    ahead: Vec<Vec<(FixedBitSet, FixedBitSet)>>,
    /// Per instruction: its statement is in no pair that can affect pruning.
    quiet: Vec<bool>,
    /// Per thread and pc: pairs whose second statement can still execute.
    future: Vec<Vec<FixedBitSet>>,
    /// Per instruction: pairs with its statement second.
    ending: Vec<FixedBitSet>,
}

fn put_uint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn put_int(out: &mut Vec<u8>, v: i64) {
    put_uint(out, ((v << 1) ^ (v >> 63)) as u64);
}

impl<'c, 'u> Search<'c, 'u> {
    pub(super) fn new(
        c: &'c Checker<'u>,
        clauses: Vec<FixedBitSet>,
        k: Option<usize>,
        collect_finals: bool,
    ) -> Self {
        let mut relevant = FixedBitSet::with_capacity(c.universe.len());
        for cl in &clauses {
            relevant.union_with(cl);
        }
        let u = c.u;
        let nvars = u.num_globals();
        let ahead = (0..u.threads.len())
            .map(|t| {
                let mut acc = (
                    FixedBitSet::with_capacity(nvars),
                    FixedBitSet::with_capacity(nvars),
                );
                let mut rows = vec![acc.clone()];
                for pc in (0..u.thread_len(t)).rev() {
                    match u.at(t, pc).access() {
                        Some((v, AccessType::Read)) => acc.0.insert(v),
                        Some((v, AccessType::Write)) => acc.1.insert(v),
                        None => {}
                    }
                    rows.push(acc.clone());
                }
                rows.reverse();
                rows
            })
            .collect();
        // Unbounded, only constraint pairs can prune; bounded, every pair counts.
        let pruning: Vec<usize> = if k.is_some() {
            (0..c.universe.len()).collect()
        } else {
            relevant.ones().collect()
        };
        let mut loud = BTreeSet::new();
        for i in pruning {
            loud.insert(c.universe[i].first);
            loud.insert(c.universe[i].second);
        }
        let quiet = u
            .instructions
            .iter()
            .map(|ins| !loud.contains(&ins.sid))
            .collect();
        let npairs = c.universe.len();
        let ending: Vec<FixedBitSet> = u
            .instructions
            .iter()
            .map(|ins| {
                let mut b = FixedBitSet::with_capacity(npairs);
                b.extend((0..npairs).filter(|&i| c.universe[i].second == ins.sid));
                b
            })
            .collect();
        let future = (0..u.threads.len())
            .map(|t| {
                let mut acc = FixedBitSet::with_capacity(npairs);
                let mut rows = vec![acc.clone()];
                for pc in (0..u.thread_len(t)).rev() {
                    acc.union_with(&ending[u.at(t, pc).iid]);
                    rows.push(acc.clone());
                }
                rows.reverse();
                rows
            })
            .collect();
        Search {
            future,
            ending,
            c,
            ahead,
            quiet,
            clauses,
            k,
            finals: collect_finals.then(BTreeSet::new),
            memo: FxHashMap::default(),
            path: Vec::new(),
            nodes: 0,
            bound_pruned: false,
        }
    }

    pub(super) fn bound_pruned(&self) -> bool {
        self.bound_pruned
    }

    pub(super) fn stats(&self) -> SearchStats {
        SearchStats {
            nodes: self.nodes,
            memo_entries: self.memo.len(),
        }
    }

    pub(super) fn into_finals(self) -> BTreeSet<FinalState> {
        self.finals.unwrap_or_default()
    }

    pub(super) fn run(&mut self) -> Result<Option<Trace>, CheckError> {
        let u = self.c.u;
        let m = Machine {
            pcs: vec![0; u.threads.len()],
            locals: u.locals.iter().map(|l| vec![0; l.len()]).collect(),
            memory: u.initial_memory(),
            buffers: vec![Vec::new(); u.threads.len()],
            reordered: FixedBitSet::with_capacity(self.c.universe.len()),
            next_stamp: 0,
        };
        self.visit(&m)
    }

    fn key(&self, m: &Machine) -> Vec<u8> {
        let mut out = Vec::with_capacity(64);
        for (t, pc) in m.pcs.iter().enumerate() {
            put_uint(&mut out, *pc as u64);
            for &v in &m.locals[t] {
                put_int(&mut out, v);
            }
            put_uint(&mut out, m.buffers[t].len() as u64);
            for p in &m.buffers[t] {
                put_uint(&mut out, p.iid as u64);
                put_int(&mut out, p.value);
            }
        }
        for &v in &m.memory {
            put_int(&mut out, v);
        }
        out
    }

    /// Records `m`; false if a visit at least as permissive was already made.
    ///
    /// A recorded visit keeps the part `P` of its reordered set that still
    /// matters: pairs of clauses that can yet be completed, plus (with a
    /// bound) pairs that can still occur. The rest only counts against the
    /// bound. It covers a new visit with set `R` if `P ⊆ R` and `R` has at
    /// least as many pairs outside `P` and the live pairs.
    fn first_visit(&mut self, m: &Machine) -> bool {
        let r = &m.reordered;
        let mut live = FixedBitSet::with_capacity(self.c.universe.len());
        for (t, &pc) in m.pcs.iter().enumerate() {
            live.union_with(&self.future[t][pc]);
            for p in &m.buffers[t] {
                live.union_with(&self.ending[p.iid]);
            }
        }
        let mut reach = live.clone();
        reach.union_with(r);
        let mut keep = FixedBitSet::with_capacity(self.c.universe.len());
        for c in &self.clauses {
            if c.is_subset(&reach) {
                keep.union_with(c);
            }
        }
        let bounded = self.k.is_some();
        if bounded {
            keep.union_with(&live);
        }
        keep.intersect_with(r);
        let spare = |p: &FixedBitSet| {
            if bounded {
                r.difference(p).filter(|&i| !live.contains(i)).count()
            } else {
                0
            }
        };
        let dead = spare(&keep);
        let entry = self.memo.entry(self.key(m)).or_default();
        if entry
            .iter()
            .any(|(prev, d)| prev.is_subset(r) && *d <= spare(prev))
        {
            return false;
        }
        entry.retain(|(prev, d)| !(keep.is_subset(prev) && dead <= *d));
        entry.push((keep, dead));
        true
    }

    /// Whether a successor with reordered set `r` may be explored.
    fn admit(&mut self, r: &FixedBitSet) -> bool {
        if self.clauses.iter().any(|c| c.is_subset(r)) {
            return false;
        }
        if let Some(k) = self.k {
            if r.count_ones(..) > k {
                self.bound_pruned = true;
                return false;
            }
        }
        true
    }

    /// The path so far, then the stores still buffered, drained oldest
    /// first: they reach memory after the violation, if at all.
    fn trace(&self, m: &Machine, violated: Violation) -> Trace {
        let mut events = self.path.clone();
        let mut pending: Vec<(u64, usize, &Pending)> = m
            .buffers
            .iter()
            .enumerate()
            .flat_map(|(tid, b)| b.iter().map(move |p| (p.stamp, tid, p)))
            .collect();
        pending.sort_by_key(|&(stamp, _, _)| stamp);
        for (_, tid, p) in pending {
            events.push(Event {
                seq: events.len(),
                tid,
                iid: p.iid,
                var: p.var,
                kind: AccessType::Write,
            });
        }
        Trace {
            events,
            reordered: self.c.bits_to_pairs(&m.reordered),
            violated,
        }
    }

    fn tick(&mut self) -> Result<(), CheckError> {
        self.nodes += 1;
        if self.nodes > self.c.limits.max_nodes {
            return Err(CheckError::NodeBudget(self.c.limits.max_nodes));
        }
        if self.nodes.is_multiple_of(1024) {
            if let Some(d) = self.c.limits.deadline {
                if Instant::now() >= d {
                    return Err(CheckError::Timeout);
                }
            }
        }
        Ok(())
    }

    fn event(&mut self, tid: usize, iid: usize, var: usize, kind: AccessType) {
        let seq = self.path.len();
        self.path.push(Event {
            seq,
            tid,
            iid,
            var,
            kind,
        });
    }

    /// Explore `child`, with `event` appended to the path for its duration.
    fn descend(
        &mut self,
        child: &Machine,
        event: Option<Event>,
    ) -> Result<Option<Trace>, CheckError> {
        if let Some(e) = event {
            self.event(e.tid, e.iid, e.var, e.kind);
        }
        let r = self.visit(child);
        if event.is_some() {
            self.path.pop();
        }
        r
    }

    /// No thread but `tid` can still write `var`.
    fn sole_writer(&self, m: &Machine, tid: usize, var: usize) -> bool {
        (0..m.pcs.len()).all(|t| {
            t == tid
                || (!self.ahead[t][m.pcs[t]].1.contains(var)
                    && m.buffers[t].iter().all(|p| p.var != var))
        })
    }

    /// No thread but `tid` can still read or write `var`.
    fn sole_accessor(&self, m: &Machine, tid: usize, var: usize) -> bool {
        self.sole_writer(m, tid, var)
            && (0..m.pcs.len()).all(|t| t == tid || !self.ahead[t][m.pcs[t]].0.contains(var))
    }

    /// Executes the next instruction of `tid`.
    fn step(&mut self, m: &Machine, tid: usize) -> Result<Step, CheckError> {
        let c = self.c;
        let u = c.u;
        let pc = m.pcs[tid];
        let ins = u.at(tid, pc);
        let locals = &m.locals[tid];
        let mut child = m.clone();
        let mut event = None;
        match &ins.op {
            Op::Load { local, var } => {
                let buffer = &m.buffers[tid];
                let value = buffer
                    .iter()
                    .rev()
                    .find(|p| p.var == *var)
                    .map_or(m.memory[*var], |p| p.value);
                let mut grew = false;
                for p in buffer.iter().filter(|p| p.var != *var) {
                    grew |= !child
                        .reordered
                        .put(c.slot(u.instructions[p.iid].sid, ins.sid));
                }
                if grew && !self.admit(&child.reordered) {
                    return Ok(Step::Pruned);
                }
                child.locals[tid][*local] = value;
                child.pcs[tid] += 1;
                event = Some(Event {
                    seq: 0,
                    tid,
                    iid: ins.iid,
                    var: *var,
                    kind: AccessType::Read,
                });
            }
            Op::Store { var, value } => {
                let v = value.eval_local(locals)?;
                child.pcs[tid] += 1;
                if c.arch == Arch::Sc {
                    child.memory[*var] = v;
                    event = Some(Event {
                        seq: 0,
                        tid,
                        iid: ins.iid,
                        var: *var,
                        kind: AccessType::Write,
                    });
                } else {
                    child.buffers[tid].push(Pending {
                        var: *var,
                        value: v,
                        iid: ins.iid,
                        stamp: child.next_stamp,
                    });
                    child.next_stamp += 1;
                }
            }
            Op::Assign { local, value } => {
                child.locals[tid][*local] = value.eval_local(locals)?;
                child.pcs[tid] += 1;
            }
            Op::Fence => {
                if !m.buffers[tid].is_empty() {
                    return Ok(Step::Blocked);
                }
                child.pcs[tid] += 1;
            }
            Op::Assert(cond) => {
                if cond.eval_local(locals)? == 0 {
                    return Ok(if self.finals.is_some() {
                        Step::Blocked
                    } else {
                        Step::Violation(ins.sid)
                    });
                }
                child.pcs[tid] += 1;
            }
            Op::Assume(cond) => {
                if cond.eval_local(locals)? == 0 {
                    return Ok(Step::Blocked);
                }
                child.pcs[tid] += 1;
            }
            Op::BranchUnless { cond, target } => {
                child.pcs[tid] = if cond.eval_local(locals)? != 0 {
                    pc + 1
                } else {
                    *target
                };
            }
            Op::Jump { target } => child.pcs[tid] = *target,
        }
        Ok(Step::Next(child, event))
    }

    /// Drains entry `i` of `tid`'s buffer; `None` if the result is pruned.
    fn flush(&mut self, m: &Machine, tid: usize, i: usize) -> Option<(Machine, Event)> {
        let c = self.c;
        let u = c.u;
        let mut child = m.clone();
        let p = child.buffers[tid].remove(i);
        let sid = u.instructions[p.iid].sid;
        let mut grew = false;
        // older stores of other variables overtaken by this one
        for q in &m.buffers[tid][..i] {
            grew |= !child.reordered.put(c.slot(u.instructions[q.iid].sid, sid));
        }
        if grew && !self.admit(&child.reordered) {
            return None;
        }
        child.memory[p.var] = p.value;
        Some((
            child,
            Event {
                seq: 0,
                tid,
                iid: p.iid,
                var: p.var,
                kind: AccessType::Write,
            },
        ))
    }

    /// Stores that may drain next, as `(stamp, thread, buffer index)`.
    fn flushable(&self, m: &Machine) -> Vec<(u64, usize, usize)> {
        let mut out = Vec::new();
        for (tid, buffer) in m.buffers.iter().enumerate() {
            match self.c.arch {
                Arch::Sc => {}
                Arch::Tso => {
                    if let Some(p) = buffer.first() {
                        out.push((p.stamp, tid, 0));
                    }
                }
                Arch::Pso => {
                    for (i, p) in buffer.iter().enumerate() {
                        if !buffer[..i].iter().any(|q| q.var == p.var) {
                            out.push((p.stamp, tid, i));
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// A thread whose next instruction commutes with every step of every
    /// other thread and with its own pending flushes, so exploring it alone
    /// loses no terminal state and no reachable violation.
    fn invisible_thread(&self, m: &Machine) -> Result<Option<usize>, CheckError> {
        let u = self.c.u;
        for tid in 0..u.threads.len() {
            let pc = m.pcs[tid];
            if pc >= u.thread_len(tid) {
                continue;
            }
            let ins = u.at(tid, pc);
            let locals = &m.locals[tid];
            let eager = match &ins.op {
                Op::Assign { .. } | Op::BranchUnless { .. } | Op::Jump { .. } => true,
                Op::Fence => m.buffers[tid].is_empty(),
                Op::Assume(cond) => cond.eval_local(locals)? != 0,
                Op::Assert(cond) => self.finals.is_none() || cond.eval_local(locals)? != 0,
                // Issuing into the buffer is invisible; under SC the write itself happens.
                Op::Store { var, .. } => {
                    self.c.arch != Arch::Sc || self.sole_accessor(m, tid, *var)
                }
                Op::Load { var, .. } => self.quiet[ins.iid] && self.sole_writer(m, tid, *var),
            };
            if eager {
                return Ok(Some(tid));
            }
        }
        Ok(None)
    }

    fn visit(&mut self, m: &Machine) -> Result<Option<Trace>, CheckError> {
        self.tick()?;
        if !self.first_visit(m) {
            return Ok(None);
        }
        let u = self.c.u;
        let nthreads = u.threads.len();

        let finished = (0..nthreads).all(|t| m.pcs[t] == u.thread_len(t));
        if finished && m.buffers.iter().all(Vec::is_empty) {
            if let Some(finals) = &mut self.finals {
                finals.insert(FinalState {
                    memory: m.memory.clone(),
                    locals: m.locals.clone(),
                });
                return Ok(None);
            }
            if let Some(fa) = &u.final_assert {
                if fa.eval(&[], &m.memory, &|t, l| m.locals[t][l])? == 0 {
                    return Ok(Some(self.trace(m, Violation::Final)));
                }
            }
            return Ok(None);
        }

        let eager = self.invisible_thread(m)?;
        let threads = match eager {
            Some(t) => t..t + 1,
            None => 0..nthreads,
        };
        for tid in threads {
            if m.pcs[tid] >= u.thread_len(tid) {
                continue;
            }
            match self.step(m, tid)? {
                Step::Blocked | Step::Pruned => {}
                Step::Violation(sid) => {
                    return Ok(Some(self.trace(m, Violation::Assertion { sid })))
                }
                Step::Next(child, event) => {
                    if let Some(t) = self.descend(&child, event)? {
                        return Ok(Some(t));
                    }
                }
            }
        }
        if eager.is_some() {
            return Ok(None);
        }

        let flushable = self.flushable(m);
        // A store nobody else will touch, in no relevant pair, can drain right away.
        let quiet = flushable.iter().find(|&&(_, tid, i)| {
            let p = &m.buffers[tid][i];
            self.quiet[p.iid] && self.sole_accessor(m, tid, p.var)
        });
        let chosen: Vec<(u64, usize, usize)> = match quiet {
            Some(&f) => vec![f],
            None => flushable,
        };
        for (_, tid, i) in chosen {
            if let Some((child, e)) = self.flush(m, tid, i) {
                if let Some(t) = self.descend(&child, Some(e))? {
                    return Ok(Some(t));
                }
            }
        }
        Ok(None)
    }
}

enum Step {
    Blocked,
    Pruned,
    Violation(StmtId),
    Next(Machine, Option<Event>),
}
