//! Counterexample-guided fence insertion.
//!
//! Four drivers share one loop shape: ask the checker for a violation
//! admitted by the current ordering constraint, harvest the reordered pairs
//! of the counterexample, strengthen the constraint, repeat until Safe.
//!
//! - TE adds each counterexample's pairs as a disjunctive clause and only
//!   picks the pairs to ban at the end.
//! - FI keeps the counterexample pair sets as a hitting-set instance and bans
//!   a hitting set after every counterexample.
//! - ROBMC runs FI's loop with a reorder bound that grows from K1 to K2.
//! - ROBMC-Et stops raising the bound once a Safe answer did not depend on it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::checker::{
    get_reordered_pairs, CheckError, CheckResult, Checker, Limits, OrderingConstraint, Trace,
    TraceError,
};
use crate::hitset::{
    compute_minimal_solution, minimal_hitting_set, minimum_hitting_set_until, Collection, MhsMode,
};
use crate::ir::{unroll, Program, Statement, StmtId, StmtKind, UnrolledProgram};
use crate::memmodel::{Arch, PairSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Te,
    Fi,
    Robmc,
    RobmcEt,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Te,
        Algorithm::Fi,
        Algorithm::Robmc,
        Algorithm::RobmcEt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Te => "te",
            Algorithm::Fi => "fi",
            Algorithm::Robmc => "robmc",
            Algorithm::RobmcEt => "robmc-et",
        }
    }

    pub fn is_bounded(self) -> bool {
        matches!(self, Algorithm::Robmc | Algorithm::RobmcEt)
    }

    /// TE minimises over its clauses; the others take a minimum hitting set.
    pub fn default_mhs(self) -> MhsMode {
        match self {
            Algorithm::Te => MhsMode::Minimal,
            _ => MhsMode::Minimum,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "te" => Ok(Algorithm::Te),
            "fi" => Ok(Algorithm::Fi),
            "robmc" => Ok(Algorithm::Robmc),
            "robmc-et" => Ok(Algorithm::RobmcEt),
            other => Err(format!(
                "unknown algorithm `{other}` (expected te, fi, robmc or robmc-et)"
            )),
        }
    }
}

/// How the reorder bound grows between rounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum IncreaseStrategy {
    #[default]
    Double,
    Additive(usize),
    /// `k * factor` once the last `threshold` queries were all Safe,
    /// otherwise `k + 1`.
    Adaptive {
        threshold: usize,
        factor: usize,
    },
}

impl IncreaseStrategy {
    pub const ADAPTIVE: IncreaseStrategy = IncreaseStrategy::Adaptive {
        threshold: 2,
        factor: 4,
    };

    /// `safe_streak` counts consecutive Safe answers up to now.
    pub fn next(self, k: usize, safe_streak: usize) -> usize {
        match self {
            IncreaseStrategy::Double => k.saturating_mul(2),
            IncreaseStrategy::Additive(d) => k.saturating_add(d.max(1)),
            IncreaseStrategy::Adaptive { threshold, factor } => {
                if safe_streak >= threshold {
                    k.saturating_mul(factor.max(2))
                } else {
                    k + 1
                }
            }
        }
    }
}

/// Upper reorder bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum UpperBound {
    /// The number of eligible pairs, which can never prune.
    #[default]
    Auto,
    Fixed(usize),
}

impl FromStr for UpperBound {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(UpperBound::Auto);
        }
        s.parse::<usize>()
            .ok()
            .filter(|&k| k > 0)
            .map(UpperBound::Fixed)
            .ok_or_else(|| format!("invalid bound `{s}` (expected a positive integer or auto)"))
    }
}

impl fmt::Display for UpperBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UpperBound::Auto => f.write_str("auto"),
            UpperBound::Fixed(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RepairConfig {
    pub algo: Algorithm,
    pub arch: Arch,
    pub unwind: usize,
    pub k1: usize,
    pub k2: UpperBound,
    pub mhs: MhsMode,
    pub increase: IncreaseStrategy,
    /// Checker queries allowed before giving up.
    pub max_queries: usize,
    pub limits: Limits,
}

impl RepairConfig {
    pub fn new(algo: Algorithm, arch: Arch) -> Self {
        RepairConfig {
            algo,
            arch,
            unwind: 2,
            k1: 1,
            k2: UpperBound::Auto,
            mhs: algo.default_mhs(),
            increase: IncreaseStrategy::Double,
            max_queries: 10_000,
            limits: Limits::default(),
        }
    }

    pub fn with_mhs(mut self, mhs: MhsMode) -> Self {
        self.mhs = mhs;
        self
    }

    pub fn with_k1(mut self, k1: usize) -> Self {
        self.k1 = k1;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RepairStatus {
    Repaired,
    /// No counterexample was ever found; nothing to ban.
    AlreadySafe,
    /// A violation needs no reordering at all; fences cannot help.
    Unrepairable,
}

impl RepairStatus {
    pub fn name(self) -> &'static str {
        match self {
            RepairStatus::Repaired => "repaired",
            RepairStatus::AlreadySafe => "already_safe",
            RepairStatus::Unrepairable => "unrepairable",
        }
    }
}

impl fmt::Display for RepairStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RepairStats {
    pub queries: usize,
    pub counterexamples: usize,
    /// Queries issued at each reorder bound (bounded algorithms only).
    pub queries_per_bound: BTreeMap<usize, usize>,
    pub wall_time: Duration,
    /// Largest reordered-pair count over all counterexamples.
    pub max_cex_reorderings: usize,
    pub early_terminated: bool,
    /// Checker states expanded over all queries.
    pub nodes: u64,
}

#[derive(Clone, Debug)]
pub struct RepairResult {
    pub solution: PairSet,
    pub status: RepairStatus,
    pub stats: RepairStats,
    /// Every counterexample, in the order found.
    pub traces: Vec<Trace>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RepairError {
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("gave up after {0} checker queries")]
    QueryCap(usize),
    #[error("lower bound {k1} exceeds upper bound {k2}")]
    Bounds { k1: usize, k2: usize },
    #[error("lower bound must be positive")]
    ZeroLowerBound,
}

impl RepairError {
    pub fn is_resource(&self) -> bool {
        matches!(
            self,
            RepairError::Check(CheckError::NodeBudget(_) | CheckError::Timeout)
                | RepairError::QueryCap(_)
        )
    }
}

struct Session<'c, 'u> {
    checker: &'c Checker<'u>,
    cfg: &'c RepairConfig,
    stats: RepairStats,
    traces: Vec<Trace>,
    safe_streak: usize,
    /// A constraint already shown Safe at every bound.
    settled: Option<OrderingConstraint>,
}

enum Answer {
    Safe {
        bound_limited: bool,
    },
    /// Reordered pairs recomputed from the counterexample's events.
    Cex(PairSet),
    Unrepairable,
}

impl<'c, 'u> Session<'c, 'u> {
    fn new(checker: &'c Checker<'u>, cfg: &'c RepairConfig) -> Self {
        Session {
            checker,
            cfg,
            stats: RepairStats::default(),
            traces: Vec::new(),
            safe_streak: 0,
            settled: None,
        }
    }

    fn query(&mut self, phi: &OrderingConstraint, k: Option<usize>) -> Result<Answer, RepairError> {
        if self.stats.queries >= self.cfg.max_queries {
            return Err(RepairError::QueryCap(self.stats.queries));
        }
        self.stats.queries += 1;
        if let Some(k) = k {
            *self.stats.queries_per_bound.entry(k).or_default() += 1;
        }
        if self.settled.as_ref() == Some(phi) {
            // Raising the bound cannot change a bound-independent answer.
            self.safe_streak += 1;
            return Ok(Answer::Safe {
                bound_limited: false,
            });
        }
        let (result, s) = self.checker.check_with_stats(phi, k)?;
        self.stats.nodes += s.nodes;
        match result {
            CheckResult::Safe(ev) => {
                self.safe_streak += 1;
                if !ev.bound_limited {
                    self.settled = Some(phi.clone());
                }
                Ok(Answer::Safe {
                    bound_limited: ev.bound_limited,
                })
            }
            CheckResult::Unsafe(t) | CheckResult::Unrepairable(t) => {
                self.safe_streak = 0;
                let sp = get_reordered_pairs(&t.events, self.checker.program())?;
                self.stats.counterexamples += 1;
                self.stats.max_cex_reorderings = self.stats.max_cex_reorderings.max(sp.len());
                self.traces.push(t);
                Ok(if sp.is_empty() {
                    Answer::Unrepairable
                } else {
                    Answer::Cex(sp)
                })
            }
        }
    }

    fn finish(mut self, solution: PairSet, status: RepairStatus, started: Instant) -> RepairResult {
        self.stats.wall_time = started.elapsed();
        RepairResult {
            solution,
            status,
            stats: self.stats,
            traces: self.traces,
        }
    }

    fn status_for(&self) -> RepairStatus {
        if self.stats.counterexamples == 0 {
            RepairStatus::AlreadySafe
        } else {
            RepairStatus::Repaired
        }
    }
}

/// `prev` solved a sub-collection; in minimum mode its size bounds the new optimum.
fn hitting_set(
    c: &Collection<crate::memmodel::StatementPair>,
    cfg: &RepairConfig,
    prev: &PairSet,
) -> Result<PairSet, RepairError> {
    match cfg.mhs {
        MhsMode::Minimum => minimum_hitting_set_until(c, prev.len(), cfg.limits.deadline)
            .map_err(|_| RepairError::Check(CheckError::Timeout)),
        MhsMode::Minimal => Ok(minimal_hitting_set(c)),
    }
}

/// Trace-enumerating repair: one clause per counterexample, solved once at the end.
pub fn repair_te(u: &UnrolledProgram, cfg: &RepairConfig) -> Result<RepairResult, RepairError> {
    let started = Instant::now();
    let checker = Checker::new(u, cfg.arch).with_limits(cfg.limits);
    let mut s = Session::new(&checker, cfg);
    let mut phi = OrderingConstraint::new();
    loop {
        match s.query(&phi, None)? {
            Answer::Unrepairable => {
                return Ok(s.finish(PairSet::new(), RepairStatus::Unrepairable, started))
            }
            Answer::Cex(sp) => phi.add_clause(sp),
            Answer::Safe { .. } => {
                let status = s.status_for();
                return Ok(s.finish(compute_minimal_solution(&phi, cfg.mhs), status, started));
            }
        }
    }
}

/// Hitting-set repair without a reorder bound.
pub fn repair_fi(u: &UnrolledProgram, cfg: &RepairConfig) -> Result<RepairResult, RepairError> {
    let started = Instant::now();
    let checker = Checker::new(u, cfg.arch).with_limits(cfg.limits);
    let mut s = Session::new(&checker, cfg);
    let mut c = Collection::new();
    let mut solution = PairSet::new();
    loop {
        match s.query(&OrderingConstraint::bans(&solution), None)? {
            Answer::Unrepairable => {
                return Ok(s.finish(PairSet::new(), RepairStatus::Unrepairable, started))
            }
            Answer::Cex(sp) => {
                c.push(sp);
                solution = hitting_set(&c, cfg, &solution)?;
            }
            Answer::Safe { .. } => {
                let status = s.status_for();
                return Ok(s.finish(solution, status, started));
            }
        }
    }
}

fn bounded(
    u: &UnrolledProgram,
    cfg: &RepairConfig,
    early: bool,
) -> Result<RepairResult, RepairError> {
    let started = Instant::now();
    let checker = Checker::new(u, cfg.arch).with_limits(cfg.limits);
    if cfg.k1 == 0 {
        return Err(RepairError::ZeroLowerBound);
    }
    let k2 = match cfg.k2 {
        // At least K1, so a large K1 still gets one round.
        UpperBound::Auto => checker.universe().len().max(cfg.k1),
        UpperBound::Fixed(k2) if k2 < cfg.k1 => return Err(RepairError::Bounds { k1: cfg.k1, k2 }),
        UpperBound::Fixed(k2) => k2,
    };
    let mut s = Session::new(&checker, cfg);
    let mut c = Collection::new();
    let mut solution = PairSet::new();
    let mut k = cfg.k1;
    loop {
        let bound_limited = loop {
            match s.query(&OrderingConstraint::bans(&solution), Some(k))? {
                Answer::Unrepairable => {
                    return Ok(s.finish(PairSet::new(), RepairStatus::Unrepairable, started))
                }
                Answer::Cex(sp) => {
                    c.push(sp);
                    solution = hitting_set(&c, cfg, &solution)?;
                }
                Answer::Safe { bound_limited } => break bound_limited,
            }
        };
        if early && !bound_limited {
            s.stats.early_terminated = k < k2;
            break;
        }
        if k >= k2 {
            break;
        }
        // Never skip past K2: the last round must run at K2 itself.
        k = cfg.increase.next(k, s.safe_streak).min(k2);
    }
    let status = s.status_for();
    Ok(s.finish(solution, status, started))
}

/// Hitting-set repair with a growing reorder bound.
pub fn repair_robmc(u: &UnrolledProgram, cfg: &RepairConfig) -> Result<RepairResult, RepairError> {
    bounded(u, cfg, false)
}

/// As [`repair_robmc`], stopping once a Safe answer was not due to the bound.
pub fn repair_robmc_et(
    u: &UnrolledProgram,
    cfg: &RepairConfig,
) -> Result<RepairResult, RepairError> {
    bounded(u, cfg, true)
}

pub fn repair(u: &UnrolledProgram, cfg: &RepairConfig) -> Result<RepairResult, RepairError> {
    match cfg.algo {
        Algorithm::Te => repair_te(u, cfg),
        Algorithm::Fi => repair_fi(u, cfg),
        Algorithm::Robmc => repair_robmc(u, cfg),
        Algorithm::RobmcEt => repair_robmc_et(u, cfg),
    }
}

/// Unrolls with `cfg.unwind` and repairs.
pub fn repair_program(p: &Program, cfg: &RepairConfig) -> Result<RepairResult, RepairError> {
    repair(&unroll(p, cfg.unwind), cfg)
}

/// Whether banning every pair of `solution` leaves no violation at any bound.
pub fn verify_solution(
    u: &UnrolledProgram,
    arch: Arch,
    solution: &PairSet,
    limits: Limits,
) -> Result<bool, CheckError> {
    let r = Checker::new(u, arch)
        .with_limits(limits)
        .check(&OrderingConstraint::bans(solution), None)?;
    Ok(matches!(r, CheckResult::Safe(ev) if !ev.bound_limited))
}

/// Statements to place a fence after: the first statement of each pair.
pub fn fence_placements(solution: &PairSet) -> Vec<StmtId> {
    let mut out: Vec<StmtId> = solution.iter().map(|p| p.first).collect();
    out.sort();
    out.dedup();
    out
}

/// `p` with a fence after every placement of `solution`, renumbered.
pub fn insert_fences(p: &Program, solution: &PairSet) -> Program {
    fn walk(stmts: &mut Vec<Statement>, at: &[StmtId]) {
        let mut i = 0;
        while i < stmts.len() {
            match &mut stmts[i].kind {
                StmtKind::If {
                    then_branch,
                    else_branch,
                    ..
                } => {
                    walk(then_branch, at);
                    walk(else_branch, at);
                }
                StmtKind::While { body, .. } => walk(body, at),
                _ => {}
            }
            if at.contains(&stmts[i].sid) {
                let sid = stmts[i].sid;
                stmts.insert(
                    i + 1,
                    Statement {
                        sid,
                        kind: StmtKind::Fence,
                    },
                );
                i += 1;
            }
            i += 1;
        }
    }
    let at = fence_placements(solution);
    let mut out = p.clone();
    for t in &mut out.threads {
        walk(&mut t.body, &at);
    }
    out.renumber();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse;
    use crate::memmodel::StatementPair;

    const SB: &str = "shared x = 0; shared y = 0;
        thread t1 { store x = 1; load r1 = y; }
        thread t2 { store y = 1; load r2 = x; }
        final { assert(t1.r1 == 1 || t2.r2 == 1); }";

    fn sp(tid: usize, a: usize, b: usize) -> StatementPair {
        StatementPair::new(StmtId { tid, ordinal: a }, StmtId { tid, ordinal: b })
    }

    #[test]
    fn doubling_and_friends() {
        assert_eq!(IncreaseStrategy::Double.next(1, 0), 2);
        assert_eq!(IncreaseStrategy::Double.next(2, 0), 4);
        assert_eq!(IncreaseStrategy::Double.next(5, 0), 10);
        assert_eq!(IncreaseStrategy::Additive(1).next(3, 0), 4);
        assert_eq!(IncreaseStrategy::ADAPTIVE.next(2, 2), 8);
        assert_eq!(IncreaseStrategy::ADAPTIVE.next(2, 1), 3);
    }

    #[test]
    fn every_algorithm_repairs_sb() {
        let u = unroll(&parse(SB).unwrap(), 1);
        for algo in Algorithm::ALL {
            let r = repair(&u, &RepairConfig::new(algo, Arch::Tso)).unwrap();
            assert_eq!(r.status, RepairStatus::Repaired, "{algo}");
            assert_eq!(
                r.solution,
                [sp(0, 1, 2), sp(1, 1, 2)].into_iter().collect(),
                "{algo}"
            );
            assert!(verify_solution(&u, Arch::Tso, &r.solution, Limits::default()).unwrap());
        }
    }

    #[test]
    fn fenced_program_is_already_safe() {
        let p = parse(SB).unwrap();
        let s: PairSet = [sp(0, 1, 2), sp(1, 1, 2)].into_iter().collect();
        let fenced = insert_fences(&p, &s);
        assert_eq!(fenced.threads[0].body[1].kind, StmtKind::Fence);
        let u = unroll(&fenced, 1);
        for algo in Algorithm::ALL {
            let r = repair(&u, &RepairConfig::new(algo, Arch::Tso)).unwrap();
            assert_eq!(r.status, RepairStatus::AlreadySafe);
            assert!(r.solution.is_empty());
            if !algo.is_bounded() {
                assert_eq!(r.stats.queries, 1);
            }
        }
    }

    #[test]
    fn sequential_bug_is_unrepairable() {
        let u = unroll(
            &parse("shared x = 0; thread t { load a = x; assert(a == 1); }").unwrap(),
            1,
        );
        for algo in Algorithm::ALL {
            let r = repair(&u, &RepairConfig::new(algo, Arch::Tso)).unwrap();
            assert_eq!(r.status, RepairStatus::Unrepairable);
        }
    }

    #[test]
    fn fixed_bounds_validated() {
        let u = unroll(&parse(SB).unwrap(), 1);
        let mut cfg = RepairConfig::new(Algorithm::Robmc, Arch::Tso).with_k1(3);
        cfg.k2 = UpperBound::Fixed(2);
        assert_eq!(
            repair(&u, &cfg).unwrap_err(),
            RepairError::Bounds { k1: 3, k2: 2 }
        );
        cfg.k1 = 0;
        assert_eq!(repair(&u, &cfg).unwrap_err(), RepairError::ZeroLowerBound);
    }

    #[test]
    fn parsing_names() {
        assert_eq!("robmc-et".parse::<Algorithm>().unwrap(), Algorithm::RobmcEt);
        assert_eq!("ROBMC_ET".parse::<Algorithm>().unwrap(), Algorithm::RobmcEt);
        assert_eq!("auto".parse::<UpperBound>().unwrap(), UpperBound::Auto);
        assert_eq!("7".parse::<UpperBound>().unwrap(), UpperBound::Fixed(7));
        assert!("0".parse::<UpperBound>().is_err());
    }
}
