//! Minimum and minimal hitting sets.
//!
//! Elements are ordered by `Ord`; sets compare lexicographically as sorted
//! sequences. The minimum solver returns the least optimum in that order.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use fixedbitset::FixedBitSet;

use crate::checker::OrderingConstraint;
use crate::memmodel::PairSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum MhsMode {
    /// Smallest cardinality; least in lexicographic order among optima.
    #[default]
    Minimum,
    /// Greedy, then pruned until no element can be dropped.
    Minimal,
}

impl MhsMode {
    pub fn name(self) -> &'static str {
        match self {
            MhsMode::Minimum => "minimum",
            MhsMode::Minimal => "minimal",
        }
    }
}

impl fmt::Display for MhsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MhsMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "minimum" => Ok(MhsMode::Minimum),
            "minimal" => Ok(MhsMode::Minimal),
            other => Err(format!(
                "unknown hitting-set mode `{other}` (expected minimum or minimal)"
            )),
        }
    }
}

/// A collection of non-empty sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Collection<T: Ord> {
    sets: Vec<BTreeSet<T>>,
}

impl<T: Ord> Default for Collection<T> {
    fn default() -> Self {
        Collection { sets: Vec::new() }
    }
}

impl<T: Ord + Clone> Collection<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics if `set` is empty: nothing could hit it.
    pub fn push(&mut self, set: BTreeSet<T>) {
        assert!(
            !set.is_empty(),
            "hitting-set collections hold non-empty sets only"
        );
        self.sets.push(set);
    }

    pub fn sets(&self) -> &[BTreeSet<T>] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

impl<T: Ord + Clone> FromIterator<BTreeSet<T>> for Collection<T> {
    fn from_iter<I: IntoIterator<Item = BTreeSet<T>>>(iter: I) -> Self {
        let mut c = Collection::new();
        for s in iter {
            c.push(s);
        }
        c
    }
}

pub fn is_hitting_set<T: Ord>(h: &BTreeSet<T>, c: &Collection<T>) -> bool {
    c.sets.iter().all(|s| !s.is_disjoint(h))
}

/// The collection re-indexed over its sorted element universe.
struct Indexed<T> {
    elems: Vec<T>,
    sets: Vec<FixedBitSet>,
}

impl<T: Ord + Clone> Indexed<T> {
    fn new(c: &Collection<T>) -> Self {
        let elems: Vec<T> = c
            .sets
            .iter()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let sets = c
            .sets
            .iter()
            .map(|s| {
                let mut b = FixedBitSet::with_capacity(elems.len());
                for x in s {
                    b.insert(elems.binary_search(x).unwrap());
                }
                b
            })
            .collect();
        Indexed { elems, sets }
    }

    fn decode(&self, chosen: impl IntoIterator<Item = usize>) -> BTreeSet<T> {
        chosen.into_iter().map(|i| self.elems[i].clone()).collect()
    }
}

fn hits(h: &FixedBitSet, s: &FixedBitSet) -> bool {
    !h.is_disjoint(s)
}

/// Most sets hit first, smallest element on ties, until everything is hit.
fn greedy(sets: &[FixedBitSet], n: usize) -> Vec<usize> {
    let mut unhit: Vec<&FixedBitSet> = sets.iter().collect();
    let mut out = Vec::new();
    while !unhit.is_empty() {
        let mut count = vec![0usize; n];
        for s in &unhit {
            for e in s.ones() {
                count[e] += 1;
            }
        }
        let best = (0..n)
            .max_by_key(|&e| (count[e], std::cmp::Reverse(e)))
            .unwrap();
        out.push(best);
        unhit.retain(|s| !s.contains(best));
    }
    out
}

/// Drops elements, smallest first, while the rest still hits every set.
fn prune(sets: &[FixedBitSet], chosen: &[usize], n: usize) -> FixedBitSet {
    let mut h = FixedBitSet::with_capacity(n);
    h.extend(chosen.iter().copied());
    let mut order = chosen.to_vec();
    order.sort_unstable();
    for e in order {
        h.set(e, false);
        if !sets.iter().all(|s| hits(&h, s)) {
            h.insert(e);
        }
    }
    h
}

/// A hitting set none of whose elements can be removed.
pub fn minimal_hitting_set<T: Ord + Clone>(c: &Collection<T>) -> BTreeSet<T> {
    let ix = Indexed::new(c);
    let chosen = greedy(&ix.sets, ix.elems.len());
    ix.decode(prune(&ix.sets, &chosen, ix.elems.len()).ones())
}

/// Sets pairwise disjoint need one element each: a lower bound.
fn packing_bound(sets: &[FixedBitSet]) -> usize {
    let mut order: Vec<&FixedBitSet> = sets.iter().collect();
    order.sort_by_key(|s| s.count_ones(..));
    let mut used = FixedBitSet::with_capacity(sets.first().map_or(0, |s| s.len()));
    let mut n = 0;
    for s in order {
        if used.is_disjoint(s) {
            used.union_with(s);
            n += 1;
        }
    }
    n
}

/// Whether at most `budget` elements can hit every set.
///
/// Branches on the elements of a smallest set; each branch excludes the
/// elements tried before it, so no hitting set is visited twice.
fn feasible(mut sets: Vec<FixedBitSet>, budget: usize, clock: &mut Clock) -> Result<bool, Expired> {
    if sets.is_empty() {
        return Ok(true);
    }
    if budget == 0 || sets.iter().any(|s| s.is_clear()) || packing_bound(&sets) > budget {
        return Ok(false);
    }
    clock.tick()?;
    let pick = (0..sets.len())
        .min_by_key(|&i| sets[i].count_ones(..))
        .unwrap();
    let mut branch: Vec<usize> = sets[pick].ones().collect();
    // most frequent first
    branch.sort_by_key(|&e| std::cmp::Reverse(sets.iter().filter(|s| s.contains(e)).count()));
    for e in branch {
        let rest: Vec<FixedBitSet> = sets.iter().filter(|s| !s.contains(e)).cloned().collect();
        if feasible(rest, budget - 1, clock)? {
            return Ok(true);
        }
        for s in &mut sets {
            s.set(e, false);
        }
        if sets.iter().any(|s| s.is_clear()) {
            return Ok(false);
        }
    }
    Ok(false)
}

/// The solver ran past its deadline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Expired;

struct Clock {
    deadline: Option<Instant>,
    ticks: u32,
}

impl Clock {
    fn tick(&mut self) -> Result<(), Expired> {
        self.ticks = self.ticks.wrapping_add(1);
        match self.deadline {
            Some(d) if self.ticks.is_multiple_of(256) && Instant::now() >= d => Err(Expired),
            _ => Ok(()),
        }
    }
}

/// Drops every set that is a superset of another.
fn drop_supersets(sets: &[FixedBitSet]) -> Vec<FixedBitSet> {
    let mut by_size = sets.to_vec();
    by_size.sort_by_key(|s| s.count_ones(..));
    let mut out: Vec<FixedBitSet> = Vec::new();
    for s in by_size {
        if !out.iter().any(|kept| kept.is_subset(&s)) {
            out.push(s);
        }
    }
    out
}

/// A smallest hitting set; the lexicographically least one among optima.
pub fn minimum_hitting_set<T: Ord + Clone>(c: &Collection<T>) -> BTreeSet<T> {
    minimum_hitting_set_at_least(c, 0)
}

/// As [`minimum_hitting_set`], given that no hitting set is smaller than
/// `lower` (for instance the optimum of a sub-collection). A wrong hint
/// gives a wrong answer.
pub fn minimum_hitting_set_at_least<T: Ord + Clone>(
    c: &Collection<T>,
    lower: usize,
) -> BTreeSet<T> {
    minimum_hitting_set_until(c, lower, None).expect("no deadline")
}

/// As [`minimum_hitting_set_at_least`], giving up at `deadline`.
pub fn minimum_hitting_set_until<T: Ord + Clone>(
    c: &Collection<T>,
    lower: usize,
    deadline: Option<Instant>,
) -> Result<BTreeSet<T>, Expired> {
    let mut clock = Clock { deadline, ticks: 0 };
    let ix = Indexed::new(c);
    let n = ix.elems.len();
    let sets = drop_supersets(&ix.sets);

    // Singletons belong to every solution.
    let mut chosen = FixedBitSet::with_capacity(n);
    for s in &sets {
        if s.count_ones(..) == 1 {
            chosen.union_with(s);
        }
    }
    let mut unhit: Vec<FixedBitSet> = sets.into_iter().filter(|s| !hits(&chosen, s)).collect();

    let upper = prune(&unhit, &greedy(&unhit, n), n).count_ones(..);
    let mut size = lower
        .saturating_sub(chosen.count_ones(..))
        .max(packing_bound(&unhit))
        .min(upper);
    while !feasible(unhit.clone(), size, &mut clock)? {
        size += 1;
    }

    // Smallest next element that still leaves a solution of the right size.
    let mut start = 0;
    while size > 0 {
        let end = unhit
            .iter()
            .map(|s| s.ones().last().unwrap())
            .min()
            .unwrap();
        let mut next = None;
        for e in start..=end {
            if !unhit.iter().any(|s| s.contains(e)) {
                continue;
            }
            let rest: Vec<FixedBitSet> = unhit
                .iter()
                .filter(|s| !s.contains(e))
                .map(|s| {
                    let mut s = s.clone();
                    s.set_range(..e + 1, false);
                    s
                })
                .collect();
            if feasible(drop_supersets(&rest), size - 1, &mut clock)? {
                next = Some(e);
                break;
            }
        }
        let e = next.expect("an optimum of this size exists");
        chosen.insert(e);
        unhit.retain(|s| !s.contains(e));
        start = e + 1;
        size -= 1;
    }
    Ok(ix.decode(chosen.ones()))
}

/// Pairs whose banning satisfies every clause of `phi`: a hitting set of
/// the clauses.
pub fn compute_minimal_solution(phi: &OrderingConstraint, mode: MhsMode) -> PairSet {
    let c: Collection<_> = phi.clauses().iter().cloned().collect();
    match mode {
        MhsMode::Minimum => minimum_hitting_set(&c),
        MhsMode::Minimal => minimal_hitting_set(&c),
    }
}
