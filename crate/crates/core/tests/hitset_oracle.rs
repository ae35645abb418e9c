mod common;

use std::collections::BTreeSet;

use fence_forge::hitset::{
    is_hitting_set, minimal_hitting_set, minimum_hitting_set, minimum_hitting_set_at_least,
    Collection,
};
use proptest::prelude::*;

use common::{brute_min_size, brute_optima, random_collections};

fn collection() -> impl Strategy<Value = Collection<u32>> {
    prop::collection::vec(prop::collection::btree_set(0..10u32, 1..5), 1..9)
        .prop_map(|v| v.into_iter().collect())
}

/// Every element is needed and the set hits everything.
fn is_minimal(h: &BTreeSet<u32>, c: &Collection<u32>) -> bool {
    is_hitting_set(h, c)
        && h.iter().all(|e| {
            let mut less = h.clone();
            less.remove(e);
            !is_hitting_set(&less, c)
        })
}

proptest! {
    #[test]
    fn minimum_is_least_optimum(c in collection()) {
        let h = minimum_hitting_set(&c);
        prop_assert_eq!(&h, &brute_optima(&c)[0]);
    }

    #[test]
    fn hint_at_or_below_optimum_changes_nothing(c in collection(), slack in 0usize..3) {
        let best = brute_min_size(&c);
        let hint = best.saturating_sub(slack);
        prop_assert_eq!(minimum_hitting_set_at_least(&c, hint), minimum_hitting_set(&c));
    }

    #[test]
    fn minimal_is_irreducible(c in collection()) {
        let h = minimal_hitting_set(&c);
        prop_assert!(is_minimal(&h, &c));
        prop_assert!(h.len() >= brute_min_size(&c));
    }

    #[test]
    fn adding_sets_never_shrinks_the_optimum(c in collection(), extra in prop::collection::btree_set(0..10u32, 1..5)) {
        let before = minimum_hitting_set(&c).len();
        let mut bigger = c.clone();
        bigger.push(extra);
        prop_assert!(minimum_hitting_set(&bigger).len() >= before);
    }
}

#[test]
fn seeded_collections_against_brute_force() {
    for (i, c) in random_collections(7, 300, 12, 8).iter().enumerate() {
        let h = minimum_hitting_set(c);
        assert!(is_hitting_set(&h, c), "collection {i}");
        assert_eq!(h, brute_optima(c)[0], "collection {i}: {:?}", c.sets());
    }
}

#[test]
fn wide_collection_stays_fast() {
    // many overlapping sets over a larger universe, as repair loops produce
    let cs = random_collections(11, 1, 60, 1);
    let mut c = cs[0].clone();
    for more in random_collections(12, 400, 60, 1) {
        for s in more.sets() {
            c.push(s.clone());
        }
    }
    let h = minimum_hitting_set(&c);
    assert!(is_hitting_set(&h, &c));
    assert!(is_minimal(&h, &c));
}
