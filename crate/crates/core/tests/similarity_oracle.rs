mod common;

use proptest::prelude::*;

use subclust_core::model::{SubtrajRef, TrajId};
use subclust_core::similarity::{pair_similarity, MatchedPair, STPRecord, STRecord};

use common::lcss_oracle;

fn record(traj: u64, first: usize, t_s: i64, card: usize) -> STRecord {
    STRecord { sub: SubtrajRef::new(TrajId(traj), first, first + card - 1), t_s, t_e: t_s + card as i64 - 1, v: 1.0, card }
}

fn stp(sub: &STRecord, other: u64, raw: &[(i64, i64, f64)]) -> STPRecord {
    let mut pairs: Vec<MatchedPair> = raw.iter().map(|&(r, o, dist)| MatchedPair { ref_t: r, other_t: o, dist }).collect();
    pairs.sort_by_key(|p| (p.ref_t, p.other_t));
    pairs.dedup_by(|a, b| (a.ref_t, a.other_t) == (b.ref_t, b.other_t));
    STPRecord { sub_id: sub.sub_id(), other_traj: TrajId(other), pairs }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn chain_similarity_matches_lcss_dp(
        card_a in 1usize..30, card_b in 1usize..30,
        off_a in 0i64..10, off_b in 0i64..10,
        raw_ab in prop::collection::vec((0i64..40, 0i64..40, 0.0f64..12.0), 0..60),
        raw_ba in prop::collection::vec((0i64..40, 0i64..40, 0.0f64..12.0), 0..60),
        eps in 1.0f64..10.0,
    ) {
        let a = record(1, 3, off_a, card_a);
        let b = record(2, 0, off_b, card_b);
        let ab = stp(&a, 2, &raw_ab);
        let ba = stp(&b, 1, &raw_ba);
        let fast = pair_similarity(&a, &b, Some(&ab), Some(&ba), eps);
        let slow = lcss_oracle(&a, &b, Some(&ab), Some(&ba), eps);
        prop_assert!((fast.sim - slow).abs() <= 1e-9, "fast {} oracle {}", fast.sim, slow);
        let rev = pair_similarity(&b, &a, Some(&ba), Some(&ab), eps);
        prop_assert_eq!(fast.sim.to_bits(), rev.sim.to_bits());
        prop_assert_eq!(fast.matched, rev.matched);
        prop_assert!((0.0..=1.0).contains(&fast.sim));
    }

    #[test]
    fn one_sided_relations_agree_with_oracle(
        card in 2usize..25,
        raw in prop::collection::vec((0i64..25, 0i64..25, 0.0f64..5.0), 1..50),
    ) {
        let a = record(7, 0, 0, card);
        let b = record(3, 10, 0, card);
        let ab = stp(&a, 3, &raw);
        let fast = pair_similarity(&a, &b, Some(&ab), None, 5.0);
        let slow = lcss_oracle(&a, &b, Some(&ab), None, 5.0);
        prop_assert!((fast.sim - slow).abs() <= 1e-9);
        prop_assert_eq!(fast.sim.to_bits(), pair_similarity(&b, &a, None, Some(&ab), 5.0).sim.to_bits());
    }
}

#[test]
fn identical_full_matching_is_one() {
    let a = record(1, 0, 0, 10);
    let b = record(2, 0, 0, 10);
    let raw: Vec<_> = (0..10).map(|t| (t, t, 0.0)).collect();
    let ab = stp(&a, 2, &raw);
    let s = pair_similarity(&a, &b, Some(&ab), None, 3.0);
    assert_eq!(s.sim, 1.0);
    assert_eq!(s.matched, 10);
}
