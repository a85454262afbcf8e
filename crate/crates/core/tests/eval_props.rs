use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vaps_core::corpus::ItemId;
use vaps_core::eval::{hr_at_k, mrr_at_k, ndcg_at_k, RankedList, CUTOFFS};

/// Position of the ground truth by counting strictly better entries and
/// equal-score entries with a smaller id.
fn brute_rank(ids: &[ItemId], scores: &[f64], gt: usize) -> usize {
    1 + ids
        .iter()
        .zip(scores)
        .filter(|(id, s)| **s > scores[gt] || (**s == scores[gt] && **id < ids[gt]))
        .count()
}

#[test]
fn metrics_match_brute_force_on_random_lists() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let n = rng.gen_range(1..120);
        let ids: Vec<ItemId> = (0..n).map(|i| ItemId(format!("i{:03}", rng.gen_range(0..1000) * 1000 + i))).collect();
        // Coarse scores so ties occur.
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..20))).collect();
        let gt = rng.gen_range(0..n);
        let list = RankedList::new(&ids, &scores, ids[gt].clone());
        let r = brute_rank(&ids, &scores, gt);
        for k in CUTOFFS {
            let hit = r <= k;
            assert_eq!(hr_at_k(&list, k), if hit { 1.0 } else { 0.0 });
            assert_eq!(ndcg_at_k(&list, k), if hit { 1.0 / ((r + 1) as f64).log2() } else { 0.0 });
            assert_eq!(mrr_at_k(&list, k), if hit { 1.0 / r as f64 } else { 0.0 });
        }
    }
}

proptest! {
    #[test]
    fn ranked_list_is_sorted(scores in prop::collection::vec(-5.0f64..5.0, 1..50)) {
        let ids: Vec<ItemId> = (0..scores.len()).map(|i| ItemId(format!("i{i:03}"))).collect();
        let l = RankedList::new(&ids, &scores, ids[0].clone());
        prop_assert!(l.items.windows(2).all(|w| w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0)));
        for k in CUTOFFS {
            prop_assert!(ndcg_at_k(&l, k) <= 1.0 && mrr_at_k(&l, k) <= ndcg_at_k(&l, k));
        }
    }
}
