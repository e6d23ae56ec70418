//! Invariants checked over generated inputs, plus independent oracles for
//! clustering and selection.

use oclfd::buffer::{BufferEntry, ClusterSummary, EvictionPolicy, ReplayBuffer, Source};
use oclfd::cupl::{gate, CuplConfig, Polarity};
use oclfd::gbt::{balanced_select, focal_loss, BalanceCandidate, BalanceState};
use oclfd::rcs::{coreset_size, divergence, farthest_point_coreset, kl_gaussian, mini_batch_kmeans, KlMode, MiniBatchKMeansConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn summary(mean: Vec<f64>, var: Vec<f64>) -> ClusterSummary {
    ClusterSummary {
        id: 0,
        count: 1,
        mean,
        diag_variance: var,
        member_ids: vec![0],
    }
}

fn gaussians(d: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-10.0..10.0f64, d),
        prop::collection::vec(1e-6..10.0f64, d),
    )
}

fn points(n: std::ops::Range<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0..5.0f64, d), n)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kl_is_zero_on_self_and_nonnegative((m1, v1) in gaussians(3), (m2, v2) in gaussians(3)) {
        let p = summary(m1, v1);
        let q = summary(m2, v2);
        prop_assert_eq!(kl_gaussian(&p, &p).unwrap(), 0.0);
        prop_assert!(kl_gaussian(&p, &q).unwrap() >= 0.0);
        let s = divergence(&p, &q, KlMode::Symmetric).unwrap();
        prop_assert!((s - divergence(&q, &p, KlMode::Symmetric).unwrap()).abs() <= 1e-9 * s.max(1.0));
    }

    #[test]
    fn focal_loss_decreases_in_true_class_probability(a in 0.01..0.98f64, b in 0.01..0.98f64, gamma in 0.0..6.0f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-9);
        let (l_lo, _) = focal_loss(&[lo, 1.0 - lo], 0, gamma, 1.0).unwrap();
        let (l_hi, _) = focal_loss(&[hi, 1.0 - hi], 0, gamma, 1.0).unwrap();
        prop_assert!(l_hi <= l_lo);
    }

    #[test]
    fn coreset_is_distinct_sized_and_starts_at_the_farthest_pair(pts in points(2..30, 3), ratio in 0.05..1.0f64) {
        let s = coreset_size(ratio, pts.len()).max(2);
        let sel = farthest_point_coreset(&pts, s);
        prop_assert_eq!(sel.indices.len(), s);
        let mut seen = std::collections::HashSet::new();
        prop_assert!(sel.indices.iter().all(|i| seen.insert(*i)));
        let mut dmax: f64 = 0.0;
        for a in 0..pts.len() {
            for b in a + 1..pts.len() {
                dmax = dmax.max(dist(&pts[a], &pts[b]));
            }
        }
        prop_assert_eq!(dist(&pts[sel.indices[0]], &pts[sel.indices[1]]), dmax);
    }

    #[test]
    fn coreset_size_is_ceiling_clamped(ratio in 0.01..=1.0f64, n in 0usize..500) {
        let s = coreset_size(ratio, n);
        prop_assert!(s <= n);
        let exact = ratio * n as f64;
        prop_assert!(s as f64 >= exact - 1e-6);
        prop_assert!((s as f64) < exact + 1.0 || s == n);
    }

    #[test]
    fn coreset_is_permutation_invariant(pts in points(3..20, 2), seed in any::<u64>()) {
        let s = (pts.len() / 2).max(2);
        let base: Vec<Vec<f64>> = pts.clone();
        let mut order: Vec<usize> = (0..pts.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled: Vec<Vec<f64>> = order.iter().map(|&i| base[i].clone()).collect();
        let mut a: Vec<Vec<f64>> = farthest_point_coreset(&base, s).indices.iter().map(|&i| base[i].clone()).collect();
        let mut b: Vec<Vec<f64>> = farthest_point_coreset(&shuffled, s).indices.iter().map(|&i| shuffled[i].clone()).collect();
        // Continuous coordinates make ties vanishingly rare; compare as sets.
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn balanced_select_has_no_duplicates_and_valid_proportions(
        classes in prop::collection::vec(0usize..4, 1..60),
        buffer in prop::collection::vec(0usize..200, 4),
        target in 1usize..70,
    ) {
        let feats: Vec<Vec<f64>> = (0..classes.len()).map(|i| vec![i as f64, (i * 7 % 11) as f64]).collect();
        let cands: Vec<BalanceCandidate> = feats.iter().zip(&classes).map(|(f, &class)| BalanceCandidate { features: f, class }).collect();
        let sel = balanced_select(&cands, &buffer, 4, target).unwrap();
        prop_assert_eq!(sel.indices.len(), target.min(classes.len()));
        let mut seen = std::collections::HashSet::new();
        prop_assert!(sel.indices.iter().all(|i| seen.insert(*i)));
        let sum: f64 = sel.state.coreset_class_proportions.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        let sum: f64 = sel.state.buffer_class_proportions.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9 || buffer.iter().sum::<usize>() + sel.indices.len() == 0);
        prop_assert!(sel.state.imbalance_score >= 0.0);
    }

    #[test]
    fn gate_is_monotone(p in 0.0..=1.0f64, v in 0.0..0.25f64, tp in 0.5..1.0f64, dtp in 0.0..0.5f64, k in 0.0..0.25f64, fk in 0.0..=1.0f64) {
        let base = CuplConfig { tau_p: tp, tau_n: 0.3, kappa: k, ..CuplConfig::default() };
        let up = CuplConfig { tau_p: (tp + dtp).min(1.0), ..base };
        let tight = CuplConfig { kappa: k * fk, ..base };
        let pos = |c: &CuplConfig| gate(p, v, c) == Some(Polarity::Positive);
        prop_assert!(!pos(&up) || pos(&base));
        prop_assert!(gate(p, v, &tight).is_none() || gate(p, v, &base).is_some());
    }

    #[test]
    fn buffer_never_exceeds_capacity(labels in prop::collection::vec(0usize..5, 1..400), cap in 1usize..60, balanced in any::<bool>()) {
        let policy = if balanced { EvictionPolicy::ClassBalanced } else { EvictionPolicy::UniformReservoir };
        let mut buf = ReplayBuffer::new(cap, 1, policy, 3).unwrap();
        for (i, chunk) in labels.chunks(17).enumerate() {
            let entries = chunk.iter().enumerate().map(|(j, &label)| BufferEntry {
                id: (i * 17 + j) as u64,
                features: vec![label as f64],
                label,
                source: Source::Pseudo,
                step_added: i as u64,
            }).collect();
            let before = buf.len() + chunk.len();
            let report = buf.insert(entries).unwrap();
            prop_assert!(buf.len() <= cap);
            prop_assert_eq!(before - buf.len(), report.evicted.len());
        }
        if balanced {
            // No class can be more than one entry above another unless the
            // smaller one simply never had more samples.
            let counts = buf.class_counts();
            let seen: Vec<usize> = (0..counts.len()).map(|c| labels.iter().filter(|&&l| l == c).count()).collect();
            let max = *counts.iter().max().unwrap_or(&0);
            for (c, &n) in counts.iter().enumerate() {
                prop_assert!(n + 1 >= max || n == seen[c]);
            }
        }
    }
}

#[test]
fn canonical_balance_example_from_skewed_buffer() {
    // Buffer {A: 90, B: 10}, 20 candidates of each, pick 10.
    let feats: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
    let cands: Vec<BalanceCandidate> = feats
        .iter()
        .enumerate()
        .map(|(i, f)| BalanceCandidate {
            features: f,
            class: usize::from(i >= 20),
        })
        .collect();
    let sel = balanced_select(&cands, &[90, 10], 2, 10).unwrap();
    let b = sel.indices.iter().filter(|&&i| i >= 20).count();
    assert!(b >= 8, "{b} of class B");
}

#[test]
fn greedy_balances_the_buffer_better_than_random_subsets() {
    // Buffer 90/10, candidates 50/50. The greedy deficit rule optimizes the
    // buffer-plus-selection term; measure that term against random subsets.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let feats: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
    let classes: Vec<usize> = (0..100).map(|i| usize::from(i >= 50)).collect();
    let cands: Vec<BalanceCandidate> = feats
        .iter()
        .zip(&classes)
        .map(|(f, &class)| BalanceCandidate { features: f, class })
        .collect();
    let buffer = [90, 10];
    let joint_term = |s: &BalanceState| {
        let pb = &s.buffer_class_proportions;
        pb.iter().map(|p| (p - 0.5).abs()).sum::<f64>() / 2.0
    };
    let mut wins = 0;
    let trials = 400;
    for t in 0..trials {
        let size = 5 + t % 30;
        let greedy = balanced_select(&cands, &buffer, 2, size).unwrap();
        let mut counts = [0usize; 2];
        rand::seq::index::sample(&mut rng, 100, size)
            .iter()
            .for_each(|i| counts[classes[i]] += 1);
        let random = BalanceState::measure(&counts, &buffer);
        wins += usize::from(joint_term(&greedy.state) <= joint_term(&random));
    }
    assert!(wins as f64 >= 0.95 * trials as f64, "{wins}/{trials}");
}

/// Plain Lloyd iterations from the given centroids until assignments settle.
fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> Vec<usize> {
    let mut assign = vec![usize::MAX; points.len()];
    loop {
        let next: Vec<usize> = points
            .iter()
            .map(|p| {
                (0..centroids.len())
                    .min_by(|&a, &b| dist(p, &centroids[a]).total_cmp(&dist(p, &centroids[b])))
                    .unwrap()
            })
            .collect();
        if next == assign {
            return assign;
        }
        assign = next;
        for (k, c) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&assign).filter(|(_, &a)| a == k).map(|(p, _)| p).collect();
            if !members.is_empty() {
                for (d, v) in c.iter_mut().enumerate() {
                    *v = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
                }
            }
        }
    }
}

#[test]
fn mini_batch_kmeans_matches_lloyd_on_separated_blobs() {
    let noise = Normal::new(0.0, 0.4).unwrap();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [[0.0, 0.0, 0.0], [6.0, 0.0, 0.0], [0.0, 6.0, 6.0]];
        let mut pts = Vec::new();
        for c in &centers {
            for _ in 0..rng.random_range(20..60) {
                pts.push(c.iter().map(|v| v + noise.sample(&mut rng)).collect::<Vec<f64>>());
            }
        }
        let got = mini_batch_kmeans(&pts, 3, &MiniBatchKMeansConfig::default(), 1e-6, &mut rng).unwrap();
        let oracle = lloyd(&pts, got.iter().map(|c| c.mean.clone()).collect());
        let mut ours = vec![usize::MAX; pts.len()];
        for (k, c) in got.iter().enumerate() {
            for &m in &c.member_ids {
                assert_eq!(ours[m], usize::MAX, "point {m} in two clusters");
                ours[m] = k;
            }
        }
        assert!(ours.iter().all(|&k| k != usize::MAX), "every point assigned");
        assert_eq!(ours, oracle, "seed {seed}");
        for c in &got {
            let members: Vec<&Vec<f64>> = c.member_ids.iter().map(|&i| &pts[i]).collect();
            for d in 0..3 {
                let mean = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
                assert!((mean - c.mean[d]).abs() < 1e-9);
            }
        }
    }
}
