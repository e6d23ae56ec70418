//! Globally balanced selection against random subsets of the same size.
//! The two halves of the imbalance objective are printed separately: the
//! coreset term (selection against equal shares) and the buffer term
//! (buffer plus selection against equal shares).
//!
//! cargo run --release --example balanced_selection

use oclfd::gbt::{balanced_select, buffer_term, coreset_term, BalanceCandidate, BalanceState, TargetMode};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn terms(s: &BalanceState) -> (f64, f64) {
    let present: Vec<f64> = s.buffer_class_proportions.iter().copied().filter(|&p| p > 0.0).collect();
    (
        coreset_term(&s.coreset_class_proportions, 0, TargetMode::Normalized),
        buffer_term(&present, 0, TargetMode::Normalized),
    )
}

fn compare(name: &str, pool: &[usize], buffer_counts: &[usize], size: usize) -> oclfd::Result<()> {
    let c = buffer_counts.len();
    let features: Vec<Vec<f64>> = (0..pool.len()).map(|i| vec![i as f64, (i % 7) as f64]).collect();
    let candidates: Vec<BalanceCandidate> = features
        .iter()
        .zip(pool)
        .map(|(f, &class)| BalanceCandidate { features: f, class })
        .collect();
    let sel = balanced_select(&candidates, buffer_counts, c, size)?;
    let mut counts = vec![0usize; c];
    sel.indices.iter().for_each(|&i| counts[pool[i]] += 1);
    let (gc, gb) = terms(&sel.state);
    println!("{name}: buffer {buffer_counts:?}, pick {size}");
    println!("  greedy per class {counts:?}: coreset term {gc:.4}, buffer term {gb:.4}");

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let trials = 1000;
    let (mut rc_sum, mut rb_sum, mut buffer_wins) = (0.0, 0.0, 0);
    for _ in 0..trials {
        let mut rc = vec![0usize; c];
        index::sample(&mut rng, pool.len(), size).iter().for_each(|i| rc[pool[i]] += 1);
        let (tc, tb) = terms(&BalanceState::measure(&rc, buffer_counts));
        rc_sum += tc / trials as f64;
        rb_sum += tb / trials as f64;
        buffer_wins += usize::from(gb <= tb);
    }
    println!("  random mean:      coreset term {rc_sum:.4}, buffer term {rb_sum:.4}");
    println!("  greedy buffer term <= random in {buffer_wins}/{trials} draws");
    Ok(())
}

fn main() -> oclfd::Result<()> {
    let pool: Vec<usize> = [0usize; 70].into_iter().chain([1; 25]).chain([2; 5]).collect();
    compare("majority-heavy pool", &pool, &[400, 60, 5], 30)?;
    let pool: Vec<usize> = [0usize; 50].into_iter().chain([1; 50]).collect();
    compare("even pool", &pool, &[90, 10], 20)
}
