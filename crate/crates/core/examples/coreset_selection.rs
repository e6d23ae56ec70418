//! One batch through the redundancy filter: cluster it, compare each cluster
//! to the buffer's class distributions by KL divergence, drop the redundant
//! clusters and pick a farthest-point coreset from what survives.
//!
//! cargo run --release --example coreset_selection

use oclfd::buffer::{BufferEntry, EvictionPolicy, ReplayBuffer, Source};
use oclfd::rcs::{cluster_batch, coreset_size, farthest_point_coreset, filter_redundant, RcsConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn blob(center: [f64; 2], n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let noise = Normal::new(0.0, 0.5).unwrap();
    (0..n)
        .map(|_| center.iter().map(|c| c + noise.sample(rng)).collect())
        .collect()
}

fn main() -> oclfd::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut buffer = ReplayBuffer::new(500, 2, EvictionPolicy::ClassBalanced, 0)?;
    let known = blob([0.0, 0.0], 200, &mut rng);
    buffer.insert(
        known
            .into_iter()
            .enumerate()
            .map(|(i, features)| BufferEntry {
                id: i as u64,
                features,
                label: 0,
                source: Source::GroundTruth,
                step_added: 0,
            })
            .collect(),
    )?;

    // Half the batch repeats the buffered region, half is new.
    let mut batch = blob([0.0, 0.0], 60, &mut rng);
    batch.extend(blob([4.0, 4.0], 40, &mut rng));

    let cfg = RcsConfig {
        cluster_count: 2,
        ..RcsConfig::default()
    };
    let clusters = cluster_batch(&batch, &cfg, &mut rng)?;
    let filtered = filter_redundant(clusters, &buffer.class_summaries(), cfg.kl_threshold, cfg.kl_mode)?;
    for (u, d) in filtered.min_divergence.iter().enumerate() {
        println!("cluster {u}: min KL to buffer {d:.3}");
    }
    for c in &filtered.dropped_clusters {
        println!("dropped cluster at ({:.2}, {:.2}) with {} samples", c.mean[0], c.mean[1], c.count);
    }
    let survivors = filtered.surviving_members();
    let points: Vec<&[f64]> = survivors.iter().map(|&i| batch[i].as_slice()).collect();
    let k = coreset_size(cfg.coreset_ratio, points.len());
    let pick = farthest_point_coreset(&points, k);
    println!("{} survivors, coreset of {k}:", survivors.len());
    for &i in pick.indices.iter().take(8) {
        println!("  batch[{}] = ({:.2}, {:.2})", survivors[i], points[i][0], points[i][1]);
    }
    Ok(())
}
