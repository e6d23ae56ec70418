//! Replay buffer eviction: the class-balanced policy against a uniform
//! reservoir on a 90/9/1 stream, then a class-balanced replay draw and a
//! JSONL export.
//!
//! cargo run --release --example replay_buffer

use oclfd::buffer::{BufferEntry, EvictionPolicy, ReplayBuffer, Source};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> oclfd::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let stream: Vec<BufferEntry> = (0..5000u64)
        .map(|id| {
            let u: f64 = rng.random();
            let label = if u < 0.90 { 0 } else if u < 0.99 { 1 } else { 2 };
            BufferEntry {
                id,
                features: vec![label as f64, rng.random()],
                label,
                source: if id % 10 == 0 { Source::GroundTruth } else { Source::Pseudo },
                step_added: id / 100,
            }
        })
        .collect();

    for policy in [EvictionPolicy::ClassBalanced, EvictionPolicy::UniformReservoir] {
        let mut buf = ReplayBuffer::new(300, 2, policy, 7)?;
        let mut evicted = 0;
        for chunk in stream.chunks(100) {
            evicted += buf.insert(chunk.to_vec())?.evicted.len();
        }
        println!("{policy:?}: class counts {:?}, {evicted} evictions", buf.class_counts());
        let draw = buf.replay_batch(30, &mut rng);
        let mut per_class = [0; 3];
        draw.iter().for_each(|e| per_class[e.label] += 1);
        println!("  replay draw of 30 per class {per_class:?}");
        if policy == EvictionPolicy::ClassBalanced {
            let mut out = Vec::new();
            buf.export_jsonl(&mut out)?;
            let text = String::from_utf8_lossy(&out);
            println!("  first exported line: {}", text.lines().next().unwrap_or(""));
        }
    }
    Ok(())
}
