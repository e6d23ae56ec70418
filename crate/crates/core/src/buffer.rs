//! Bounded, class-partitioned replay memory.
//!
//! When an insert pushes the buffer over capacity, one entry is evicted from
//! the currently largest class (ties go to the lowest class id). Within that
//! class, pseudo-labeled entries go first; the victim is drawn uniformly among
//! the eligible entries, which includes the one just inserted.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-6;
pub const DEFAULT_CAPACITY: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    GroundTruth,
    Pseudo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    /// Stream-unique sample id.
    pub id: u64,
    pub features: Vec<f64>,
    pub label: usize,
    pub source: Source,
    pub step_added: u64,
}

/// Which entries an over-capacity insert may evict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvictionPolicy {
    /// Largest class first, pseudo-labeled entries before ground truth.
    #[default]
    ClassBalanced,
    /// Classic reservoir sampling over the whole stream of inserts.
    UniformReservoir,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvictionReport {
    pub evicted: Vec<u64>,
}

/// Diagonal-Gaussian sufficient statistics of a group of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    /// Class id for buffer partitions, cluster index for batch clusters.
    pub id: usize,
    pub count: usize,
    pub mean: Vec<f64>,
    /// Population variance per dimension, floored.
    pub diag_variance: Vec<f64>,
    /// Indices into the collection the summary was built from.
    pub member_ids: Vec<usize>,
}

impl ClusterSummary {
    /// Summary of `points[i]` for every `i` in `members`.
    pub fn from_members<P: AsRef<[f64]>>(id: usize, points: &[P], members: Vec<usize>, variance_floor: f64) -> Result<Self> {
        let Some(&first) = members.first() else {
            return Err(Error::InvalidArgument("cluster summary needs at least one member".into()));
        };
        let dim = points[first].as_ref().len();
        let n = members.len() as f64;
        let mut mean = vec![0.0; dim];
        for &i in &members {
            let x = points[i].as_ref();
            if x.len() != dim {
                return Err(Error::shape(dim, x.len()));
            }
            mean.iter_mut().zip(x).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for &i in &members {
            let x = points[i].as_ref();
            var.iter_mut()
                .zip(x.iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m) * (v - m));
        }
        var.iter_mut().for_each(|s| *s = (*s / n).max(variance_floor));
        Ok(Self {
            id,
            count: members.len(),
            mean,
            diag_variance: var,
            member_ids: members,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    feature_dim: usize,
    policy: EvictionPolicy,
    variance_floor: f64,
    entries: Vec<BufferEntry>,
    /// Inserts seen so far, for reservoir acceptance.
    seen: u64,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, feature_dim: usize, policy: EvictionPolicy, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("buffer capacity must be > 0".into()));
        }
        Ok(Self {
            capacity,
            feature_dim,
            policy,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            entries: Vec::new(),
            seen: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn with_variance_floor(mut self, floor: f64) -> Self {
        self.variance_floor = floor;
        self
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    /// Entry count per class, indexed by label, sized to the largest label seen.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = Vec::new();
        for e in &self.entries {
            if e.label >= counts.len() {
                counts.resize(e.label + 1, 0);
            }
            counts[e.label] += 1;
        }
        counts
    }

    fn partitions(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut parts: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            parts.entry(e.label).or_default().push(i);
        }
        parts
    }

    pub fn insert(&mut self, entries: Vec<BufferEntry>) -> Result<EvictionReport> {
        if let Some(bad) = entries.iter().find(|e| e.features.len() != self.feature_dim) {
            return Err(Error::shape(self.feature_dim, bad.features.len()));
        }
        let mut report = EvictionReport::default();
        for entry in entries {
            self.seen += 1;
            match self.policy {
                EvictionPolicy::ClassBalanced => {
                    self.entries.push(entry);
                    if self.entries.len() > self.capacity {
                        let victim = self.balanced_victim();
                        report.evicted.push(self.entries.swap_remove(victim).id);
                    }
                }
                EvictionPolicy::UniformReservoir => {
                    if self.entries.len() < self.capacity {
                        self.entries.push(entry);
                    } else {
                        let slot = self.rng.random_range(0..self.seen) as usize;
                        if slot < self.capacity {
                            let old = std::mem::replace(&mut self.entries[slot], entry);
                            report.evicted.push(old.id);
                        } else {
                            report.evicted.push(entry.id);
                        }
                    }
                }
            }
        }
        Ok(report)
    }

    fn balanced_victim(&mut self) -> usize {
        let parts = self.partitions();
        let (_, members) = parts
            .iter()
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0)))
            .expect("buffer is over capacity so non-empty");
        let pseudo: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&i| self.entries[i].source == Source::Pseudo)
            .collect();
        let pool = if pseudo.is_empty() { members } else { &pseudo };
        pool[self.rng.random_range(0..pool.len())]
    }

    /// One summary per non-empty class, in ascending class order. Member ids
    /// index into [`ReplayBuffer::entries`].
    pub fn class_summaries(&self) -> Vec<ClusterSummary> {
        let feats: Vec<&[f64]> = self.entries.iter().map(|e| e.features.as_slice()).collect();
        self.partitions()
            .into_iter()
            .map(|(label, members)| {
                ClusterSummary::from_members(label, &feats, members, self.variance_floor)
                    .expect("partitions are non-empty and dimension-checked")
            })
            .collect()
    }

    /// Class-stratified sample without replacement. Each class gets an equal
    /// share, capped at its size, with leftovers spread over larger classes.
    pub fn replay_batch<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Vec<BufferEntry> {
        if size >= self.entries.len() {
            return self.entries.clone();
        }
        let parts: Vec<(usize, Vec<usize>)> = self.partitions().into_iter().collect();
        let quota = water_fill(&parts.iter().map(|(_, m)| m.len()).collect::<Vec<_>>(), size, rng);
        let mut out = Vec::with_capacity(size);
        for ((_, members), take) in parts.iter().zip(quota) {
            for k in index::sample(rng, members.len(), take) {
                out.push(self.entries[members[k]].clone());
            }
        }
        out
    }

    /// Writes one JSON object per entry, one per line.
    pub fn export_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n").map_err(|e| Error::io("<buffer export>", e))?;
        }
        Ok(())
    }

    /// Rebuilds a buffer from [`ReplayBuffer::export_jsonl`] output. Entries
    /// beyond capacity are evicted with the buffer's policy.
    pub fn import_jsonl<R: BufRead>(
        input: R,
        capacity: usize,
        feature_dim: usize,
        policy: EvictionPolicy,
        seed: u64,
    ) -> Result<Self> {
        let mut buf = Self::new(capacity, feature_dim, policy, seed)?;
        let mut entries = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<buffer import>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: BufferEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            entries.push(entry);
        }
        buf.insert(entries)?;
        Ok(buf)
    }
}

/// Splits `total` draws over groups of the given sizes as evenly as their
/// sizes allow. Leftover single draws go to randomly chosen open groups.
fn water_fill<R: Rng + ?Sized>(sizes: &[usize], total: usize, rng: &mut R) -> Vec<usize> {
    let mut quota = vec![0usize; sizes.len()];
    let mut remaining = total.min(sizes.iter().sum());
    loop {
        let open: Vec<usize> = (0..sizes.len()).filter(|&g| quota[g] < sizes[g]).collect();
        if remaining == 0 || open.is_empty() {
            break;
        }
        let share = remaining / open.len();
        if share == 0 {
            for k in index::sample(rng, open.len(), remaining) {
                quota[open[k]] += 1;
            }
            break;
        }
        for g in open {
            let add = share.min(sizes[g] - quota[g]);
            quota[g] += add;
            remaining -= add;
        }
    }
    quota
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: u64, label: usize, x: f64) -> BufferEntry {
        BufferEntry {
            id,
            features: vec![x, -x],
            label,
            source: Source::GroundTruth,
            step_added: 0,
        }
    }

    fn buffer(cap: usize) -> ReplayBuffer {
        ReplayBuffer::new(cap, 2, EvictionPolicy::ClassBalanced, 1).unwrap()
    }

    #[test]
    fn zero_capacity_rejected() {
        assert!(ReplayBuffer::new(0, 2, EvictionPolicy::ClassBalanced, 0).is_err());
    }

    #[test]
    fn under_capacity_evicts_nothing() {
        let mut b = buffer(10);
        let r = b.insert((0..4).map(|i| entry(i, 0, i as f64)).collect()).unwrap();
        assert!(r.evicted.is_empty());
        assert_eq!(b.len(), 4);
    }

    #[test]
    fn single_class_overflow_evicts_that_class() {
        let mut b = buffer(10);
        let r = b.insert((0..15).map(|i| entry(i, 3, i as f64)).collect()).unwrap();
        assert_eq!(r.evicted.len(), 5);
        assert_eq!(b.len(), 10);
        assert!(b.entries().iter().all(|e| e.label == 3));
    }

    #[test]
    fn incoming_class_evens_out() {
        let mut b = buffer(10);
        b.insert((0..8).map(|i| entry(i, 0, i as f64)).collect()).unwrap();
        b.insert((8..14).map(|i| entry(i, 1, i as f64)).collect()).unwrap();
        let counts = b.class_counts();
        assert_eq!(b.len(), 10);
        for c in counts {
            assert!((c as i64 - 5).abs() <= 1);
        }
    }

    #[test]
    fn ground_truth_outlives_pseudo_within_class() {
        let mut b = buffer(4);
        let mut entries: Vec<BufferEntry> = (0..4).map(|i| entry(i, 0, i as f64)).collect();
        entries[1].source = Source::Pseudo;
        entries[2].source = Source::Pseudo;
        b.insert(entries).unwrap();
        let r = b.insert(vec![entry(10, 0, 9.0), entry(11, 0, 8.0)]).unwrap();
        // Two pseudo entries exist, so only they can go.
        let mut ev = r.evicted.clone();
        ev.sort();
        assert_eq!(ev, vec![1, 2]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut b = buffer(4);
        let mut e = entry(0, 0, 1.0);
        e.features.push(1.0);
        assert!(matches!(b.insert(vec![e]), Err(Error::InputShape { .. })));
    }

    #[test]
    fn uniform_reservoir_respects_capacity() {
        let mut b = ReplayBuffer::new(5, 2, EvictionPolicy::UniformReservoir, 3).unwrap();
        let r = b.insert((0..50).map(|i| entry(i, (i % 3) as usize, i as f64)).collect()).unwrap();
        assert_eq!(b.len(), 5);
        assert_eq!(r.evicted.len(), 45);
    }

    #[test]
    fn empty_buffer_has_no_summaries() {
        assert!(buffer(3).class_summaries().is_empty());
    }

    #[test]
    fn single_entry_summary_is_floored() {
        let mut b = buffer(3);
        b.insert(vec![entry(0, 1, 2.0)]).unwrap();
        let s = &b.class_summaries()[0];
        assert_eq!(s.mean, vec![2.0, -2.0]);
        assert_eq!(s.diag_variance, vec![DEFAULT_VARIANCE_FLOOR; 2]);
    }

    #[test]
    fn two_point_population_variance() {
        let pts = [vec![0.0, 0.0], vec![2.0, 0.0]];
        let s = ClusterSummary::from_members(0, &pts, vec![0, 1], DEFAULT_VARIANCE_FLOOR).unwrap();
        assert_eq!(s.mean, vec![1.0, 0.0]);
        assert_eq!(s.diag_variance, vec![1.0, DEFAULT_VARIANCE_FLOOR]);
    }

    #[test]
    fn replay_edge_sizes() {
        let mut b = buffer(20);
        b.insert((0..6).map(|i| entry(i, (i % 2) as usize, i as f64)).collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(b.replay_batch(0, &mut rng).is_empty());
        assert_eq!(b.replay_batch(6, &mut rng).len(), 6);
        assert_eq!(b.replay_batch(60, &mut rng).len(), 6);
    }

    #[test]
    fn replay_keeps_rare_class() {
        let mut b = buffer(200);
        let mut es: Vec<BufferEntry> = (0..100).map(|i| entry(i, 0, i as f64)).collect();
        es.push(entry(100, 1, -1.0));
        es.push(entry(101, 1, -2.0));
        b.insert(es).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch = b.replay_batch(10, &mut rng);
        assert_eq!(batch.len(), 10);
        assert_eq!(batch.iter().filter(|e| e.label == 1).count(), 2);
        let mut ids: Vec<u64> = batch.iter().map(|e| e.id).collect();
        ids.dedup();
        assert_eq!(ids.len(), 10);
    }

    #[test]
    fn water_fill_by_hand() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(water_fill(&[100, 2], 10, &mut rng), vec![8, 2]);
        assert_eq!(water_fill(&[5, 5, 5], 9, &mut rng), vec![3, 3, 3]);
        let q = water_fill(&[5, 5, 5], 4, &mut rng);
        assert_eq!(q.iter().sum::<usize>(), 4);
        assert!(q.iter().all(|&x| x == 1 || x == 2));
    }

    #[test]
    fn jsonl_round_trip() {
        let mut b = buffer(10);
        b.insert((0..7).map(|i| entry(i, (i % 3) as usize, i as f64 * 0.1)).collect()).unwrap();
        let mut out = Vec::new();
        b.export_jsonl(&mut out).unwrap();
        assert_eq!(out.iter().filter(|&&c| c == b'\n').count(), 7);
        let back = ReplayBuffer::import_jsonl(&out[..], 10, 2, EvictionPolicy::ClassBalanced, 0).unwrap();
        assert_eq!(back.entries(), b.entries());
    }
}
