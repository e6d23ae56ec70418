use serde::{Deserialize, Serialize};

use super::kmeans::sq_dist;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoresetSelection {
    /// Selected candidate indices in pick order.
    pub indices: Vec<usize>,
    /// Set when the requested size exceeded the candidate count.
    pub clamped: bool,
}

/// Coreset size for `ratio` of `n` surviving samples: `min(⌈ratio·n⌉, n)`.
pub fn coreset_size(ratio: f64, n: usize) -> usize {
    // Guard against 0.6 * 5 = 3.0000000000000004 rounding up to 4.
    let raw = (ratio * n as f64 - 1e-9).ceil().max(0.0) as usize;
    raw.min(n)
}

/// Greedy farthest-point selection.
///
/// Starts from the globally farthest pair (lowest index pair on ties), then
/// repeatedly adds the candidate whose distance to the nearest selected point
/// is largest (lowest index on ties) until `target` points are chosen.
pub fn farthest_point_coreset<P: AsRef<[f64]>>(candidates: &[P], target: usize) -> CoresetSelection {
    let n = candidates.len();
    let clamped = target > n;
    let target = target.min(n);
    if target == 0 {
        return CoresetSelection {
            indices: Vec::new(),
            clamped,
        };
    }
    if n == 1 {
        return CoresetSelection {
            indices: vec![0],
            clamped,
        };
    }

    let mut best = (0, 1, f64::NEG_INFINITY);
    for i in 0..n {
        for j in i + 1..n {
            let d = sq_dist(candidates[i].as_ref(), candidates[j].as_ref());
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    let mut indices = vec![best.0];
    if target >= 2 {
        indices.push(best.1);
    }
    let mut chosen = vec![false; n];
    let mut min_d = vec![f64::INFINITY; n];
    for &s in &indices {
        chosen[s] = true;
        for (i, c) in candidates.iter().enumerate() {
            min_d[i] = min_d[i].min(sq_dist(c.as_ref(), candidates[s].as_ref()));
        }
    }
    while indices.len() < target {
        let mut next = None;
        for i in 0..n {
            if chosen[i] {
                continue;
            }
            match next {
                Some(j) if min_d[i] <= min_d[j] => {}
                _ => next = Some(i),
            }
        }
        let s = next.expect("fewer picks than candidates");
        chosen[s] = true;
        indices.push(s);
        for (i, c) in candidates.iter().enumerate() {
            min_d[i] = min_d[i].min(sq_dist(c.as_ref(), candidates[s].as_ref()));
        }
    }
    CoresetSelection { indices, clamped }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_unique_farthest_pair() {
        let pts = [[0.0], [1.0], [10.0]];
        let mut sel = farthest_point_coreset(&pts, 2).indices;
        sel.sort();
        assert_eq!(sel, vec![0, 2]);
    }

    #[test]
    fn full_size_is_identity_set() {
        let pts = [[0.0, 1.0], [2.0, 2.0], [5.0, -1.0], [0.5, 0.5]];
        let mut sel = farthest_point_coreset(&pts, 4);
        assert!(!sel.clamped);
        sel.indices.sort();
        assert_eq!(sel.indices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn oversize_request_is_clamped_with_flag() {
        let pts = [[0.0], [1.0]];
        let sel = farthest_point_coreset(&pts, 5);
        assert!(sel.clamped);
        assert_eq!(sel.indices.len(), 2);
    }

    #[test]
    fn ties_prefer_lowest_index_pair() {
        let pts = [[0.0], [1.0], [2.0], [3.0], [0.0], [3.0]];
        let sel = farthest_point_coreset(&pts, 2).indices;
        assert_eq!(sel, vec![0, 3]);
    }

    #[test]
    fn coreset_size_rounding() {
        assert_eq!(coreset_size(0.6, 5), 3);
        assert_eq!(coreset_size(0.6, 7), 5);
        assert_eq!(coreset_size(1.0, 9), 9);
        assert_eq!(coreset_size(0.5, 0), 0);
        assert_eq!(coreset_size(0.01, 3), 1);
    }
}
