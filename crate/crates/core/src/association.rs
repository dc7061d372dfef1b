//! Similarity matrices between predicted boxes and same-class detections,
//! and the gated optimal one-to-one assignment over them.

use nalgebra::DMatrix;

use crate::geometry::iou;
use crate::model::{BBox, Detection};

/// Similarity matrix, trackers by detections.
pub type Similarity = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssignmentResult {
    /// `(tracker_index, detection_index, similarity)`, sorted by tracker index.
    pub matches: Vec<(usize, usize, f64)>,
    pub unmatched_trackers: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

impl AssignmentResult {
    pub fn detection_for(&self, tracker: usize) -> Option<usize> {
        self.matches.iter().find(|m| m.0 == tracker).map(|m| m.1)
    }

    pub fn total_similarity(&self) -> f64 {
        self.matches.iter().map(|m| m.2).sum()
    }
}

/// `iou * (1 + boost_weight * confidence)`, clipped to `[0, 1 + boost_weight]`.
pub fn similarity_matrix<'a>(
    predicted: &[BBox],
    detections: impl IntoIterator<Item = &'a Detection>,
    boost_weight: f64,
) -> Similarity {
    let dets: Vec<&Detection> = detections.into_iter().collect();
    debug_assert!(dets.windows(2).all(|w| w[0].cls == w[1].cls));
    let cap = 1.0 + boost_weight;
    DMatrix::from_fn(predicted.len(), dets.len(), |i, j| {
        let d = dets[j];
        (iou(&predicted[i], &d.bbox) * (1.0 + boost_weight * d.confidence)).clamp(0.0, cap)
    })
}

/// Maximum-total-similarity matching, then removal of pairs below `threshold`.
pub fn solve_assignment(sim: &Similarity, threshold: f64) -> AssignmentResult {
    let (rows, cols) = sim.shape();

    let mut matched_det = vec![false; cols];
    let mut result = AssignmentResult::default();
    if rows > 0 && cols > 0 {
        for (r, c) in max_weight_matching(sim).into_iter().enumerate() {
            match c {
                Some(c) if sim[(r, c)] >= threshold => {
                    matched_det[c] = true;
                    result.matches.push((r, c, sim[(r, c)]));
                }
                _ => result.unmatched_trackers.push(r),
            }
        }
    } else {
        result.unmatched_trackers.extend(0..rows);
    }
    result.unmatched_detections = (0..cols).filter(|&c| !matched_det[c]).collect();
    result
}

/// Optimal assignment maximising the summed weight; every row of the
/// smaller side is matched. Returns the column chosen for each row.
pub fn max_weight_matching(weights: &Similarity) -> Vec<Option<usize>> {
    let (rows, cols) = weights.shape();
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows <= cols {
        let cost: Vec<Vec<f64>> = (0..rows)
            .map(|r| (0..cols).map(|c| -weights[(r, c)]).collect())
            .collect();
        hungarian(&cost).into_iter().map(Some).collect()
    } else {
        let cost: Vec<Vec<f64>> = (0..cols)
            .map(|c| (0..rows).map(|r| -weights[(r, c)]).collect())
            .collect();
        let mut out = vec![None; rows];
        for (c, r) in hungarian(&cost).into_iter().enumerate() {
            out[r] = Some(c);
        }
        out
    }
}

/// Shortest-augmenting-path Hungarian method with potentials for an
/// `n x m` cost matrix, `n <= m`. Returns the column of each row.
/// Ties resolve toward the lowest column index during each scan.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let m = cost[0].len();
    debug_assert!(n <= m);

    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // p[j]: row (1-based) assigned to column j; p[0] is the row being inserted.
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}
