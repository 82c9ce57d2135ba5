//! Lloyd's k-means with deterministic farthest-point seeding.

use crate::kernels::DenseMatrix;

pub const MAX_LLOYD_ITERS: usize = 100;
pub const CENTROID_MOVE_TOL: f64 = 1e-12;

/// Partition of the input rows into non-empty clusters.
///
/// Each label set is sorted ascending and the sets themselves are ordered by
/// their smallest member, so the result does not depend on center numbering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub label_sets: Vec<Vec<usize>>,
}

impl ClusterAssignment {
    pub fn n_nonempty(&self) -> usize {
        self.label_sets.len()
    }
}

fn dist2(points: &DenseMatrix, row: usize, center: &[f64]) -> f64 {
    center
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let d = points[(row, j)] - c;
            d * d
        })
        .sum()
}

fn row_vec(points: &DenseMatrix, row: usize) -> Vec<f64> {
    points.row(row).iter().copied().collect()
}

/// Cluster the rows of `points` into at most `k` groups.
///
/// The first center is row `seed mod n_rows`; each further center is the row
/// farthest from its nearest chosen center. Seeding stops early once every row
/// coincides with a center. Lloyd iterations run until assignments stop
/// changing, centroids move less than [`CENTROID_MOVE_TOL`], or
/// [`MAX_LLOYD_ITERS`] is reached.
pub fn kmeans(points: &DenseMatrix, k: usize, seed: u64) -> ClusterAssignment {
    let n = points.nrows();
    if n == 0 || k == 0 {
        return ClusterAssignment {
            label_sets: Vec::new(),
        };
    }

    let first = (seed % n as u64) as usize;
    let mut centers: Vec<Vec<f64>> = vec![row_vec(points, first)];
    let mut nearest: Vec<f64> = (0..n).map(|i| dist2(points, i, &centers[0])).collect();
    while centers.len() < k {
        let mut best = 0;
        let mut best_d = -1.0;
        for (i, &d) in nearest.iter().enumerate() {
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        if best_d <= 0.0 {
            break;
        }
        let c = row_vec(points, best);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(dist2(points, i, &c));
        }
        centers.push(c);
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = dist2(points, i, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if *label != best {
                *label = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }

        let dim = points.ncols();
        let mut sums = vec![vec![0.0; dim]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for j in 0..dim {
                sums[l][j] += points[(i, j)];
            }
        }
        let mut movement = 0.0_f64;
        for (c, center) in centers.iter_mut().enumerate() {
            // an empty cluster keeps its previous center
            if counts[c] == 0 {
                continue;
            }
            for j in 0..dim {
                let updated = sums[c][j] / counts[c] as f64;
                movement = movement.max((updated - center[j]).abs());
                center[j] = updated;
            }
        }
        if movement < CENTROID_MOVE_TOL {
            break;
        }
    }

    let mut sets: Vec<Vec<usize>> = vec![Vec::new(); centers.len()];
    for (i, &l) in labels.iter().enumerate() {
        sets[l].push(i);
    }
    let mut label_sets: Vec<Vec<usize>> = sets.into_iter().filter(|s| !s.is_empty()).collect();
    label_sets.sort_by_key(|s| s[0]);
    ClusterAssignment { label_sets }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_separated_groups() {
        let pts = DenseMatrix::from_row_slice(
            6,
            2,
            &[
                0.0, 0.0, 10.0, 10.0, 0.1, 0.0, 10.1, 9.9, 0.0, 0.2, 9.8, 10.0,
            ],
        );
        let a = kmeans(&pts, 2, 0);
        assert_eq!(a.label_sets, vec![vec![0, 2, 4], vec![1, 3, 5]]);
    }

    #[test]
    fn k_at_least_rows_gives_singletons() {
        let pts = DenseMatrix::from_row_slice(3, 1, &[1.0, 2.0, 4.0]);
        let a = kmeans(&pts, 5, 3);
        assert_eq!(a.n_nonempty(), 3);
        assert_eq!(a.label_sets, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn identical_rows_form_one_cluster() {
        let pts = DenseMatrix::from_element(4, 3, 0.5);
        let a = kmeans(&pts, 3, 1);
        assert_eq!(a.label_sets, vec![vec![0, 1, 2, 3]]);
    }

    proptest! {
        #[test]
        fn partitions_and_is_deterministic(
            rows in 1usize..30,
            cols in 1usize..6,
            k in 1usize..8,
            seed in 0u64..1000,
            data in proptest::collection::vec(-1.0f64..1.0, 180),
        ) {
            let pts = DenseMatrix::from_fn(rows, cols, |i, j| data[(i * cols + j) % data.len()]);
            let a = kmeans(&pts, k, seed);
            let b = kmeans(&pts, k, seed);
            prop_assert_eq!(&a, &b);
            prop_assert!(a.n_nonempty() <= k);
            let mut all: Vec<usize> = a.label_sets.iter().flatten().copied().collect();
            all.sort();
            prop_assert_eq!(all, (0..rows).collect::<Vec<_>>());
        }
    }
}
