//! Lloyd's k-means with k-means++ seeding and empty-cluster repair.

use rand::Rng;

const MAX_ITERS: usize = 100;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Clusters the row-major `points` (each `dim` wide) into `k` non-empty
/// groups. Requires `1 <= k <= points.len() / dim`.
pub fn kmeans(points: &[f64], dim: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let n = points.len() / dim;
    assert!(k >= 1 && k <= n, "k-means needs 1 <= k <= n");
    let point = |i: usize| &points[i * dim..(i + 1) * dim];

    let mut centroids = seed_plus_plus(points, dim, k, rng);
    let mut labels: Vec<usize> = Vec::new();
    for _ in 0..MAX_ITERS {
        let mut next: Vec<usize> = (0..n)
            .map(|i| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for c in 0..k {
                    let d = dist2(point(i), &centroids[c * dim..(c + 1) * dim]);
                    if d < best_d {
                        best_d = d;
                        best = c;
                    }
                }
                best
            })
            .collect();
        repair_empty(points, dim, k, &mut next, &mut centroids);
        if next == labels {
            break;
        }
        labels = next;
        centroids = means(points, dim, k, &labels);
    }
    labels
}

fn seed_plus_plus(points: &[f64], dim: usize, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = points.len() / dim;
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut nearest: Vec<f64> = (0..n).map(|i| dist2(point(i), point(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // All remaining mass sits on chosen centres; take any unused point.
            let unused: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            unused[rng.gen_range(0..unused.len())]
        };
        chosen.push(pick);
        for (i, w) in nearest.iter_mut().enumerate() {
            *w = w.min(dist2(point(i), point(pick)));
        }
    }
    chosen.iter().flat_map(|&i| point(i).to_vec()).collect()
}

fn means(points: &[f64], dim: usize, k: usize, labels: &[usize]) -> Vec<f64> {
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        for d in 0..dim {
            sums[c * dim + d] += points[i * dim + d];
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for d in 0..dim {
                sums[c * dim + d] /= counts[c] as f64;
            }
        }
    }
    sums
}

/// Fills each empty cluster with the point farthest from its centroid in the
/// currently largest cluster.
fn repair_empty(points: &[f64], dim: usize, k: usize, labels: &mut [usize], centroids: &mut Vec<f64>) {
    loop {
        let mut counts = vec![0usize; k];
        for &c in labels.iter() {
            counts[c] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let largest = (0..k).fold(0, |best, c| if counts[c] > counts[best] { c } else { best });
        *centroids = means(points, dim, k, labels);
        let centre = centroids[largest * dim..(largest + 1) * dim].to_vec();
        let mut far = usize::MAX;
        let mut far_d = -1.0;
        for (i, &c) in labels.iter().enumerate() {
            if c == largest {
                let d = dist2(&points[i * dim..(i + 1) * dim], &centre);
                if d > far_d {
                    far_d = d;
                    far = i;
                }
            }
        }
        labels[far] = empty;
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(&points[far * dim..(far + 1) * dim]);
    }
}
