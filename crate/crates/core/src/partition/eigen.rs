//! Dense symmetric eigendecomposition by cyclic Jacobi rotations.

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub n: usize,
    pub values: Vec<f64>,
    /// Column `j` (stored row-major, `vectors[i * n + j]`) is the unit
    /// eigenvector for `values[j]`.
    pub vectors: Vec<f64>,
}

const MAX_SWEEPS: usize = 100;

impl SymmetricEigen {
    /// Decomposes the row-major `n x n` matrix `a`. Only the upper triangle
    /// is read.
    pub fn jacobi(a: &[f64], n: usize) -> Self {
        assert_eq!(a.len(), n * n, "matrix must be n x n");
        let mut a = a.to_vec();
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        let mut d: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
        let mut b = d.clone();
        let mut z = vec![0.0; n];

        for sweep in 0..MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
                .map(|(p, q)| a[p * n + q].abs())
                .sum();
            if off == 0.0 {
                break;
            }
            let thresh = if sweep < 3 { 0.2 * off / (n * n) as f64 } else { 0.0 };

            for p in 0..n.saturating_sub(1) {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    let g = 100.0 * apq.abs();
                    if sweep > 3 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                        a[p * n + q] = 0.0;
                        continue;
                    }
                    if apq.abs() <= thresh {
                        continue;
                    }
                    let h = d[q] - d[p];
                    let t = if h.abs() + g == h.abs() {
                        apq / h
                    } else {
                        let theta = 0.5 * h / apq;
                        let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                        if theta < 0.0 {
                            -t
                        } else {
                            t
                        }
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    let tau = s / (1.0 + c);
                    let h = t * apq;
                    z[p] -= h;
                    z[q] += h;
                    d[p] -= h;
                    d[q] += h;
                    a[p * n + q] = 0.0;

                    let rotate = |m: &mut [f64], i: usize, j: usize| {
                        let g = m[i];
                        let h = m[j];
                        m[i] = g - s * (h + g * tau);
                        m[j] = h + s * (g - h * tau);
                    };
                    for j in 0..p {
                        rotate(&mut a, j * n + p, j * n + q);
                    }
                    for j in p + 1..q {
                        rotate(&mut a, p * n + j, j * n + q);
                    }
                    for j in q + 1..n {
                        rotate(&mut a, p * n + j, q * n + j);
                    }
                    for j in 0..n {
                        rotate(&mut v, j * n + p, j * n + q);
                    }
                }
            }
            for i in 0..n {
                b[i] += z[i];
                d[i] = b[i];
                z[i] = 0.0;
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| d[x].total_cmp(&d[y]));
        let values = order.iter().map(|&j| d[j]).collect();
        let mut vectors = vec![0.0; n * n];
        for (new_j, &old_j) in order.iter().enumerate() {
            for i in 0..n {
                vectors[i * n + new_j] = v[i * n + old_j];
            }
        }
        Self { n, values, vectors }
    }

    pub fn vector(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.vectors[i * self.n + j]).collect()
    }
}
