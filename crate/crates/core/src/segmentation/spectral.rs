//! Spectral machinery: normalized symmetric Laplacian, eigengap model-order
//! estimate, and the deterministic column-pivoted-QR cluster assignment.

use nalgebra::{DMatrix, DVector};

/// Eigenvalues below this count as numerically zero (connected components).
pub const EIGEN_ZERO_TOL: f64 = 1e-8;

/// L_sym = I - D^{-1/2} A D^{-1/2}.
///
/// Isolated nodes (zero degree) get an all-zero row so each contributes a
/// zero eigenvalue, keeping "number of zero eigenvalues = number of
/// connected components" true for any graph.
pub fn normalized_laplacian(adjacency: &DMatrix<f64>) -> DMatrix<f64> {
    let n = adjacency.nrows();
    let mut inv_sqrt_deg = DVector::zeros(n);
    for i in 0..n {
        let d: f64 = adjacency.row(i).sum();
        inv_sqrt_deg[i] = if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 };
    }
    let mut lap = DMatrix::zeros(n, n);
    for i in 0..n {
        if inv_sqrt_deg[i] > 0.0 {
            lap[(i, i)] = 1.0;
        }
        for j in 0..n {
            if adjacency[(i, j)] != 0.0 {
                lap[(i, j)] -= inv_sqrt_deg[i] * adjacency[(i, j)] * inv_sqrt_deg[j];
            }
        }
    }
    lap
}

/// Ascending eigenvalues and matching eigenvectors (columns) of a symmetric
/// matrix.
pub fn sorted_symmetric_eigen(mat: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = mat.nrows();
    let eig = nalgebra::SymmetricEigen::new(mat.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Index of the largest gap in the ascending spectrum, searched over
/// `1 <= i < min(n, k_max)`; ties resolve to the smallest index.
pub fn estimate_k_eigengap(eigenvalues: &[f64], k_max: usize) -> usize {
    let n = eigenvalues.len();
    if n < 2 {
        return 1;
    }
    let upper = n.min(k_max);
    let mut best = (1, f64::NEG_INFINITY);
    for i in 1..upper {
        let gap = eigenvalues[i] - eigenvalues[i - 1];
        if gap > best.1 {
            best = (i, gap);
        }
    }
    best.0
}

/// Second-smallest eigenvalue of the normalized Laplacian.
pub fn fiedler_value(adjacency: &DMatrix<f64>) -> Option<f64> {
    if adjacency.nrows() < 2 {
        return None;
    }
    let lap = normalized_laplacian(adjacency);
    let (values, _) = sorted_symmetric_eigen(&lap);
    Some(values[1])
}

/// How the CPQR assignment resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpqrPath {
    /// Labels from `|U (U_J)^{-1}|` row argmax.
    Inverse,
    /// `U_J` was singular; labels fell back to the nearest pivot row.
    NearestPivot,
}

/// Greedy column-pivoted QR pivot selection on the columns of `mat`:
/// repeatedly takes the column with the largest residual norm (ties to the
/// lowest index) and deflates the rest.
fn cpqr_pivots(mat: &DMatrix<f64>, k: usize) -> Vec<usize> {
    let mut cols: Vec<DVector<f64>> = (0..mat.ncols()).map(|j| mat.column(j).into()).collect();
    let mut pivots = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best = (usize::MAX, -1.0);
        for (j, c) in cols.iter().enumerate() {
            if pivots.contains(&j) {
                continue;
            }
            let norm = c.norm();
            if norm > best.1 + 1e-15 {
                best = (j, norm);
            }
        }
        if best.0 == usize::MAX {
            break;
        }
        pivots.push(best.0);
        let q = cols[best.0].clone();
        let qn = q.norm();
        if qn > 1e-15 {
            let q = q / qn;
            for (j, c) in cols.iter_mut().enumerate() {
                if j != best.0 {
                    let proj = q.dot(c);
                    *c -= &q * proj;
                }
            }
        }
    }
    pivots
}

/// Deterministic cluster assignment from the first `k` eigenvectors.
///
/// Column-pivoted QR of `U^T` selects `k` pivot rows J; the label of row i
/// is the argmax over j of `|U (U_J)^{-1}|_{ij}` with ties resolved to the
/// lowest j.
pub fn cpqr_assign(eigvecs: &DMatrix<f64>, k: usize) -> (Vec<usize>, CpqrPath) {
    let n = eigvecs.nrows();
    if k <= 1 || n == 0 {
        return (vec![0; n], CpqrPath::Inverse);
    }
    let ut = eigvecs.transpose();
    let pivots = cpqr_pivots(&ut, k);
    let mut uj = DMatrix::zeros(k, k);
    for (row, &p) in pivots.iter().enumerate() {
        for c in 0..k {
            uj[(row, c)] = eigvecs[(p, c)];
        }
    }
    if let Some(uj_inv) = uj.clone().try_inverse() {
        let scores = eigvecs * uj_inv;
        let labels = (0..n)
            .map(|i| {
                let mut best = (0usize, f64::NEG_INFINITY);
                for j in 0..k {
                    let v = scores[(i, j)].abs();
                    if v > best.1 + 1e-15 {
                        best = (j, v);
                    }
                }
                best.0
            })
            .collect();
        (labels, CpqrPath::Inverse)
    } else {
        // Nearest pivot row in eigenvector space.
        let labels = (0..n)
            .map(|i| {
                let mut best = (0usize, f64::INFINITY);
                for (j, &p) in pivots.iter().enumerate() {
                    let mut d = 0.0;
                    for c in 0..k {
                        d += (eigvecs[(i, c)] - eigvecs[(p, c)]).powi(2);
                    }
                    if d < best.1 - 1e-15 {
                        best = (j, d);
                    }
                }
                best.0
            })
            .collect();
        (labels, CpqrPath::NearestPivot)
    }
}

/// Normalized cut of a labeled partition: sum over groups of
/// cut(S, V \ S) / vol(S). Infinite when a group has zero volume.
pub fn normalized_cut(adjacency: &DMatrix<f64>, labels: &[usize], k: usize) -> f64 {
    let n = adjacency.nrows();
    let mut cut = vec![0.0; k];
    let mut vol = vec![0.0; k];
    for i in 0..n {
        for j in 0..n {
            let w = adjacency[(i, j)];
            if w == 0.0 {
                continue;
            }
            vol[labels[i]] += w;
            if labels[i] != labels[j] {
                cut[labels[i]] += w;
            }
        }
    }
    (0..k)
        .map(|g| {
            if vol[g] > 0.0 {
                cut[g] / vol[g]
            } else {
                f64::INFINITY
            }
        })
        .sum()
}
