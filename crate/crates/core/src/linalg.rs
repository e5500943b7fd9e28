//! Thin wrappers over nalgebra's symmetric eigensolver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenpairs of a symmetric matrix, sorted by ascending eigenvalue.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: DMatrix<f64>,
}

pub fn symmetric_eigen(m: &DMatrix<f64>) -> SortedEigen {
    let n = m.nrows();
    if n == 0 {
        return SortedEigen {
            values: vec![],
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let sym = 0.5 * (m + m.transpose());
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    SortedEigen { values, vectors }
}

/// Spectral projector onto the span of eigenvectors whose eigenvalue
/// satisfies `keep`.
pub fn spectral_projector(eig: &SortedEigen, keep: impl Fn(f64) -> bool) -> DMatrix<f64> {
    let n = eig.values.len();
    let mut p = DMatrix::zeros(n, n);
    for (k, &v) in eig.values.iter().enumerate() {
        if keep(v) {
            let col = eig.vectors.column(k);
            p += col * col.transpose();
        }
    }
    p
}

/// Numerical kernel split of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct KernelSplit {
    /// Orthonormal basis of the numerical kernel.
    pub kernel: Vec<DVector<f64>>,
    /// Orthonormal basis of the complement (range).
    pub range: Vec<DVector<f64>>,
    /// Singular values (absolute eigenvalues), descending.
    pub singular_values: Vec<f64>,
    pub cutoff: f64,
}

/// Splits `m` into kernel and range with cutoff `rel_tol * sigma_max`.
///
/// Fails with `IllConditioned` when some singular value lies within a
/// factor 10 of the cutoff on either side, so the rank is ambiguous.
pub fn kernel_split(m: &DMatrix<f64>, rel_tol: f64) -> Result<KernelSplit> {
    let eig = symmetric_eigen(m);
    let n = eig.values.len();
    let sigma_max = eig.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let cutoff = rel_tol * sigma_max;
    let mut kernel = Vec::new();
    let mut range = Vec::new();
    for k in 0..n {
        let s = eig.values[k].abs();
        if sigma_max > 0.0 && s > cutoff / 10.0 && s <= cutoff * 10.0 {
            return Err(Error::IllConditioned { sigma: s, cutoff });
        }
        let v = eig.vectors.column(k).into_owned();
        if s <= cutoff {
            kernel.push(v);
        } else {
            range.push(v);
        }
    }
    let mut singular_values: Vec<f64> = eig.values.iter().map(|v| v.abs()).collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    Ok(KernelSplit {
        kernel,
        range,
        singular_values,
        cutoff,
    })
}

/// Numerical rank of a set of vectors (columns), relative tolerance `tol`.
pub fn rank_of(vectors: &[DVector<f64>], tol: f64) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    let m = DMatrix::from_columns(vectors);
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > tol * smax).count()
}
