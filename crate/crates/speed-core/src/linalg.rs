//! Small dense linear algebra for channel-space matrices.
//!
//! Everything here operates on matrices no larger than a few dozen rows
//! (covariances and spline systems over electrode sets), so simple dense
//! algorithms — cyclic Jacobi for symmetric eigenproblems, Cholesky,
//! Gaussian elimination — are accurate and fast enough.

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is singular or not positive definite")]
    Singular,
    #[error("matrix dimensions do not match: {0}")]
    Shape(String),
}

/// Eigen decomposition of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymEigen<S> {
    pub values: Array1<S>,
    /// Column `j` is the eigenvector of `values[j]`.
    pub vectors: Array2<S>,
}

/// Cyclic Jacobi eigensolver for a symmetric matrix.
///
/// Sorts eigenpairs by descending eigenvalue. Input asymmetry beyond
/// round-off is the caller's bug; only the lower triangle is trusted.
pub fn sym_eigen<S: Scalar>(a: &Array2<S>) -> Result<SymEigen<S>, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::Shape(format!("{}x{}", a.nrows(), a.ncols())));
    }
    let mut m = a.clone();
    // symmetrize from the lower triangle
    for i in 0..n {
        for j in 0..i {
            let v = (m[[i, j]] + m[[j, i]]) * S::from_f64_c(0.5);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
    let mut v = Array2::<S>::eye(n);
    let eps = S::epsilon() * S::from_f64_c(16.0);
    for _sweep in 0..64 {
        let mut off = S::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off = off + m[[i, j]] * m[[i, j]];
            }
        }
        let scale = (0..n).map(|i| m[[i, i]].abs()).fold(S::zero(), S::max);
        if off.sqrt() <= eps * (scale + S::epsilon()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= eps * (m[[p, p]].abs() + m[[q, q]].abs() + S::epsilon()) {
                    continue;
                }
                // Jacobi rotation annihilating m[p,q]
                let theta = (m[[q, q]] - m[[p, p]]) / (S::from_f64_c(2.0) * apq);
                let t = {
                    let sgn = if theta >= S::zero() { S::one() } else { -S::one() };
                    sgn / (theta.abs() + (theta * theta + S::one()).sqrt())
                };
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        m[[j, j]]
            .partial_cmp(&m[[i, i]])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = Array1::from_iter(idx.iter().map(|&i| m[[i, i]]));
    let mut vectors = Array2::<S>::zeros((n, n));
    for (col, &i) in idx.iter().enumerate() {
        for r in 0..n {
            vectors[[r, col]] = v[[r, i]];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky<S: Scalar>(a: &Array2<S>) -> Result<Array2<S>, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::Shape(format!("{}x{}", a.nrows(), a.ncols())));
    }
    let mut l = Array2::<S>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum = sum - l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= S::zero() {
                    return Err(LinalgError::Singular);
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solves `L x = b` for lower-triangular `L`, one column of `b` at a time.
pub fn solve_lower<S: Scalar>(l: &Array2<S>, b: &Array2<S>) -> Array2<S> {
    let n = l.nrows();
    let mut x = b.clone();
    for col in 0..b.ncols() {
        for i in 0..n {
            let mut sum = x[[i, col]];
            for k in 0..i {
                sum = sum - l[[i, k]] * x[[k, col]];
            }
            x[[i, col]] = sum / l[[i, i]];
        }
    }
    x
}

/// Solves `L^T x = b` for lower-triangular `L`.
pub fn solve_lower_t<S: Scalar>(l: &Array2<S>, b: &Array2<S>) -> Array2<S> {
    let n = l.nrows();
    let mut x = b.clone();
    for col in 0..b.ncols() {
        for i in (0..n).rev() {
            let mut sum = x[[i, col]];
            for k in (i + 1)..n {
                sum = sum - l[[k, i]] * x[[k, col]];
            }
            x[[i, col]] = sum / l[[i, i]];
        }
    }
    x
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
pub fn solve<S: Scalar>(a: &Array2<S>, b: &Array2<S>) -> Result<Array2<S>, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(LinalgError::Shape(format!(
            "A {}x{}, B {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let mut m = a.clone();
    let mut x = b.clone();
    let cols = x.ncols();
    for k in 0..n {
        let mut piv = k;
        let mut best = m[[k, k]].abs();
        for r in (k + 1)..n {
            if m[[r, k]].abs() > best {
                best = m[[r, k]].abs();
                piv = r;
            }
        }
        if best < S::from_f64_c(1e-300) || !best.is_finite() {
            return Err(LinalgError::Singular);
        }
        if piv != k {
            for c in 0..n {
                m.swap([k, c], [piv, c]);
            }
            for c in 0..cols {
                x.swap([k, c], [piv, c]);
            }
        }
        for r in (k + 1)..n {
            let f = m[[r, k]] / m[[k, k]];
            if f == S::zero() {
                continue;
            }
            for c in k..n {
                let v = m[[k, c]];
                m[[r, c]] = m[[r, c]] - f * v;
            }
            for c in 0..cols {
                let v = x[[k, c]];
                x[[r, c]] = x[[r, c]] - f * v;
            }
        }
    }
    for k in (0..n).rev() {
        for c in 0..cols {
            let mut sum = x[[k, c]];
            for j in (k + 1)..n {
                sum = sum - m[[k, j]] * x[[j, c]];
            }
            x[[k, c]] = sum / m[[k, k]];
        }
    }
    Ok(x)
}

/// Inverse via [`solve`] against the identity.
pub fn inverse<S: Scalar>(a: &Array2<S>) -> Result<Array2<S>, LinalgError> {
    solve(a, &Array2::eye(a.nrows()))
}

/// Row-wise covariance of `x` (rows are variables, columns observations),
/// normalized by the sample count.
pub fn covariance<S: Scalar>(x: &Array2<S>) -> Array2<S> {
    let (c, n) = (x.nrows(), x.ncols());
    let inv_n = S::one() / S::from_usize(n.max(1)).unwrap();
    let mut centered = x.clone();
    for mut row in centered.rows_mut() {
        let mean = row.iter().copied().sum::<S>() * inv_n;
        row.mapv_inplace(|v| v - mean);
    }
    let mut cov = Array2::<S>::zeros((c, c));
    for i in 0..c {
        for j in 0..=i {
            let mut acc = S::zero();
            for k in 0..n {
                acc = acc + centered[[i, k]] * centered[[j, k]];
            }
            let v = acc * inv_n;
            cov[[i, j]] = v;
            cov[[j, i]] = v;
        }
    }
    cov
}

/// Generalized symmetric eigenproblem `B v = lambda A v` with `A` positive
/// definite. Eigenvectors are returned A-orthonormal (`v_i^T A v_j = delta`),
/// sorted by descending eigenvalue.
pub fn generalized_sym_eigen<S: Scalar>(
    b: &Array2<S>,
    a: &Array2<S>,
) -> Result<SymEigen<S>, LinalgError> {
    let l = cholesky(a)?;
    // M = L^-1 B L^-T
    let tmp = solve_lower(&l, b);
    let m = solve_lower(&l, &tmp.t().to_owned());
    let eig = sym_eigen(&m)?;
    let vectors = solve_lower_t(&l, &eig.vectors);
    Ok(SymEigen {
        values: eig.values,
        vectors,
    })
}
