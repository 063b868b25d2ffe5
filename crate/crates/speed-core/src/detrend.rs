//! Robust polynomial detrending.
//!
//! Iteratively reweighted least squares: fit a polynomial, z-score the
//! residuals, zero the weights of outlier samples, refit. Outlier-heavy
//! samples stop influencing the trend estimate after the first pass, which
//! keeps single large artifacts from tilting the fit.

use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum DetrendError {
    #[error("all samples were rejected as outliers; no trend fit possible")]
    DegenerateFit,
    #[error("signal too short for order-{order} detrend: {len} samples")]
    SignalTooShort { len: usize, order: usize },
}

/// Removes a robustly fitted polynomial trend of the given order.
///
/// `n_iter` reweighting rounds, samples with residual |z| > `z_thresh`
/// excluded from the next fit. Returns the detrended signal.
pub fn robust_detrend<S: Scalar>(
    x: &[S],
    order: usize,
    n_iter: usize,
    z_thresh: f64,
) -> Result<Vec<S>, DetrendError> {
    let n = x.len();
    if n <= 10 * (order + 1) {
        return Err(DetrendError::SignalTooShort { len: n, order });
    }
    // polynomial basis on t scaled to [-1, 1] for conditioning
    let n_basis = order + 1;
    let mut basis = vec![vec![S::zero(); n]; n_basis];
    for i in 0..n {
        let t = S::from_f64_c(2.0 * i as f64 / (n - 1) as f64 - 1.0);
        let mut p = S::one();
        for row in basis.iter_mut() {
            row[i] = p;
            p = p * t;
        }
    }

    let mut weights = vec![true; n];
    let mut fit = vec![S::zero(); n];
    for _ in 0..n_iter.max(1) {
        let n_active = weights.iter().filter(|&&w| w).count();
        if n_active < n_basis {
            return Err(DetrendError::DegenerateFit);
        }
        // weighted normal equations
        let mut ata = ndarray::Array2::<S>::zeros((n_basis, n_basis));
        let mut atb = ndarray::Array2::<S>::zeros((n_basis, 1));
        for i in 0..n {
            if !weights[i] {
                continue;
            }
            for r in 0..n_basis {
                for c in 0..=r {
                    ata[[r, c]] = ata[[r, c]] + basis[r][i] * basis[c][i];
                }
                atb[[r, 0]] = atb[[r, 0]] + basis[r][i] * x[i];
            }
        }
        for r in 0..n_basis {
            for c in (r + 1)..n_basis {
                ata[[r, c]] = ata[[c, r]];
            }
        }
        let coef = crate::linalg::solve(&ata, &atb).map_err(|_| DetrendError::DegenerateFit)?;
        for i in 0..n {
            let mut v = S::zero();
            for r in 0..n_basis {
                v = v + coef[[r, 0]] * basis[r][i];
            }
            fit[i] = v;
        }
        // z-score residuals over the active samples and drop outliers
        let mut mean = S::zero();
        for i in 0..n {
            if weights[i] {
                mean = mean + (x[i] - fit[i]);
            }
        }
        mean = mean / S::from_usize(n_active).unwrap();
        let mut var = S::zero();
        for i in 0..n {
            if weights[i] {
                let d = x[i] - fit[i] - mean;
                var = var + d * d;
            }
        }
        let std = (var / S::from_usize(n_active).unwrap()).sqrt();
        if std <= S::zero() {
            break; // perfect fit
        }
        let thresh = S::from_f64_c(z_thresh);
        for i in 0..n {
            let z = ((x[i] - fit[i] - mean) / std).abs();
            weights[i] = z <= thresh;
        }
    }
    Ok(x.iter().zip(fit.iter()).map(|(&v, &f)| v - f).collect())
}
