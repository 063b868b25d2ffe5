//! Robust summary statistics shared by the quality gate and channel tests.

use crate::Scalar;

/// Linear-interpolation quantile, `q` in [0, 1]. Copies and sorts.
pub fn quantile<S: Scalar>(xs: &[S], q: f64) -> S {
    assert!(!xs.is_empty(), "quantile of empty slice");
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        let frac = S::from_f64_c(pos - lo as f64);
        v[lo] + (v[hi] - v[lo]) * frac
    }
}

pub fn median<S: Scalar>(xs: &[S]) -> S {
    quantile(xs, 0.5)
}

/// IQR-based robust standard deviation: `0.7413 * (q75 - q25)`.
pub fn robust_std<S: Scalar>(xs: &[S]) -> S {
    S::from_f64_c(0.7413) * (quantile(xs, 0.75) - quantile(xs, 0.25))
}

/// Plain standard deviation (population, ddof = 0).
pub fn std_dev<S: Scalar>(xs: &[S]) -> S {
    let n = S::from_usize(xs.len().max(1)).unwrap();
    let mean = xs.iter().copied().sum::<S>() / n;
    let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
    var.sqrt()
}

/// Robust z-scores across a set of per-channel values:
/// `(x - median) / (0.7413 * IQR)`. A zero IQR yields zero scores.
pub fn robust_z<S: Scalar>(xs: &[S]) -> Vec<S> {
    let med = median(xs);
    let scale = robust_std(xs);
    if scale <= S::zero() {
        return vec![S::zero(); xs.len()];
    }
    xs.iter().map(|&v| (v - med) / scale).collect()
}

/// Pearson correlation coefficient; zero when either side is constant.
pub fn pearson<S: Scalar>(a: &[S], b: &[S]) -> S {
    assert_eq!(a.len(), b.len());
    let n = S::from_usize(a.len().max(1)).unwrap();
    let ma = a.iter().copied().sum::<S>() / n;
    let mb = b.iter().copied().sum::<S>() / n;
    let mut cov = S::zero();
    let mut va = S::zero();
    let mut vb = S::zero();
    for (&x, &y) in a.iter().zip(b.iter()) {
        let dx = x - ma;
        let dy = y - mb;
        cov = cov + dx * dy;
        va = va + dx * dx;
        vb = vb + dy * dy;
    }
    if va <= S::zero() || vb <= S::zero() {
        return S::zero();
    }
    cov / (va.sqrt() * vb.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let xs = vec![1.0_f64, 2.0, 3.0, 4.0];
        assert!((quantile(&xs, 0.0) - 1.0).abs() < 1e-12);
        assert!((quantile(&xs, 1.0) - 4.0).abs() < 1e-12);
        assert!((quantile(&xs, 0.5) - 2.5).abs() < 1e-12);
        assert!((median(&xs) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn robust_std_matches_gaussian_convention() {
        // for a standard normal, IQR ~ 1.349 so 0.7413 * IQR ~ 1
        let q75 = 0.6744897501960817_f64;
        let xs: Vec<f64> = vec![-q75, 0.0, q75]; // quartiles at +-q75
        let rs = robust_std(&xs);
        assert!((rs - 0.7413 * q75).abs() < 1e-12);
    }

    #[test]
    fn pearson_of_identical_and_inverted() {
        let a = vec![1.0_f64, 2.0, 3.0, 5.0];
        let b: Vec<f64> = a.iter().map(|v| -2.0 * v + 1.0).collect();
        assert!((pearson(&a, &a) - 1.0).abs() < 1e-12);
        assert!((pearson(&a, &b) + 1.0).abs() < 1e-12);
        let c = vec![7.0_f64; 4];
        assert_eq!(pearson(&a, &c), 0.0);
    }

    #[test]
    fn robust_z_centers_on_median() {
        let xs = vec![10.0_f64, 10.5, 9.5, 11.0, 9.0, 200.0];
        let z = robust_z(&xs);
        assert!(z[5] > 5.0, "outlier z {}", z[5]);
        assert!(z[0].abs() < 1.0);
    }
}
