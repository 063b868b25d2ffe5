//! Shared test oracles, independent of the library's DSP paths.

#![allow(dead_code)]

use ndarray::Array2;

/// Least-squares amplitude of a sinusoid at a known frequency.
pub fn fit_sine_amp(x: &[f64], fs: f64, freq: f64) -> f64 {
    let (mut ss, mut sc, mut css, mut ccc, mut csc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        let ph = std::f64::consts::TAU * freq * i as f64 / fs;
        let (s, c) = (ph.sin(), ph.cos());
        ss += s * v;
        sc += c * v;
        css += s * s;
        ccc += c * c;
        csc += s * c;
    }
    let det = css * ccc - csc * csc;
    if det.abs() < 1e-12 {
        return 0.0;
    }
    let a = (ss * ccc - sc * csc) / det;
    let b = (sc * css - ss * csc) / det;
    (a * a + b * b).sqrt()
}

/// Dense-scan frequency estimate: the frequency near `f_guess` whose
/// least-squares sinusoid fit captures the most energy.
pub fn estimate_sine_freq(x: &[f64], fs: f64, f_guess: f64, rel_span: f64, steps: usize) -> f64 {
    let mut best = (f_guess, -1.0);
    for k in 0..=steps {
        let f = f_guess * (1.0 - rel_span + 2.0 * rel_span * k as f64 / steps as f64);
        let amp = fit_sine_amp(x, fs, f);
        if amp > best.1 {
            best = (f, amp);
        }
    }
    best.0
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Columns of `m` orthonormalized by modified Gram-Schmidt.
pub fn orthonormal_basis(m: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = (m.nrows(), m.ncols());
    let mut q = m.clone();
    for j in 0..cols {
        for k in 0..j {
            let dot: f64 = (0..rows).map(|r| q[[r, j]] * q[[r, k]]).sum();
            for r in 0..rows {
                q[[r, j]] -= dot * q[[r, k]];
            }
        }
        let norm: f64 = (0..rows).map(|r| q[[r, j]] * q[[r, j]]).sum::<f64>().sqrt();
        assert!(norm > 1e-12, "degenerate basis column {j}");
        for r in 0..rows {
            q[[r, j]] /= norm;
        }
    }
    q
}

/// Principal angles (radians) between the column spaces of `a` and `b`,
/// via the eigenvalues of (Qa^T Qb)(Qb^T Qa).
pub fn principal_angles(a: &Array2<f64>, b: &Array2<f64>) -> Vec<f64> {
    let qa = orthonormal_basis(a);
    let qb = orthonormal_basis(b);
    let m = qa.t().dot(&qb);
    let mtm = m.dot(&m.t());
    let eig = speed_core::linalg::sym_eigen(&mtm).expect("symmetric eigen");
    eig.values
        .iter()
        .map(|&v| v.clamp(0.0, 1.0).sqrt().acos())
        .collect()
}

/// Deterministic uniform(-0.5, 0.5) stream for test data.
pub fn cheap_rng(seed: u64) -> impl FnMut() -> f64 {
    let mut state = seed;
    move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }
}

/// Relative Frobenius distance between two matrices.
pub fn rel_frobenius(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    num / den.max(1e-30)
}
