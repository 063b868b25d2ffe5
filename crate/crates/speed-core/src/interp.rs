//! Spherical-spline interpolation of scalp potentials.
//!
//! The kernel is the Legendre series
//! `g(c) = (1/4pi) sum_{n=1}^{N} (2n+1) / (n(n+1))^m * P_n(c)`;
//! interpolation solves the minimum-norm spline system with a constant
//! term, so constant fields are reproduced exactly (every weight row sums
//! to one).

use std::collections::BTreeSet;

use ndarray::Array2;
use thiserror::Error;

use crate::channels::{ChannelInfo, Montage};
use crate::linalg;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum InterpError {
    #[error("spline system is singular")]
    SingularSystem,
    #[error("need at least {need} source electrodes, found {found}")]
    TooFewSources { need: usize, found: usize },
    #[error("electrode {0} has no montage position")]
    MissingPosition(String),
}

/// Spline stiffness and series truncation.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SplineParams {
    pub stiffness: usize,
    pub n_terms: usize,
    pub lambda: f64,
}

impl Default for SplineParams {
    fn default() -> Self {
        // lambda large enough to stabilize the solve, small enough that a
        // target coincident with a source reproduces it within 1%
        Self {
            stiffness: 4,
            n_terms: 50,
            lambda: 1e-8,
        }
    }
}

/// Legendre-series kernel evaluated at a cosine of the inter-electrode
/// angle, via the stable three-term recurrence.
pub fn legendre_g<S: Scalar>(cos_angle: S, stiffness: usize, n_terms: usize) -> S {
    let c = cos_angle.min(S::one()).max(-S::one());
    let mut p_prev = S::one(); // P_0
    let mut p = c; // P_1
    let mut acc = S::zero();
    for n in 1..=n_terms {
        if n > 1 {
            let nf = S::from_usize(n).unwrap();
            let next = ((S::from_f64_c(2.0) * nf - S::one()) * c * p
                - (nf - S::one()) * p_prev)
                / nf;
            p_prev = p;
            p = next;
        }
        let nn = (n * (n + 1)) as f64;
        let coeff = (2 * n + 1) as f64 / nn.powi(stiffness as i32);
        acc = acc + S::from_f64_c(coeff) * p;
    }
    acc / S::from_f64_c(4.0 * std::f64::consts::PI)
}

/// Interpolation weights mapping source-electrode values to targets.
#[derive(Debug, Clone)]
pub struct InterpolationMatrix<S> {
    /// targets-by-sources weights.
    pub weights: Array2<S>,
    pub source_names: Vec<String>,
    pub target_names: Vec<String>,
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Raw spline weights for unit-sphere positions, targets-by-sources.
pub fn spline_weights<S: Scalar>(
    sources: &[[f64; 3]],
    targets: &[[f64; 3]],
    params: &SplineParams,
) -> Result<Array2<S>, InterpError> {
    let ns = sources.len();
    if ns < 4 {
        return Err(InterpError::TooFewSources { need: 4, found: ns });
    }
    // bordered system [[G + lambda I, 1], [1^T, 0]]
    let mut a = Array2::<S>::zeros((ns + 1, ns + 1));
    for i in 0..ns {
        for j in 0..ns {
            let g = legendre_g(
                S::from_f64_c(dot3(sources[i], sources[j])),
                params.stiffness,
                params.n_terms,
            );
            a[[i, j]] = g;
        }
        a[[i, i]] = a[[i, i]] + S::from_f64_c(params.lambda);
        a[[i, ns]] = S::one();
        a[[ns, i]] = S::one();
    }
    // right-hand side: identity over sources, zero constraint row
    let mut rhs = Array2::<S>::zeros((ns + 1, ns));
    for i in 0..ns {
        rhs[[i, i]] = S::one();
    }
    let sol = linalg::solve(&a, &rhs).map_err(|_| InterpError::SingularSystem)?;

    let nt = targets.len();
    let mut weights = Array2::<S>::zeros((nt, ns));
    for t in 0..nt {
        for s in 0..ns {
            // w[t][s] = sum_k Gt[t][k] * C[k][s] + d[s]
            let mut acc = sol[[ns, s]];
            for k in 0..ns {
                let gt = legendre_g(
                    S::from_f64_c(dot3(targets[t], sources[k])),
                    params.stiffness,
                    params.n_terms,
                );
                acc = acc + gt * sol[[k, s]];
            }
            weights[[t, s]] = acc;
        }
    }
    Ok(weights)
}

/// Builds a named interpolation matrix from source to target electrodes.
pub fn build_interp_matrix<S: Scalar>(
    sources: &[(String, [f64; 3])],
    targets: &[(String, [f64; 3])],
    params: &SplineParams,
) -> Result<InterpolationMatrix<S>, InterpError> {
    let src_pos: Vec<[f64; 3]> = sources.iter().map(|(_, p)| *p).collect();
    let tgt_pos: Vec<[f64; 3]> = targets.iter().map(|(_, p)| *p).collect();
    let weights = spline_weights(&src_pos, &tgt_pos, params)?;
    Ok(InterpolationMatrix {
        weights,
        source_names: sources.iter().map(|(n, _)| n.clone()).collect(),
        target_names: targets.iter().map(|(n, _)| n.clone()).collect(),
    })
}

/// What `finalize_channels` changed, for the log.
#[derive(Debug, Clone, Default)]
pub struct FinalizeReport {
    pub interpolated: Vec<String>,
    pub dropped_extra: Vec<String>,
}

/// Reorders onto the montage target order, interpolating missing or bad
/// target channels from the good present ones and dropping extras.
/// Good target channels pass through bit-identically.
pub fn finalize_channels<S: Scalar>(
    data: &Array2<S>,
    present: &[ChannelInfo],
    bad: &BTreeSet<String>,
    montage: &Montage,
    params: &SplineParams,
) -> Result<(Array2<S>, FinalizeReport), InterpError> {
    assert_eq!(data.nrows(), present.len());
    let mut report = FinalizeReport::default();

    // good present channels with montage positions are the spline sources
    let mut sources: Vec<(String, [f64; 3])> = Vec::new();
    let mut source_rows: Vec<usize> = Vec::new();
    for (row, ch) in present.iter().enumerate() {
        let name = ch.name().to_string();
        if bad.contains(&name) {
            continue;
        }
        let Some(pos) = montage.position(&name) else {
            continue;
        };
        sources.push((name, pos));
        source_rows.push(row);
    }
    if sources.len() < 4 {
        return Err(InterpError::TooFewSources {
            need: 4,
            found: sources.len(),
        });
    }

    let target_set: BTreeSet<&str> = montage.target_order.iter().map(|s| s.as_str()).collect();
    for ch in present {
        if !target_set.contains(ch.name()) {
            report.dropped_extra.push(ch.name().to_string());
        }
    }

    // targets missing from the good sources get interpolated in one solve
    let mut missing: Vec<(String, [f64; 3])> = Vec::new();
    for name in &montage.target_order {
        if !sources.iter().any(|(s, _)| s == name) {
            let pos = montage
                .position(name)
                .ok_or_else(|| InterpError::MissingPosition(name.clone()))?;
            missing.push((name.clone(), pos));
        }
    }
    let interp = if missing.is_empty() {
        None
    } else {
        Some(build_interp_matrix::<S>(&sources, &missing, params)?)
    };

    let n = data.ncols();
    let mut out = Array2::<S>::zeros((montage.target_order.len(), n));
    for (out_row, name) in montage.target_order.iter().enumerate() {
        if let Some(src_idx) = sources.iter().position(|(s, _)| s == name) {
            out.row_mut(out_row).assign(&data.row(source_rows[src_idx]));
        } else {
            let m = interp.as_ref().expect("missing targets imply a matrix");
            let t_idx = m
                .target_names
                .iter()
                .position(|t| t == name)
                .expect("every missing target is in the matrix");
            for col in 0..n {
                let mut acc = S::zero();
                for (s_idx, &src_row) in source_rows.iter().enumerate() {
                    acc = acc + m.weights[[t_idx, s_idx]] * data[[src_row, col]];
                }
                out[[out_row, col]] = acc;
            }
            report.interpolated.push(name.clone());
        }
    }
    Ok((out, report))
}
