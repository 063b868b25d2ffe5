//! Source-recovery oracles for the ICA stage.

mod common;

use common::{cheap_rng, rel_frobenius};
use ndarray::Array2;
use speed_core::ica::{
    amari_index, exclude_and_reconstruct, extended_infomax, ic_features, whiten, IcClass, IcLabel,
    InfomaxOptions,
};

/// Unit-variance Laplacian samples (super-Gaussian).
fn laplacian(rnd: &mut impl FnMut() -> f64) -> f64 {
    let u = rnd() * 2.0; // uniform(-1, 1)
    let b = 1.0 / 2.0_f64.sqrt();
    -b * u.signum() * (1.0 - u.abs()).max(1e-12).ln()
}

/// Unit-variance uniform samples (sub-Gaussian).
fn uniform(rnd: &mut impl FnMut() -> f64) -> f64 {
    rnd() * 2.0 * 3.0_f64.sqrt()
}

/// Overall source-to-estimate transform quality via the Amari index.
fn recovery_amari(sources: &Array2<f64>, mixing: &Array2<f64>, seed: u64) -> f64 {
    let x = mixing.dot(sources);
    let (z, whitener) = whiten(&x).unwrap();
    let model = extended_infomax(&z, &whitener, seed, &InfomaxOptions::default()).unwrap();
    // total transform x -> sources: unmixing . D^-1/2 E^T
    let r = whitener.rank;
    let mut d_inv_et = whitener.eig_vectors.t().to_owned();
    for (i, mut row) in d_inv_et.rows_mut().into_iter().enumerate() {
        let inv = 1.0 / whitener.eig_values[i].sqrt();
        row.mapv_inplace(|v| v * inv);
    }
    assert_eq!(r, mixing.ncols(), "whitening lost a source dimension");
    let total = model.unmixing.dot(&d_inv_et).dot(mixing);
    amari_index(&total)
}

#[test]
fn two_source_mixture_separates() {
    let mut rnd = cheap_rng(100);
    let n = 8000;
    let mut sources = Array2::<f64>::zeros((2, n));
    for t in 0..n {
        sources[[0, t]] = laplacian(&mut rnd);
        sources[[1, t]] = uniform(&mut rnd);
    }
    let mixing = ndarray::arr2(&[[1.0, 0.6], [-0.4, 0.9]]);
    let amari = recovery_amari(&sources, &mixing, 7);
    assert!(amari < 0.05, "Amari index {amari}");
}

#[test]
fn already_independent_input_gives_signed_permutation() {
    let mut rnd = cheap_rng(200);
    let n = 8000;
    let mut sources = Array2::<f64>::zeros((3, n));
    for t in 0..n {
        sources[[0, t]] = laplacian(&mut rnd);
        sources[[1, t]] = uniform(&mut rnd);
        sources[[2, t]] = laplacian(&mut rnd);
    }
    let amari = recovery_amari(&sources, &Array2::eye(3), 13);
    assert!(amari < 0.05, "Amari index {amari}");
}

#[test]
fn reconstruction_identity_with_zero_exclusions() {
    let mut rnd = cheap_rng(300);
    let n = 6000;
    let mixing = ndarray::arr2(&[
        [1.0, 0.3, 0.2],
        [0.1, 1.0, 0.4],
        [-0.3, 0.2, 1.0],
        [0.5, -0.1, 0.6],
    ]);
    let mut sources = Array2::<f64>::zeros((3, n));
    for t in 0..n {
        sources[[0, t]] = laplacian(&mut rnd);
        sources[[1, t]] = uniform(&mut rnd);
        sources[[2, t]] = laplacian(&mut rnd) + 5.0; // nonzero mean channel
    }
    let x = mixing.dot(&sources);
    let (z, whitener) = whiten(&x).unwrap();
    let model = extended_infomax(&z, &whitener, 3, &InfomaxOptions::default()).unwrap();
    let labels = vec![IcLabel::from_class_prob(IcClass::Brain, 0.99); model.n_components];
    let (clean, excluded) = exclude_and_reconstruct(&x, &whitener, &model, &labels);
    assert!(excluded.is_empty());
    let projected = whitener.rank_project(&x);
    let err = rel_frobenius(&clean, &projected);
    assert!(err < 1e-6, "reconstruction error {err}");
}

#[test]
fn excluding_components_reduces_energy() {
    let mut rnd = cheap_rng(400);
    let n = 6000;
    let mixing = ndarray::arr2(&[[1.0, 0.5], [0.2, 1.0], [0.7, -0.3]]);
    let mut sources = Array2::<f64>::zeros((2, n));
    for t in 0..n {
        sources[[0, t]] = laplacian(&mut rnd);
        sources[[1, t]] = uniform(&mut rnd);
    }
    let x = mixing.dot(&sources);
    let (z, whitener) = whiten(&x).unwrap();
    let model = extended_infomax(&z, &whitener, 5, &InfomaxOptions::default()).unwrap();
    let mut labels = vec![IcLabel::from_class_prob(IcClass::Brain, 0.99); model.n_components];
    labels[0] = IcLabel::from_class_prob(IcClass::MuscleArtifact, 0.95);
    let (clean, excluded) = exclude_and_reconstruct(&x, &whitener, &model, &labels);
    assert_eq!(excluded, vec![0]);
    let norm = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let projected = whitener.rank_project(&x);
    assert!(norm(&clean) <= norm(&projected));
}

#[test]
fn features_of_a_pure_line_component() {
    let fs = 256.0;
    let n = 15360;
    let tc: Vec<f64> = (0..n)
        .map(|t| (std::f64::consts::TAU * 60.0 * t as f64 / fs).sin())
        .collect();
    let topo = vec![0.3_f64; 19];
    let names: Vec<String> = (0..19).map(|i| format!("ch{i}")).collect();
    let f = ic_features(&tc, &topo, &names, fs, 60.0);
    assert!(f.line_ratio > 10.0, "line ratio {}", f.line_ratio);
}

#[test]
fn features_of_a_one_hot_topography() {
    let mut rnd = cheap_rng(500);
    let tc: Vec<f64> = (0..5000).map(|_| rnd()).collect();
    let mut topo = vec![0.0_f64; 19];
    topo[4] = 2.5;
    let names: Vec<String> = (0..19).map(|i| format!("ch{i}")).collect();
    let f = ic_features(&tc, &topo, &names, 256.0, 60.0);
    assert_eq!(f.concentration, 1.0);
}

#[test]
fn features_of_a_pink_source_have_negative_slope() {
    // deterministic 1/f-ish signal: sum of tones with 1/f amplitudes
    let fs = 256.0;
    let n = 15360;
    let mut tc = vec![0.0_f64; n];
    let mut rnd = cheap_rng(600);
    for k in 1..120 {
        let freq = k as f64 * 1.0;
        let amp = 1.0 / freq.sqrt();
        let phase = rnd() * std::f64::consts::TAU;
        for (t, v) in tc.iter_mut().enumerate() {
            *v += amp * (std::f64::consts::TAU * freq * t as f64 / fs + phase).sin();
        }
    }
    let topo = vec![0.2_f64; 19];
    let names: Vec<String> = (0..19).map(|i| format!("ch{i}")).collect();
    let f = ic_features(&tc, &topo, &names, fs, 60.0);
    assert!(f.spectral_slope < -0.5, "slope {}", f.spectral_slope);
}

#[test]
fn blink_like_component_classifies_as_eye_blink() {
    // slow frontal bursts: delta-heavy spectrum, frontal topography
    let fs = 250.0;
    let n = 15000;
    let mut tc = vec![0.0_f64; n];
    for c in (625..n).step_by(1250) {
        for t in 0..n {
            let d = (t as f64 - c as f64) / (0.15 * fs);
            tc[t] += (-0.5 * d * d).exp();
        }
    }
    let names: Vec<String> = speed_core::Montage::standard_1020_19().target_order;
    let mut topo = vec![0.05_f64; 19];
    for (i, n) in names.iter().enumerate() {
        if matches!(n.as_str(), "Fp1" | "Fp2") {
            topo[i] = 1.0;
        }
        if matches!(n.as_str(), "F7" | "F8") {
            topo[i] = 0.6;
        }
    }
    let f = ic_features(&tc, &topo, &names, fs, 60.0);
    let label = speed_core::ica::classify_ic(&f);
    assert_eq!(label.class, IcClass::EyeBlink, "features {f:?}");
}
