//! Independent component analysis: PCA whitening, extended Infomax, and
//! rule-based component labelling.
//!
//! Extended Infomax runs block-stochastic natural-gradient updates
//! `W <- W + eta (I - K tanh(u) u^T - u u^T) W` with the diagonal sign
//! matrix `K` tracking each component's kurtosis, so both super- and
//! sub-Gaussian sources separate. Components are labelled into the seven
//! usual classes by spectral and topographic rules; an external label file
//! can override the rules per component (see the pipeline module).

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::psd;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum IcaError {
    #[error("covariance is degenerate; cannot whiten")]
    DegenerateCovariance,
    #[error("need at least {need} samples for {channels} channels, found {found}")]
    TooFewSamples {
        need: usize,
        channels: usize,
        found: usize,
    },
}

/// PCA whitening transform with rank reduction.
#[derive(Debug, Clone)]
pub struct Whitener<S> {
    pub mean: Array1<S>,
    /// channels-by-rank eigenvector matrix.
    pub eig_vectors: Array2<S>,
    /// Descending positive eigenvalues, one per retained component.
    pub eig_values: Array1<S>,
    pub rank: usize,
}

impl<S: Scalar> Whitener<S> {
    /// Whitened projection `D^-1/2 E^T (x - mean)`, rank-by-samples.
    pub fn project(&self, x: &Array2<S>) -> Array2<S> {
        let centered = self.center(x);
        let mut z = self.eig_vectors.t().dot(&centered);
        for (mut row, &ev) in z.rows_mut().into_iter().zip(self.eig_values.iter()) {
            let inv = S::one() / ev.sqrt();
            row.mapv_inplace(|v| v * inv);
        }
        z
    }

    /// Projection onto the retained subspace, mean restored.
    pub fn rank_project(&self, x: &Array2<S>) -> Array2<S> {
        let centered = self.center(x);
        let mut out = self.eig_vectors.dot(&self.eig_vectors.t().dot(&centered));
        for (mut row, &m) in out.rows_mut().into_iter().zip(self.mean.iter()) {
            row.mapv_inplace(|v| v + m);
        }
        out
    }

    fn center(&self, x: &Array2<S>) -> Array2<S> {
        let mut c = x.clone();
        for (mut row, &m) in c.rows_mut().into_iter().zip(self.mean.iter()) {
            row.mapv_inplace(|v| v - m);
        }
        c
    }
}

/// Mean-centers, PCA-rotates, and variance-normalizes; components with
/// eigenvalue under `1e-10 * max` are dropped (average referencing makes
/// the data rank deficient).
pub fn whiten<S: Scalar>(x: &Array2<S>) -> Result<(Array2<S>, Whitener<S>), IcaError> {
    let (c, n) = (x.nrows(), x.ncols());
    if n < 10 * c || c < 2 {
        return Err(IcaError::TooFewSamples {
            need: 10 * c,
            channels: c,
            found: n,
        });
    }
    let mean = Array1::from_iter(
        x.rows()
            .into_iter()
            .map(|r| r.iter().copied().sum::<S>() / S::from_usize(n).unwrap()),
    );
    let cov = linalg::covariance(x);
    let eig = linalg::sym_eigen(&cov).map_err(|_| IcaError::DegenerateCovariance)?;
    let max_ev = eig.values[0];
    if max_ev <= S::zero() {
        return Err(IcaError::DegenerateCovariance);
    }
    let floor = max_ev * S::from_f64_c(1e-10);
    let rank = eig.values.iter().filter(|&&v| v > floor).count();
    if rank < 2 {
        return Err(IcaError::DegenerateCovariance);
    }
    let eig_vectors = eig.vectors.slice(ndarray::s![.., ..rank]).to_owned();
    let eig_values = eig.values.slice(ndarray::s![..rank]).to_owned();
    let w = Whitener {
        mean,
        eig_vectors,
        eig_values,
        rank,
    };
    let z = w.project(x);
    Ok((z, w))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct InfomaxOptions {
    pub max_iters: usize,
    pub tol: f64,
    /// Anneal the learning rate when successive updates turn more than
    /// this many degrees.
    pub anneal_deg: f64,
    pub anneal_factor: f64,
    /// Fraction of the pass budget run at the full learning rate before
    /// angle-triggered annealing starts. Block noise turns update angles
    /// into coin flips, and annealing on those freezes the weights while
    /// they are still escaping mixed saddle points (super- plus
    /// sub-Gaussian mixtures sit exactly there).
    pub search_frac: f64,
}

impl Default for InfomaxOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-7,
            anneal_deg: 60.0,
            anneal_factor: 0.9,
            search_frac: 0.7,
        }
    }
}

/// Fitted ICA decomposition of whitened data.
#[derive(Debug, Clone)]
pub struct IcaModel<S> {
    /// rank-by-rank unmixing of the whitened data; sources have unit
    /// variance.
    pub unmixing: Array2<S>,
    /// channels-by-rank back-projection through the whitener.
    pub mixing: Array2<S>,
    pub n_components: usize,
    pub converged: bool,
    pub n_iters: usize,
}

impl<S: Scalar> IcaModel<S> {
    pub fn sources(&self, z: &Array2<S>) -> Array2<S> {
        self.unmixing.dot(z)
    }
}

fn frob_norm_sq<S: Scalar>(m: &Array2<S>) -> S {
    m.iter().map(|&v| v * v).sum()
}

/// Kurtosis sign per component: +1 super-, -1 sub-Gaussian.
fn kurtosis_signs<S: Scalar>(u: &Array2<S>) -> Vec<S> {
    u.rows()
        .into_iter()
        .map(|row| {
            let n = S::from_usize(row.len()).unwrap();
            let m2 = row.iter().map(|&v| v * v).sum::<S>() / n;
            let m4 = row.iter().map(|&v| v * v * v * v).sum::<S>() / n;
            if m2 <= S::zero() {
                return S::one();
            }
            let k = m4 / (m2 * m2) - S::from_f64_c(3.0);
            if k < S::zero() {
                -S::one()
            } else {
                S::one()
            }
        })
        .collect()
}

/// Extended Infomax on whitened data. All randomness (block order and the
/// kurtosis-estimation subset) comes from `seed`; equal seeds give
/// bit-identical models.
pub fn extended_infomax<S: Scalar>(
    z: &Array2<S>,
    whitener: &Whitener<S>,
    seed: u64,
    opts: &InfomaxOptions,
) -> Result<IcaModel<S>, IcaError> {
    let (r, n) = (z.nrows(), z.ncols());
    if n < 10 * r {
        return Err(IcaError::TooFewSamples {
            need: 10 * r,
            channels: r,
            found: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = ((n as f64 / 3.0).sqrt().floor() as usize).clamp(8, 512).min(n);
    let mut lrate = S::from_f64_c(0.01 / (r as f64 * r as f64).ln().max(1.0));
    let anneal_cos = S::from_f64_c(opts.anneal_deg.to_radians().cos());
    let tol = S::from_f64_c(opts.tol);

    // fixed sample subset for kurtosis sign estimation
    let z_kurt: Array2<S> = {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        idx.truncate(6000.min(n));
        let mut zk = Array2::<S>::zeros((r, idx.len()));
        for (j, &col) in idx.iter().enumerate() {
            for i in 0..r {
                zk[[i, j]] = z[[i, col]];
            }
        }
        zk
    };

    let mut w = Array2::<S>::eye(r);
    let mut signs = vec![S::one(); r];
    let mut prev_delta: Option<Array2<S>> = None;
    let mut converged = false;
    let mut n_iters = 0usize;
    let mut order: Vec<usize> = (0..n).collect();

    'passes: for pass in 0..opts.max_iters {
        n_iters = pass + 1;
        order.shuffle(&mut rng);
        let w_start = w.clone();
        let mut zb = Array2::<S>::zeros((r, block));
        for chunk in order.chunks(block) {
            let l = chunk.len();
            let mut zb_view = zb.slice_mut(ndarray::s![.., ..l]);
            for (j, &col) in chunk.iter().enumerate() {
                for i in 0..r {
                    zb_view[[i, j]] = z[[i, col]];
                }
            }
            let zb_l = zb.slice(ndarray::s![.., ..l]).to_owned();
            let u = w.dot(&zb_l); // r x l
            let y = u.mapv(|v| v.tanh());
            let inv_l = S::one() / S::from_usize(l).unwrap();
            // (I - K y u^T / l - u u^T / l) W
            let mut core = Array2::<S>::eye(r);
            let yut = y.dot(&u.t());
            let uut = u.dot(&u.t());
            for i in 0..r {
                for j in 0..r {
                    core[[i, j]] = core[[i, j]]
                        - signs[i] * yut[[i, j]] * inv_l
                        - uut[[i, j]] * inv_l;
                }
            }
            let delta = core.dot(&w) * lrate;
            w = &w + &delta;
            let blown = w.iter().any(|v| !v.is_finite() || v.abs() > S::from_f64_c(1e9));
            if blown {
                w = Array2::eye(r);
                signs = vec![S::one(); r];
                prev_delta = None;
                lrate = lrate * S::from_f64_c(0.5);
                if lrate.to_f64_c() < 1e-12 {
                    break 'passes;
                }
                continue 'passes;
            }
        }
        // kurtosis sign refresh on the fixed subset
        signs = kurtosis_signs(&w.dot(&z_kurt));

        let delta = &w - &w_start;
        let change = frob_norm_sq(&delta);
        let polishing = pass >= (opts.search_frac * opts.max_iters as f64) as usize;
        if polishing {
            if let Some(prev) = &prev_delta {
                let dot = delta.iter().zip(prev.iter()).map(|(&a, &b)| a * b).sum::<S>();
                let denom = (frob_norm_sq(&delta) * frob_norm_sq(prev)).sqrt();
                if denom > S::zero() && dot / denom < anneal_cos {
                    lrate = lrate * S::from_f64_c(opts.anneal_factor);
                }
            }
        }
        prev_delta = Some(delta);
        if change < tol {
            converged = true;
            break;
        }
    }

    // normalize each component to unit variance
    let sources = w.dot(z);
    for (i, row) in sources.rows().into_iter().enumerate() {
        let std = crate::stats::std_dev(row.as_slice().expect("contiguous"));
        if std > S::zero() {
            let inv = S::one() / std;
            for j in 0..r {
                w[[i, j]] = w[[i, j]] * inv;
            }
        }
    }

    let w_inv = linalg::inverse(&w).map_err(|_| IcaError::DegenerateCovariance)?;
    // mixing = E D^1/2 W^-1
    let mut ed = whitener.eig_vectors.clone();
    for (mut col, &ev) in ed.columns_mut().into_iter().zip(whitener.eig_values.iter()) {
        let s = ev.sqrt();
        col.mapv_inplace(|v| v * s);
    }
    let mixing = ed.dot(&w_inv);

    Ok(IcaModel {
        unmixing: w,
        mixing,
        n_components: r,
        converged,
        n_iters,
    })
}

/// The seven component classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcClass {
    Brain,
    MuscleArtifact,
    EyeBlink,
    Heart,
    LineNoise,
    ChannelNoise,
    Other,
}

pub const IC_CLASSES: [IcClass; 7] = [
    IcClass::Brain,
    IcClass::MuscleArtifact,
    IcClass::EyeBlink,
    IcClass::Heart,
    IcClass::LineNoise,
    IcClass::ChannelNoise,
    IcClass::Other,
];

impl IcClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            IcClass::Brain => "brain",
            IcClass::MuscleArtifact => "muscle_artifact",
            IcClass::EyeBlink => "eye_blink",
            IcClass::Heart => "heart",
            IcClass::LineNoise => "line_noise",
            IcClass::ChannelNoise => "channel_noise",
            IcClass::Other => "other",
        }
    }

    pub fn from_str_loose(s: &str) -> Option<Self> {
        IC_CLASSES.iter().copied().find(|c| c.as_str() == s.trim())
    }

    fn index(&self) -> usize {
        IC_CLASSES.iter().position(|c| c == self).unwrap()
    }
}

/// Class probabilities for one component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IcLabel {
    pub class: IcClass,
    /// Probability per class, ordered as [`IC_CLASSES`], summing to one.
    pub probs: [f64; 7],
    pub argmax_prob: f64,
}

impl IcLabel {
    /// Label with `prob` on `class` and the remainder spread uniformly.
    pub fn from_class_prob(class: IcClass, prob: f64) -> Self {
        let prob = prob.clamp(0.0, 1.0);
        let rest = (1.0 - prob) / 6.0;
        let mut probs = [rest; 7];
        probs[class.index()] = prob;
        Self {
            class,
            probs,
            argmax_prob: prob,
        }
    }

    /// Excluded when confidently labelled as an artifact class.
    pub fn is_excluded(&self, certainty: f64) -> bool {
        !matches!(self.class, IcClass::Brain | IcClass::Other) && self.argmax_prob > certainty
    }
}

/// Scalar features describing one component.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct IcFeatures {
    /// Slope of log10 PSD against log10 frequency over 2-40 Hz.
    pub spectral_slope: f64,
    /// Power fraction below 4 Hz.
    pub delta_frac: f64,
    /// Power fraction in 8-13 Hz.
    pub alpha_frac: f64,
    /// Power fraction above 20 Hz.
    pub high_frac: f64,
    /// Line-band PSD over flanking-band median.
    pub line_ratio: f64,
    /// max |w|^2 / sum |w|^2 of the topography.
    pub concentration: f64,
    /// |w| mass on Fp1/Fp2/F7/F8 over total.
    pub frontal_dominance: f64,
    /// Peak normalized autocorrelation in the 0.6-1.7 Hz lag band.
    pub autocorr_peak: f64,
}

/// Extracts classifier features from a component timecourse and topography.
pub fn ic_features<S: Scalar>(
    timecourse: &[S],
    topography: &[S],
    channel_names: &[String],
    fs: f64,
    f_line: f64,
) -> IcFeatures {
    let n = timecourse.len();
    let nperseg = ((2.0 * fs).round() as usize).min(n);
    let (freqs, p) = psd::welch(timecourse, fs, nperseg);
    let nyq = fs / 2.0;

    // log-log slope over 2-40 Hz
    let pts: Vec<(f64, f64)> = freqs
        .iter()
        .zip(p.iter())
        .filter(|(f, _)| **f >= 2.0 && **f <= 40.0_f64.min(nyq))
        .map(|(f, &v)| (f.log10(), v.to_f64_c().max(1e-30).log10()))
        .collect();
    let spectral_slope = if pts.len() >= 2 {
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let den: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    } else {
        0.0
    };

    let total = psd::band_power(&freqs, &p, 0.0, nyq).to_f64_c().max(1e-30);
    let delta_frac = psd::band_power(&freqs, &p, 0.0, 4.0).to_f64_c() / total;
    let alpha_frac = psd::band_power(&freqs, &p, 8.0, 13.0).to_f64_c() / total;
    let high_frac = psd::band_power(&freqs, &p, 20.0, nyq).to_f64_c() / total;

    let mut line_acc = 0.0;
    let mut line_bins = 0usize;
    let mut flank = Vec::new();
    for (f, &v) in freqs.iter().zip(p.iter()) {
        let d = (f - f_line).abs();
        if d <= 0.5 {
            line_acc += v.to_f64_c();
            line_bins += 1;
        } else if (2.0..=8.0).contains(&d) {
            flank.push(v);
        }
    }
    let flank_med = if flank.is_empty() {
        0.0
    } else {
        crate::stats::median(&flank).to_f64_c()
    };
    let line_ratio = if flank_med > 0.0 && line_bins > 0 {
        (line_acc / line_bins as f64) / flank_med
    } else {
        0.0
    };

    let total_w: f64 = topography.iter().map(|w| w.to_f64_c().abs()).sum();
    let max_w2 = topography
        .iter()
        .map(|w| w.to_f64_c().powi(2))
        .fold(0.0, f64::max);
    let sum_w2: f64 = topography.iter().map(|w| w.to_f64_c().powi(2)).sum();
    let concentration = if sum_w2 > 0.0 { max_w2 / sum_w2 } else { 0.0 };
    let frontal: f64 = channel_names
        .iter()
        .zip(topography.iter())
        .filter(|(n, _)| matches!(n.as_str(), "Fp1" | "Fp2" | "F7" | "F8"))
        .map(|(_, w)| w.to_f64_c().abs())
        .sum();
    let frontal_dominance = if total_w > 0.0 { frontal / total_w } else { 0.0 };

    // normalized autocorrelation peak in the heartbeat lag band
    let mean = timecourse.iter().copied().sum::<S>() / S::from_usize(n.max(1)).unwrap();
    let centered: Vec<f64> = timecourse.iter().map(|&v| (v - mean).to_f64_c()).collect();
    let r0: f64 = centered.iter().map(|v| v * v).sum();
    let lag_lo = (fs / 1.7).round() as usize;
    let lag_hi = ((fs / 0.6).round() as usize).min(n.saturating_sub(2));
    let mut autocorr_peak = 0.0_f64;
    if r0 > 0.0 {
        for lag in lag_lo..=lag_hi {
            let r: f64 = centered[..n - lag]
                .iter()
                .zip(&centered[lag..])
                .map(|(a, b)| a * b)
                .sum();
            autocorr_peak = autocorr_peak.max(r / r0);
        }
    }

    IcFeatures {
        spectral_slope,
        delta_frac,
        alpha_frac,
        high_frac,
        line_ratio,
        concentration,
        frontal_dominance,
        autocorr_peak,
    }
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Deterministic rule scores normalized into a probability vector.
pub fn classify_ic(f: &IcFeatures) -> IcLabel {
    let s_line = clamp01(f.line_ratio / 20.0);
    let s_chan = clamp01((f.concentration - 0.3) / 0.5);
    let s_eye = clamp01(f.delta_frac * f.frontal_dominance / 0.5);
    let slope_gate = clamp01((f.spectral_slope + 0.5) / 0.5);
    let s_musc = clamp01((f.high_frac - 0.25) / 0.35)
        * slope_gate
        * (1.0 - f.concentration)
        * (1.0 - s_line);
    let s_heart = clamp01((f.autocorr_peak - 0.3) / 0.4);
    let s_brain = clamp01(-f.spectral_slope) * (0.4 + 0.6 * clamp01(f.alpha_frac / 0.15));
    let s_other = 0.2;

    let mut probs = [0.0; 7];
    probs[IcClass::Brain.index()] = s_brain;
    probs[IcClass::MuscleArtifact.index()] = s_musc;
    probs[IcClass::EyeBlink.index()] = s_eye;
    probs[IcClass::Heart.index()] = s_heart;
    probs[IcClass::LineNoise.index()] = s_line;
    probs[IcClass::ChannelNoise.index()] = s_chan;
    probs[IcClass::Other.index()] = s_other;
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    // ties go to the catch-all class, then brain
    let mut class = IcClass::Other;
    let mut best = probs[IcClass::Other.index()];
    for c in [
        IcClass::Brain,
        IcClass::MuscleArtifact,
        IcClass::EyeBlink,
        IcClass::Heart,
        IcClass::LineNoise,
        IcClass::ChannelNoise,
    ] {
        if probs[c.index()] > best {
            best = probs[c.index()];
            class = c;
        }
    }
    IcLabel {
        class,
        probs,
        argmax_prob: best,
    }
}

/// Zeroes confidently-labelled artifact components and back-projects.
/// Returns the cleaned signal and the excluded component indices.
pub fn exclude_and_reconstruct<S: Scalar>(
    x: &Array2<S>,
    whitener: &Whitener<S>,
    model: &IcaModel<S>,
    labels: &[IcLabel],
) -> (Array2<S>, Vec<usize>) {
    let z = whitener.project(x);
    let mut sources = model.sources(&z);
    let excluded: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_excluded(0.80))
        .map(|(i, _)| i)
        .collect();
    for &i in &excluded {
        sources.row_mut(i).fill(S::zero());
    }
    let mut clean = model.mixing.dot(&sources);
    for (mut row, &m) in clean.rows_mut().into_iter().zip(whitener.mean.iter()) {
        row.mapv_inplace(|v| v + m);
    }
    (clean, excluded)
}

/// Drop the window when too many components were excluded.
pub fn ica_drop_check(n_excluded: usize, n_total: usize, max_excluded_frac: f64) -> bool {
    assert!(n_total >= 1);
    n_excluded as f64 / n_total as f64 <= max_excluded_frac
}

/// Permutation- and scale-invariant unmixing quality: 0 is perfect
/// recovery. `p` is the product of estimated unmixing and true mixing.
pub fn amari_index(p: &Array2<f64>) -> f64 {
    let n = p.nrows();
    assert_eq!(n, p.ncols());
    let a = p.mapv(f64::abs);
    let mut acc = 0.0;
    for i in 0..n {
        let row_max = (0..n).map(|j| a[[i, j]]).fold(0.0, f64::max);
        let row_sum: f64 = (0..n).map(|j| a[[i, j]]).sum();
        acc += row_sum / row_max - 1.0;
        let col_max = (0..n).map(|j| a[[j, i]]).fold(0.0, f64::max);
        let col_sum: f64 = (0..n).map(|j| a[[j, i]]).sum();
        acc += col_sum / col_max - 1.0;
    }
    acc / (2.0 * n as f64 * (n as f64 - 1.0))
}
