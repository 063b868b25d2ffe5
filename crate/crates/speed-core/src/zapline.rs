//! Iterative power-line noise removal (spectral split + DSS).
//!
//! Each pass splits the data into a boxcar-smoothed part (line-free by
//! construction: the boxcar spans one line period) and a residual that
//! carries the line energy. Denoising source separation on the residual —
//! a generalized eigenproblem biased toward Fourier bins at the line
//! harmonics — yields spatial components ordered by line-power ratio; the
//! top components are regressed out. Passes repeat until the spectral
//! prominence of the line frequency falls under a threshold.

use ndarray::Array2;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fftutil::{fft_real, ifft_real};
use crate::linalg;
use crate::psd;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ZaplineError {
    #[error("line frequency {f_line} Hz must lie below half the sampling rate {fs} Hz")]
    LineAboveNyquist { f_line: f64, fs: f64 },
    #[error("residual covariance is rank deficient beyond repair")]
    RankDeficient,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ZaplineConfig {
    pub f_line: f64,
    pub max_iters: usize,
    pub components_per_iter: usize,
    /// Stop once the line prominence falls to this many dB.
    pub stop_ratio_db: f64,
    /// Harmonics to bias toward; 0 means every harmonic below Nyquist.
    pub n_harmonics: usize,
}

impl Default for ZaplineConfig {
    fn default() -> Self {
        Self {
            f_line: 60.0,
            max_iters: 6,
            components_per_iter: 1,
            stop_ratio_db: 3.0,
            n_harmonics: 0,
        }
    }
}

impl ZaplineConfig {
    pub fn new(f_line: f64) -> Self {
        Self {
            f_line,
            ..Self::default()
        }
    }

    fn harmonics(&self, fs: f64) -> Vec<f64> {
        let auto = (((fs / 2.0 - 1.0) / self.f_line).floor() as usize).max(1);
        let count = if self.n_harmonics == 0 {
            auto
        } else {
            self.n_harmonics.min(auto)
        };
        (1..=count).map(|k| k as f64 * self.f_line).collect()
    }
}

/// Splits into a boxcar moving average (window of one line period) and the
/// residual. `smooth + residual` reconstructs the input.
pub fn boxcar_split<S: Scalar>(
    x: &Array2<S>,
    fs: f64,
    f_line: f64,
) -> (Array2<S>, Array2<S>) {
    let w = (fs / f_line).round().max(2.0) as usize;
    let n = x.ncols();
    let mut smooth = x.clone();
    // centered window; even widths take one extra sample on the left
    let left = w / 2;
    let inv_w = S::one() / S::from_usize(w).unwrap();
    for (row_in, mut row_out) in x.rows().into_iter().zip(smooth.rows_mut()) {
        let src = row_in.as_slice().expect("contiguous row");
        for t in 0..n {
            let mut acc = S::zero();
            for k in 0..w {
                let idx = t as isize - left as isize + k as isize;
                acc = acc + src[reflect(idx, n)];
            }
            row_out[t] = acc * inv_w;
        }
    }
    let mut residual = x - &smooth;
    // adjust pairs so smooth + residual == x to the last bit
    for ((s, r), &orig) in smooth.iter_mut().zip(residual.iter_mut()).zip(x.iter()) {
        if *s + *r == orig {
            continue;
        }
        *r = orig - *s;
        if *s + *r == orig {
            continue;
        }
        *s = orig - *r;
        if *s + *r == orig {
            continue;
        }
        // give up on smoothing this sample; the trivial split is exact
        *s = S::zero();
        *r = orig;
    }
    (smooth, residual)
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Keeps only Fourier bins within `half_bw` Hz of any harmonic.
fn fourier_band_project<S: Scalar>(
    x: &Array2<S>,
    fs: f64,
    harmonics: &[f64],
    half_bw: f64,
) -> Array2<S> {
    let n = x.ncols();
    let mut out = Array2::<S>::zeros(x.raw_dim());
    for (row_in, mut row_out) in x.rows().into_iter().zip(out.rows_mut()) {
        let mut spec = fft_real(row_in.as_slice().expect("contiguous row"));
        for (b, v) in spec.iter_mut().enumerate() {
            let freq = if b <= n / 2 {
                b as f64 * fs / n as f64
            } else {
                (n - b) as f64 * fs / n as f64
            };
            let keep = harmonics.iter().any(|h| (freq - h).abs() <= half_bw);
            if !keep {
                *v = Complex::new(S::zero(), S::zero());
            }
        }
        let back = ifft_real(&spec);
        for (dst, src) in row_out.iter_mut().zip(back) {
            *dst = src;
        }
    }
    out
}

/// DSS rotation and per-component line-power scores for a residual.
#[derive(Debug, Clone)]
pub struct DssComponents<S> {
    /// Channel-space directions, one column per component, ordered by
    /// descending line-power ratio.
    pub rotation: Array2<S>,
    pub scores: Vec<f64>,
}

/// Solves the line-biased generalized eigenproblem on the residual.
pub fn dss_line_components<S: Scalar>(
    residual: &Array2<S>,
    fs: f64,
    cfg: &ZaplineConfig,
) -> Result<DssComponents<S>, ZaplineError> {
    if cfg.f_line >= fs / 2.0 {
        return Err(ZaplineError::LineAboveNyquist {
            f_line: cfg.f_line,
            fs,
        });
    }
    let c = residual.nrows();
    let c0 = linalg::covariance(residual);
    let trace: S = (0..c).map(|i| c0[[i, i]]).sum();
    if trace.to_f64_c() <= 1e-30 {
        // nothing to separate; identity rotation with zero scores
        return Ok(DssComponents {
            rotation: Array2::eye(c),
            scores: vec![0.0; c],
        });
    }
    let biased = fourier_band_project(residual, fs, &cfg.harmonics(fs), 0.5);
    let cb = linalg::covariance(&biased);
    // eigenvalue floor against rank deficiency after channel drops
    let reg = trace * S::from_f64_c(1e-9) / S::from_usize(c).unwrap();
    let mut c0r = c0;
    for i in 0..c {
        c0r[[i, i]] = c0r[[i, i]] + reg;
    }
    let eig =
        linalg::generalized_sym_eigen(&cb, &c0r).map_err(|_| ZaplineError::RankDeficient)?;
    Ok(DssComponents {
        rotation: eig.vectors,
        scores: eig.values.iter().map(|v| v.to_f64_c()).collect(),
    })
}

/// One Zapline pass: removes the top `components_per_iter` DSS components
/// from the residual. Zero components is the bit-exact identity.
pub fn zapline_once<S: Scalar>(
    x: &Array2<S>,
    fs: f64,
    cfg: &ZaplineConfig,
) -> Result<(Array2<S>, usize), ZaplineError> {
    let k = cfg.components_per_iter.min(x.nrows());
    if k == 0 {
        return Ok((x.clone(), 0));
    }
    let (_, residual) = boxcar_split(x, fs, cfg.f_line);
    let dss = dss_line_components(&residual, fs, cfg)?;
    // component timecourses and their least-squares channel patterns
    let v_k = dss.rotation.slice(ndarray::s![.., ..k]).to_owned();
    let sources = v_k.t().dot(&residual); // k x n
    let sst = sources.dot(&sources.t()); // k x k
    let xst = residual.dot(&sources.t()); // c x k
    let pattern = match linalg::solve(&sst.t().to_owned(), &xst.t().to_owned()) {
        Ok(sol) => sol.t().to_owned(),
        Err(_) => return Ok((x.clone(), 0)), // degenerate sources: remove nothing
    };
    let removed = pattern.dot(&sources);
    Ok((x - &removed, k))
}

#[derive(Debug, Clone, Serialize)]
pub struct ZaplineIteration {
    /// Line prominence before this pass, dB over the flanking bands.
    pub prominence_db: f64,
    /// Top DSS line-power score of this pass.
    pub top_score: f64,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct ZaplineReport {
    pub iterations: Vec<ZaplineIteration>,
    pub final_prominence_db: f64,
}

/// Line prominence: mean PSD within +-0.5 Hz of the line frequency over the
/// median PSD of the +-[2, 8] Hz flanks, in dB, averaged across channels.
pub fn line_prominence_db<S: Scalar>(x: &Array2<S>, fs: f64, f_line: f64) -> f64 {
    let nperseg = (2.0 * fs).round() as usize;
    let (freqs, mean_psd) = psd::welch_mean(x, fs, nperseg);
    let mut line_bins = 0usize;
    let mut line_acc = 0.0_f64;
    for (f, &p) in freqs.iter().zip(mean_psd.iter()) {
        if (f - f_line).abs() <= 0.5 {
            line_acc += p.to_f64_c();
            line_bins += 1;
        }
    }
    let line = line_acc / line_bins.max(1) as f64;
    let mut flank: Vec<S> = Vec::new();
    for (f, &p) in freqs.iter().zip(mean_psd.iter()) {
        let d = (f - f_line).abs();
        if (2.0..=8.0).contains(&d) {
            flank.push(p);
        }
    }
    if flank.is_empty() {
        return f64::NEG_INFINITY;
    }
    let flank_med = crate::stats::median(&flank).to_f64_c();
    if line <= 0.0 || flank_med <= 0.0 {
        return f64::NEG_INFINITY;
    }
    10.0 * (line / flank_med).log10()
}

/// Repeats [`zapline_once`] while the line prominence exceeds the stop
/// threshold, up to `max_iters` passes. Prominence is non-increasing: a
/// pass that fails to improve it is rolled back and iteration stops.
pub fn zapline_iterative<S: Scalar>(
    x: &Array2<S>,
    fs: f64,
    cfg: &ZaplineConfig,
) -> Result<(Array2<S>, ZaplineReport), ZaplineError> {
    let mut cleaned = x.clone();
    let mut report = ZaplineReport::default();
    let mut prominence = line_prominence_db(&cleaned, fs, cfg.f_line);
    for _ in 0..cfg.max_iters {
        if prominence <= cfg.stop_ratio_db {
            break;
        }
        let (_, residual) = boxcar_split(&cleaned, fs, cfg.f_line);
        let dss = dss_line_components(&residual, fs, cfg)?;
        let top_score = dss.scores.first().copied().unwrap_or(0.0);
        let (next, _) = zapline_once(&cleaned, fs, cfg)?;
        let next_prominence = line_prominence_db(&next, fs, cfg.f_line);
        if next_prominence >= prominence {
            break;
        }
        report.iterations.push(ZaplineIteration {
            prominence_db: prominence,
            top_score,
        });
        cleaned = next;
        prominence = next_prominence;
    }
    report.final_prominence_db = prominence;
    Ok((cleaned, report))
}
