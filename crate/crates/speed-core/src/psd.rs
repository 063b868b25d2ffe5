//! Welch power spectral density estimation.
//!
//! Hann-windowed segments with 50% overlap, per-segment mean removal,
//! one-sided density scaling (V^2/Hz).

use ndarray::Array2;

use crate::fftutil::fft_real;
use crate::Scalar;

/// One-sided PSD of a single channel. Returns (frequencies, density).
/// `nperseg` is clamped to the signal length.
pub fn welch<S: Scalar>(x: &[S], fs: f64, nperseg: usize) -> (Vec<f64>, Vec<S>) {
    let n = x.len();
    let seg = nperseg.min(n).max(8);
    let hop = (seg / 2).max(1);
    let window: Vec<S> = (0..seg)
        .map(|i| {
            S::from_f64_c(0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / seg as f64).cos()))
        })
        .collect();
    let win_ss: S = window.iter().map(|&w| w * w).sum();
    let n_bins = seg / 2 + 1;
    let mut acc = vec![S::zero(); n_bins];
    let mut n_segs = 0usize;
    let mut start = 0usize;
    while start + seg <= n {
        let slice = &x[start..start + seg];
        let mean = slice.iter().copied().sum::<S>() / S::from_usize(seg).unwrap();
        let windowed: Vec<S> = slice
            .iter()
            .zip(window.iter())
            .map(|(&v, &w)| (v - mean) * w)
            .collect();
        let spec = fft_real(&windowed);
        for (b, a) in acc.iter_mut().enumerate() {
            let p = spec[b].norm_sqr();
            *a = *a + p;
        }
        n_segs += 1;
        start += hop;
    }
    if n_segs == 0 {
        // signal shorter than one segment: single zero-padded periodogram
        let mean = x.iter().copied().sum::<S>() / S::from_usize(n.max(1)).unwrap();
        let mut padded: Vec<S> = x.iter().map(|&v| v - mean).collect();
        padded.resize(seg, S::zero());
        let spec = fft_real(&padded);
        for (b, a) in acc.iter_mut().enumerate() {
            *a = spec[b].norm_sqr();
        }
        n_segs = 1;
    }
    let scale = S::one() / (S::from_f64_c(fs) * win_ss * S::from_usize(n_segs).unwrap());
    let two = S::from_f64_c(2.0);
    let freqs: Vec<f64> = (0..n_bins).map(|b| b as f64 * fs / seg as f64).collect();
    let psd: Vec<S> = acc
        .into_iter()
        .enumerate()
        .map(|(b, p)| {
            let one_sided = if b == 0 || (seg % 2 == 0 && b == n_bins - 1) {
                p
            } else {
                p * two
            };
            one_sided * scale
        })
        .collect();
    (freqs, psd)
}

/// Welch PSD averaged across all rows of a channels-by-samples matrix.
pub fn welch_mean<S: Scalar>(x: &Array2<S>, fs: f64, nperseg: usize) -> (Vec<f64>, Vec<S>) {
    let mut mean: Vec<S> = Vec::new();
    let mut freqs = Vec::new();
    for row in x.rows() {
        let (f, p) = welch(row.as_slice().expect("contiguous row"), fs, nperseg);
        if mean.is_empty() {
            mean = p;
            freqs = f;
        } else {
            for (m, v) in mean.iter_mut().zip(p) {
                *m = *m + v;
            }
        }
    }
    let inv = S::one() / S::from_usize(x.nrows().max(1)).unwrap();
    for m in &mut mean {
        *m = *m * inv;
    }
    (freqs, mean)
}

/// Integrated band power over `[lo, hi]` Hz (inclusive bin centers).
pub fn band_power<S: Scalar>(freqs: &[f64], psd: &[S], lo: f64, hi: f64) -> S {
    let df = if freqs.len() > 1 { freqs[1] - freqs[0] } else { 1.0 };
    let mut acc = S::zero();
    for (f, &p) in freqs.iter().zip(psd.iter()) {
        if *f >= lo && *f <= hi {
            acc = acc + p;
        }
    }
    acc * S::from_f64_c(df)
}

/// Median of PSD bins whose frequency falls in `[lo, hi]`.
pub fn band_median<S: Scalar>(freqs: &[f64], psd: &[S], lo: f64, hi: f64) -> S {
    let mut vals: Vec<S> = freqs
        .iter()
        .zip(psd.iter())
        .filter(|(f, _)| **f >= lo && **f <= hi)
        .map(|(_, &p)| p)
        .collect();
    if vals.is_empty() {
        return S::zero();
    }
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mid = vals.len() / 2;
    if vals.len() % 2 == 1 {
        vals[mid]
    } else {
        (vals[mid - 1] + vals[mid]) * S::from_f64_c(0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_peaks_at_its_frequency() {
        let fs = 250.0;
        let n = 5000;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 10.0 * i as f64 / fs).sin())
            .collect();
        let (freqs, psd) = welch(&x, fs, 500);
        let peak = psd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!((freqs[peak] - 10.0).abs() < 0.5, "peak at {}", freqs[peak]);
    }

    #[test]
    fn total_power_approximates_variance() {
        // white-ish deterministic signal
        let fs = 100.0;
        let n = 10000;
        let x: Vec<f64> = (0..n)
            .map(|i| ((i as f64 * 12.9898).sin() * 43758.5453).fract() - 0.5)
            .collect();
        let var = x.iter().map(|v| v * v).sum::<f64>() / n as f64
            - (x.iter().sum::<f64>() / n as f64).powi(2);
        let (freqs, psd) = welch(&x, fs, 256);
        let total = band_power(&freqs, &psd, 0.0, fs / 2.0);
        assert!(
            (total - var).abs() / var < 0.1,
            "total {total} vs variance {var}"
        );
    }

    #[test]
    fn band_median_of_flat_spectrum() {
        let freqs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let psd: Vec<f64> = (0..100).map(|i| if i == 50 { 100.0 } else { 1.0 }).collect();
        let med = band_median(&freqs, &psd, 40.0, 60.0);
        assert!((med - 1.0).abs() < 1e-12);
    }
}
