//! Zero-phase FIR filtering.
//!
//! Filters are linear-phase windowed-sinc designs (Hamming window, length
//! `ceil(3.3 * fs / transition)` rounded up to odd). Application is forward
//! convolution with reflection padding and group-delay compensation, so the
//! output has zero phase shift and the same length as the input.

use ndarray::Array2;
use thiserror::Error;

use crate::fftutil::fft_convolve;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("signal too short: {len} samples, filter needs more than {need}")]
    SignalTooShort { len: usize, need: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Highpass,
    Lowpass,
    Notch,
}

/// FIR filter specification. `cutoff_hz` is the band edge, or the center
/// frequency for a notch.
#[derive(Debug, Clone, Copy)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub cutoff_hz: f64,
    pub transition_hz: f64,
    /// Stop-band width, notch only.
    pub notch_bw_hz: f64,
}

impl FilterSpec {
    /// High-pass with the default transition `min(cutoff/2, 2 Hz)`.
    pub fn highpass(cutoff_hz: f64) -> Self {
        Self {
            kind: FilterKind::Highpass,
            cutoff_hz,
            transition_hz: (cutoff_hz / 2.0).min(2.0),
            notch_bw_hz: 0.0,
        }
    }

    /// Low-pass with the default transition `min(cutoff/4, 10 Hz)`.
    pub fn lowpass(cutoff_hz: f64) -> Self {
        Self {
            kind: FilterKind::Lowpass,
            cutoff_hz,
            transition_hz: (cutoff_hz * 0.25).min(10.0),
            notch_bw_hz: 0.0,
        }
    }

    /// Notch at `center_hz` with a 2 Hz stop band.
    pub fn notch(center_hz: f64) -> Self {
        Self {
            kind: FilterKind::Notch,
            cutoff_hz: center_hz,
            transition_hz: 1.0,
            notch_bw_hz: 2.0,
        }
    }

    /// Tap count for sampling rate `fs`: `ceil(3.3 fs / transition)`, odd.
    pub fn n_taps(&self, fs: f64) -> usize {
        let n = (3.3 * fs / self.transition_hz).ceil() as usize;
        if n % 2 == 0 {
            n + 1
        } else {
            n
        }
    }
}

fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Windowed-sinc low-pass prototype with exact unit DC gain.
fn lowpass_taps(n: usize, cutoff_norm: f64) -> Vec<f64> {
    let mid = (n - 1) as f64 / 2.0;
    let win = hamming(n);
    let mut taps: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64 - mid;
            let sinc = if x == 0.0 {
                2.0 * cutoff_norm
            } else {
                (2.0 * std::f64::consts::PI * cutoff_norm * x).sin() / (std::f64::consts::PI * x)
            };
            sinc * win[i]
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Designs the filter taps for sampling rate `fs`.
pub fn design_taps<S: Scalar>(spec: &FilterSpec, fs: f64) -> Vec<S> {
    let n = spec.n_taps(fs);
    let mid = (n - 1) / 2;
    let taps64 = match spec.kind {
        FilterKind::Lowpass => lowpass_taps(n, spec.cutoff_hz / fs),
        FilterKind::Highpass => {
            // spectral inversion of the complementary low-pass
            let mut t = lowpass_taps(n, spec.cutoff_hz / fs);
            for v in &mut t {
                *v = -*v;
            }
            t[mid] += 1.0;
            t
        }
        FilterKind::Notch => {
            // low-pass below the notch plus high-pass above it
            let lo = lowpass_taps(n, (spec.cutoff_hz - spec.notch_bw_hz / 2.0) / fs);
            let hi = lowpass_taps(n, (spec.cutoff_hz + spec.notch_bw_hz / 2.0) / fs);
            let mut t: Vec<f64> = lo.iter().zip(hi.iter()).map(|(a, b)| a - b).collect();
            t[mid] += 1.0;
            t
        }
    };
    taps64.into_iter().map(S::from_f64_c).collect()
}

/// Index into `x` with reflection at both ends (no edge duplication).
fn reflect_index(i: isize, n: usize) -> usize {
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

/// Zero-phase FIR filter of one channel.
pub fn filter_channel<S: Scalar>(x: &[S], taps: &[S]) -> Result<Vec<S>, FilterError> {
    let n = x.len();
    let m = taps.len();
    if n <= m {
        return Err(FilterError::SignalTooShort { len: n, need: m });
    }
    let half = (m - 1) / 2;
    let mut padded = Vec::with_capacity(n + 2 * half);
    for k in 0..(n + 2 * half) {
        padded.push(x[reflect_index(k as isize - half as isize, n)]);
    }
    let full = fft_convolve(&padded, taps);
    Ok(full[2 * half..2 * half + n].to_vec())
}

/// Zero-phase FIR filter over all rows of a channels-by-samples matrix.
pub fn fir_filter<S: Scalar>(
    x: &Array2<S>,
    fs: f64,
    spec: &FilterSpec,
) -> Result<Array2<S>, FilterError> {
    let taps = design_taps::<S>(spec, fs);
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let filtered = filter_channel(row.as_slice().expect("contiguous row"), &taps)?;
        for (dst, src) in row.iter_mut().zip(filtered) {
            *dst = src;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    #[test]
    fn tap_count_is_odd_and_scales_with_transition() {
        let hp = FilterSpec::highpass(0.5);
        assert!((hp.transition_hz - 0.25).abs() < 1e-12);
        let n = hp.n_taps(250.0);
        assert_eq!(n % 2, 1);
        assert_eq!(n, 3301);
        let lp = FilterSpec::lowpass(100.0);
        assert!((lp.transition_hz - 10.0).abs() < 1e-12);
        assert_eq!(lp.n_taps(250.0), 83);
    }

    #[test]
    fn highpass_removes_dc() {
        let fs = 250.0;
        let n = 4000;
        let x = Array2::from_elem((1, n), 100.0_f64);
        let y = fir_filter(&x, fs, &FilterSpec::highpass(0.5)).unwrap();
        // exclude one filter length at each edge
        let m = FilterSpec::highpass(0.5).n_taps(fs);
        let core = y.row(0).slice(ndarray::s![m..n - m]).to_owned();
        let max = core.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
        assert!(max < 1.0, "residual DC {max}");
    }

    #[test]
    fn lowpass_passband_is_flat() {
        let fs = 250.0;
        let n = 5000;
        let x: Array1<f64> = Array1::from_iter(
            (0..n).map(|i| (2.0 * std::f64::consts::PI * 10.0 * i as f64 / fs).sin()),
        );
        let x = x.insert_axis(ndarray::Axis(0));
        let y = fir_filter(&x, fs, &FilterSpec::lowpass(100.0)).unwrap();
        // amplitude via LS fit against sin/cos, excluding edges
        let lo = 500;
        let hi = n - 500;
        let (mut ss, mut sc) = (0.0, 0.0);
        let (mut css, mut ccc, mut csc) = (0.0, 0.0, 0.0);
        for i in lo..hi {
            let t = i as f64 / fs;
            let s = (2.0 * std::f64::consts::PI * 10.0 * t).sin();
            let c = (2.0 * std::f64::consts::PI * 10.0 * t).cos();
            ss += s * y[[0, i]];
            sc += c * y[[0, i]];
            css += s * s;
            ccc += c * c;
            csc += s * c;
        }
        // solve 2x2 normal equations
        let det = css * ccc - csc * csc;
        let a = (ss * ccc - sc * csc) / det;
        let b = (sc * css - ss * csc) / det;
        let amp = (a * a + b * b).sqrt();
        assert!((amp - 1.0).abs() < 0.01, "amplitude {amp}");
    }

    #[test]
    fn signal_shorter_than_filter_is_rejected() {
        let x = Array2::from_elem((1, 50), 1.0_f64);
        let err = fir_filter(&x, 250.0, &FilterSpec::lowpass(100.0));
        assert!(matches!(err, Err(FilterError::SignalTooShort { .. })));
    }

    #[test]
    fn reflect_indexing() {
        assert_eq!(reflect_index(-1, 5), 1);
        assert_eq!(reflect_index(-4, 5), 4);
        assert_eq!(reflect_index(5, 5), 3);
        assert_eq!(reflect_index(7, 5), 1);
        assert_eq!(reflect_index(2, 5), 2);
    }
}
