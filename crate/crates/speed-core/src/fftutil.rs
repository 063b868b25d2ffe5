//! Thin wrappers around rustfft for real-valued signals.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::Scalar;

/// Forward DFT of a real signal, full complex spectrum.
pub(crate) fn fft_real<S: Scalar>(x: &[S]) -> Vec<Complex<S>> {
    let mut buf: Vec<Complex<S>> = x.iter().map(|&v| Complex::new(v, S::zero())).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Inverse DFT, returning the real part scaled by 1/n.
pub(crate) fn ifft_real<S: Scalar>(spectrum: &[Complex<S>]) -> Vec<S> {
    let mut buf = spectrum.to_vec();
    FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    let inv_n = S::one() / S::from_usize(buf.len()).unwrap();
    buf.into_iter().map(|c| c.re * inv_n).collect()
}

/// Full linear convolution via FFT, length `a.len() + b.len() - 1`.
pub(crate) fn fft_convolve<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    let out_len = a.len() + b.len() - 1;
    let nfft = out_len.next_power_of_two();
    let mut fa: Vec<Complex<S>> = a.iter().map(|&v| Complex::new(v, S::zero())).collect();
    let mut fb: Vec<Complex<S>> = b.iter().map(|&v| Complex::new(v, S::zero())).collect();
    fa.resize(nfft, Complex::new(S::zero(), S::zero()));
    fb.resize(nfft, Complex::new(S::zero(), S::zero()));
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(nfft);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(fb.iter()) {
        *x *= *y;
    }
    planner.plan_fft_inverse(nfft).process(&mut fa);
    let inv_n = S::one() / S::from_usize(nfft).unwrap();
    fa.truncate(out_len);
    fa.into_iter().map(|c| c.re * inv_n).collect()
}
