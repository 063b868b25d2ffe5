//! Polyphase rational resampling.
//!
//! The rate change `fs_out / fs_in` is reduced to lowest terms L/M; the
//! signal is conceptually upsampled by L, run through a Kaiser-windowed
//! anti-alias low-pass at `min(fs_in, fs_out) / 2`, and decimated by M.
//! Only the taps that land on real samples are evaluated (64 per phase,
//! per-phase normalized so constants survive exactly).

use ndarray::Array2;

use crate::Scalar;

/// Kaiser window shape parameter.
const KAISER_BETA: f64 = 5.0;
/// Half-width of the anti-alias kernel in input samples (64 taps per phase).
const HALF_WIDTH: usize = 32;

/// Best rational approximation p/q of `ratio` with q bounded, via continued
/// fractions.
pub fn rational_approx(ratio: f64, max_denom: usize) -> (usize, usize) {
    assert!(ratio > 0.0 && ratio.is_finite());
    let (mut p0, mut q0, mut p1, mut q1) = (0_u64, 1_u64, 1_u64, 0_u64);
    let mut x = ratio;
    for _ in 0..64 {
        let a = x.floor();
        let p2 = a as u64 * p1 + p0;
        let q2 = a as u64 * q1 + q0;
        if q2 as usize > max_denom {
            break;
        }
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
        let frac = x - a;
        if frac < 1e-12 {
            break;
        }
        x = 1.0 / frac;
    }
    let g = gcd(p1, q1);
    ((p1 / g) as usize, (q1 / g) as usize)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

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

/// Per-phase tap table for upsample-by-L, cutoff `fc` cycles per upsampled
/// sample. Each phase is normalized to unit sum.
fn polyphase_taps(l: usize, fc: f64) -> Vec<Vec<f64>> {
    let center = (HALF_WIDTH * l) as isize;
    let len = 2 * HALF_WIDTH * l + 1;
    let proto: Vec<f64> = (0..len)
        .map(|i| {
            let x = i as isize - center;
            let sinc = if x == 0 {
                2.0 * fc
            } else {
                (2.0 * std::f64::consts::PI * fc * x as f64).sin()
                    / (std::f64::consts::PI * x as f64)
            };
            let u = x as f64 / center as f64;
            let kaiser = bessel_i0(KAISER_BETA * (1.0 - u * u).max(0.0).sqrt())
                / bessel_i0(KAISER_BETA);
            sinc * kaiser
        })
        .collect();
    (0..l)
        .map(|p| {
            let mut taps: Vec<f64> = (0..).map(|r| p + l * r).take_while(|&i| i < len)
                .map(|i| proto[i])
                .collect();
            let sum: f64 = taps.iter().sum();
            for t in &mut taps {
                *t /= sum;
            }
            taps
        })
        .collect()
}

/// Resamples one channel from `fs_in` to `fs_out`.
/// Output length is `round(n * fs_out / fs_in)`.
pub fn resample_channel<S: Scalar>(x: &[S], fs_in: f64, fs_out: f64) -> Vec<S> {
    if (fs_in - fs_out).abs() < 1e-9 {
        return x.to_vec();
    }
    let n = x.len();
    let out_len = (n as f64 * fs_out / fs_in).round() as usize;
    if n == 0 || out_len == 0 {
        return Vec::new();
    }
    let (l, m) = rational_approx(fs_out / fs_in, 1 << 14);
    let fc = (1.0 / (2.0 * l as f64)).min(1.0 / (2.0 * m as f64));
    let phases = polyphase_taps(l, fc);
    let taps: Vec<Vec<S>> = phases
        .iter()
        .map(|p| p.iter().map(|&t| S::from_f64_c(t)).collect())
        .collect();
    let k_half = HALF_WIDTH as isize;
    (0..out_len)
        .map(|k| {
            let pos = k * m;
            let q = (pos / l) as isize;
            let p = pos % l;
            let mut acc = S::zero();
            for (r, &t) in taps[p].iter().enumerate() {
                let s = q + k_half - r as isize;
                acc = acc + t * x[reflect_index(s, n)];
            }
            acc
        })
        .collect()
}

/// Resamples every row of a channels-by-samples matrix.
pub fn resample<S: Scalar>(x: &Array2<S>, fs_in: f64, fs_out: f64) -> Array2<S> {
    if (fs_in - fs_out).abs() < 1e-9 {
        return x.clone();
    }
    let rows: Vec<Vec<S>> = x
        .rows()
        .into_iter()
        .map(|r| resample_channel(r.as_slice().expect("contiguous row"), fs_in, fs_out))
        .collect();
    let out_len = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut out = Array2::<S>::zeros((x.nrows(), out_len));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    out
}
