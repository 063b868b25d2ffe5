//! Bad-channel detection.
//!
//! Five tests in the PREP tradition: flat/NaN, amplitude deviation,
//! high-frequency noisiness, neighbour correlation, and (optionally)
//! RANSAC predictability, where each channel is compared against the
//! per-sample median of 50 spherical-spline reconstructions from random
//! 25% channel subsets. Everything runs on a detrended copy; the caller's
//! data is never touched.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channels::ChannelInfo;
use crate::detrend::robust_detrend;
use crate::filter::{fir_filter, FilterSpec};
use crate::interp::{spline_weights, SplineParams};
use crate::stats;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum BadChanError {
    #[error("RANSAC needs at least {need} positioned channels, found {found}")]
    TooFewChannels { need: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Flat,
    Nan,
    Deviation,
    HfNoise,
    Correlation,
    Ransac,
}

impl Criterion {
    pub fn as_str(&self) -> &'static str {
        match self {
            Criterion::Flat => "flat",
            Criterion::Nan => "nan",
            Criterion::Deviation => "deviation",
            Criterion::HfNoise => "hf_noise",
            Criterion::Correlation => "correlation",
            Criterion::Ransac => "ransac",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub window_secs: f64,
    pub n_samples: usize,
    pub subset_frac: f64,
    pub corr_thresh: f64,
    pub bad_frac: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            window_secs: 5.0,
            n_samples: 50,
            subset_frac: 0.25,
            corr_thresh: 0.85,
            bad_frac: 0.40,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct BadChanConfig {
    pub deviation_z: f64,
    pub noisiness_z: f64,
    pub corr_min: f64,
    pub corr_bad_window_frac: f64,
    pub corr_window_secs: f64,
    pub flat_std_uv: f64,
    pub flat_identical_frac: f64,
    pub ransac: RansacConfig,
}

impl Default for BadChanConfig {
    fn default() -> Self {
        Self {
            deviation_z: 5.0,
            noisiness_z: 5.0,
            corr_min: 0.4,
            corr_bad_window_frac: 0.01,
            corr_window_secs: 1.0,
            flat_std_uv: 1e-9,
            flat_identical_frac: 0.99,
            ransac: RansacConfig::default(),
        }
    }
}

/// Verdicts per criterion plus per-channel diagnostic values, keyed by
/// channel name.
#[derive(Debug, Clone, Default, Serialize)]
pub struct BadChannelReport {
    pub by_criterion: BTreeMap<Criterion, BTreeSet<String>>,
    pub union: BTreeSet<String>,
    /// criterion -> channel -> score (z value or bad-window fraction).
    pub z_scores: BTreeMap<Criterion, BTreeMap<String, f64>>,
}

impl BadChannelReport {
    fn insert(&mut self, criterion: Criterion, name: &str) {
        self.by_criterion
            .entry(criterion)
            .or_default()
            .insert(name.to_string());
        self.union.insert(name.to_string());
    }

    pub fn count(&self) -> usize {
        self.union.len()
    }
}

/// Flat or non-finite channels: near-zero robust spread, long runs of
/// identical samples, or non-finite samples replaced at parse time.
pub fn detect_flat_nan<S: Scalar>(
    data: &Array2<S>,
    nonfinite_at_parse: &[bool],
    cfg: &BadChanConfig,
) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let mut flat = BTreeSet::new();
    let mut nan = BTreeSet::new();
    for (idx, row) in data.rows().into_iter().enumerate() {
        if nonfinite_at_parse.get(idx).copied().unwrap_or(false)
            || row.iter().any(|v| !v.is_finite())
        {
            nan.insert(idx);
        }
        let xs = row.as_slice().expect("contiguous row");
        if stats::robust_std(xs).to_f64_c() < cfg.flat_std_uv {
            flat.insert(idx);
            continue;
        }
        let identical = xs.windows(2).filter(|w| w[0] == w[1]).count();
        if xs.len() > 1 && identical as f64 / (xs.len() - 1) as f64 > cfg.flat_identical_frac {
            flat.insert(idx);
        }
    }
    (flat, nan)
}

/// Robust amplitude z-scores; |z| above the threshold flags the channel.
pub fn detect_deviation<S: Scalar>(
    data: &Array2<S>,
    cfg: &BadChanConfig,
) -> (BTreeSet<usize>, Vec<f64>) {
    let amps: Vec<S> = data
        .rows()
        .into_iter()
        .map(|r| stats::robust_std(r.as_slice().expect("contiguous row")))
        .collect();
    let zs: Vec<f64> = stats::robust_z(&amps).iter().map(|z| z.to_f64_c()).collect();
    let flagged = zs
        .iter()
        .enumerate()
        .filter(|(_, z)| z.abs() > cfg.deviation_z)
        .map(|(i, _)| i)
        .collect();
    (flagged, zs)
}

/// Noisiness = robust std of the above-50 Hz part over robust std of the
/// below-50 Hz part; one-sided robust z above threshold flags.
/// Skipped (empty set) when fs <= 100 Hz.
pub fn detect_hf_noise<S: Scalar>(
    data: &Array2<S>,
    fs: f64,
    cfg: &BadChanConfig,
) -> Option<(BTreeSet<usize>, Vec<f64>)> {
    if fs <= 100.0 {
        return None;
    }
    let low = fir_filter(data, fs, &FilterSpec::lowpass(50.0)).ok()?;
    let noisiness: Vec<S> = data
        .rows()
        .into_iter()
        .zip(low.rows())
        .map(|(orig, lo)| {
            let hf: Vec<S> = orig.iter().zip(lo.iter()).map(|(&a, &b)| a - b).collect();
            let denom = stats::robust_std(lo.as_slice().expect("contiguous"));
            if denom <= S::zero() {
                S::zero()
            } else {
                stats::robust_std(&hf) / denom
            }
        })
        .collect();
    let zs: Vec<f64> = stats::robust_z(&noisiness).iter().map(|z| z.to_f64_c()).collect();
    let flagged = zs
        .iter()
        .enumerate()
        .filter(|(_, z)| **z > cfg.noisiness_z)
        .map(|(i, _)| i)
        .collect();
    Some((flagged, zs))
}

/// Fraction of 1 s windows in which a channel's best absolute correlation
/// with any other channel falls below the threshold.
pub fn detect_correlation<S: Scalar>(
    low_passed: &Array2<S>,
    fs: f64,
    cfg: &BadChanConfig,
) -> (BTreeSet<usize>, Vec<f64>) {
    let c = low_passed.nrows();
    let n = low_passed.ncols();
    let win = ((cfg.corr_window_secs * fs).round() as usize).max(2).min(n);
    let n_win = n / win;
    let mut bad_windows = vec![0usize; c];
    for w in 0..n_win {
        let seg = low_passed.slice(ndarray::s![.., w * win..(w + 1) * win]);
        for i in 0..c {
            let a = seg.row(i).to_vec();
            let mut best = 0.0_f64;
            for j in 0..c {
                if i == j {
                    continue;
                }
                let b = seg.row(j).to_vec();
                best = best.max(stats::pearson(&a, &b).to_f64_c().abs());
            }
            if best < cfg.corr_min {
                bad_windows[i] += 1;
            }
        }
    }
    let fracs: Vec<f64> = bad_windows
        .iter()
        .map(|&b| b as f64 / n_win.max(1) as f64)
        .collect();
    let flagged = fracs
        .iter()
        .enumerate()
        .filter(|(_, f)| **f > cfg.corr_bad_window_frac)
        .map(|(i, _)| i)
        .collect();
    (flagged, fracs)
}

fn channel_rng(seed: u64, channel: usize) -> ChaCha8Rng {
    // stable per-channel stream, independent of execution order
    let mut h = 0xcbf29ce484222325_u64;
    for b in seed
        .to_le_bytes()
        .into_iter()
        .chain((channel as u64).to_le_bytes())
    {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// RANSAC predictability: a channel is bad when its correlation with the
/// median of 50 spline reconstructions (each from a random 25% subset of
/// the other channels) is poor in too many 5 s windows.
pub fn detect_ransac<S: Scalar>(
    data: &Array2<S>,
    fs: f64,
    positions: &[[f64; 3]],
    cfg: &RansacConfig,
) -> Result<(BTreeSet<usize>, Vec<f64>), BadChanError> {
    let c = data.nrows();
    let n = data.ncols();
    if c < 8 {
        return Err(BadChanError::TooFewChannels { need: 8, found: c });
    }
    assert_eq!(positions.len(), c, "one position per channel");
    let subset_size = ((cfg.subset_frac * c as f64).round() as usize).clamp(4, c - 1);
    let win = ((cfg.window_secs * fs).round() as usize).max(2).min(n);
    let n_win = (n / win).max(1);
    let spline = SplineParams::default();

    let mut fracs = vec![0.0_f64; c];
    let mut flagged = BTreeSet::new();
    let mut predictions = Array2::<S>::zeros((cfg.n_samples, n));
    for target in 0..c {
        let mut rng = channel_rng(cfg.seed, target);
        let others: Vec<usize> = (0..c).filter(|&j| j != target).collect();
        for s in 0..cfg.n_samples {
            let mut pick = others.clone();
            pick.shuffle(&mut rng);
            pick.truncate(subset_size);
            pick.sort_unstable();
            let src_pos: Vec<[f64; 3]> = pick.iter().map(|&j| positions[j]).collect();
            let w = spline_weights::<S>(&src_pos, &[positions[target]], &spline)
                .expect("subset spline solve");
            for t in 0..n {
                let mut acc = S::zero();
                for (k, &j) in pick.iter().enumerate() {
                    acc = acc + w[[0, k]] * data[[j, t]];
                }
                predictions[[s, t]] = acc;
            }
        }
        // per-sample median across the reconstructions
        let mut median_pred = vec![S::zero(); n];
        let mut col = vec![S::zero(); cfg.n_samples];
        for t in 0..n {
            for s in 0..cfg.n_samples {
                col[s] = predictions[[s, t]];
            }
            median_pred[t] = stats::median(&col);
        }
        let actual = data.row(target).to_vec();
        let mut bad = 0usize;
        for w in 0..n_win {
            let lo = w * win;
            let hi = ((w + 1) * win).min(n);
            let r = stats::pearson(&median_pred[lo..hi], &actual[lo..hi]).to_f64_c();
            if r < cfg.corr_thresh {
                bad += 1;
            }
        }
        fracs[target] = bad as f64 / n_win as f64;
        if fracs[target] > cfg.bad_frac {
            flagged.insert(target);
        }
    }
    Ok((flagged, fracs))
}

/// Runs every criterion on a detrended, high-passed copy and returns the
/// union of verdicts keyed by channel name. Flat/NaN channels are found on
/// the raw copy first and excluded from the statistics of the remaining
/// criteria. The input matrix is left untouched.
pub fn detect_bad_channels<S: Scalar>(
    data: &Array2<S>,
    fs: f64,
    channels: &[ChannelInfo],
    with_ransac: bool,
    seed: u64,
    cfg: &BadChanConfig,
) -> Result<BadChannelReport, BadChanError> {
    assert_eq!(data.nrows(), channels.len());
    let mut report = BadChannelReport::default();
    let names: Vec<String> = channels.iter().map(|c| c.name().to_string()).collect();

    let nonfinite: Vec<bool> = channels.iter().map(|c| c.had_nonfinite).collect();
    let (flat, nan) = detect_flat_nan(data, &nonfinite, cfg);
    for &i in &flat {
        report.insert(Criterion::Flat, &names[i]);
    }
    for &i in &nan {
        report.insert(Criterion::Nan, &names[i]);
    }

    // detection copy: low-frequency trends removed, flat channels excluded
    let keep: Vec<usize> = (0..data.nrows())
        .filter(|i| !flat.contains(i) && !nan.contains(i))
        .collect();
    if keep.len() < 3 {
        return Ok(report);
    }
    let mut detrended = Array2::<S>::zeros((keep.len(), data.ncols()));
    for (row, &src) in keep.iter().enumerate() {
        let x = data.row(src).to_vec();
        let y = robust_detrend(&x, 1, 3, 3.0).unwrap_or(x);
        for (t, v) in y.into_iter().enumerate() {
            detrended[[row, t]] = v;
        }
    }
    let detrended = match fir_filter(&detrended, fs, &FilterSpec::highpass(1.0)) {
        Ok(f) => f,
        Err(_) => detrended, // window shorter than the filter: skip the HP
    };

    let (dev, dev_z) = detect_deviation(&detrended, cfg);
    for &i in &dev {
        report.insert(Criterion::Deviation, &names[keep[i]]);
    }
    report.z_scores.insert(
        Criterion::Deviation,
        keep.iter()
            .zip(dev_z.iter())
            .map(|(&i, &z)| (names[i].clone(), z))
            .collect(),
    );

    if let Some((hf, hf_z)) = detect_hf_noise(&detrended, fs, cfg) {
        for &i in &hf {
            report.insert(Criterion::HfNoise, &names[keep[i]]);
        }
        report.z_scores.insert(
            Criterion::HfNoise,
            keep.iter()
                .zip(hf_z.iter())
                .map(|(&i, &z)| (names[i].clone(), z))
                .collect(),
        );
    }

    let low = fir_filter(&detrended, fs, &FilterSpec::lowpass(50.0)).unwrap_or(detrended);
    let (corr, corr_fracs) = detect_correlation(&low, fs, cfg);
    for &i in &corr {
        report.insert(Criterion::Correlation, &names[keep[i]]);
    }
    report.z_scores.insert(
        Criterion::Correlation,
        keep.iter()
            .zip(corr_fracs.iter())
            .map(|(&i, &f)| (names[i].clone(), f))
            .collect(),
    );

    if with_ransac {
        // channels flagged by the cheaper criteria are kept out of the
        // predictor pool; a 20x-amplitude channel would poison every
        // reconstruction it takes part in
        let pool: Vec<usize> = (0..keep.len())
            .filter(|&i| !report.union.contains(&names[keep[i]]))
            .collect();
        let positions: Vec<[f64; 3]> = pool
            .iter()
            .filter_map(|&i| channels[keep[i]].position)
            .collect();
        if positions.len() == pool.len() && pool.len() >= 8 {
            let mut pool_data = Array2::<S>::zeros((pool.len(), low.ncols()));
            for (row, &src) in pool.iter().enumerate() {
                pool_data.row_mut(row).assign(&low.row(src));
            }
            let rcfg = RansacConfig { seed, ..cfg.ransac };
            let (ransac, fracs) = detect_ransac(&pool_data, fs, &positions, &rcfg)?;
            for &i in &ransac {
                report.insert(Criterion::Ransac, &names[keep[pool[i]]]);
            }
            report.z_scores.insert(
                Criterion::Ransac,
                pool.iter()
                    .zip(fracs.iter())
                    .map(|(&i, &f)| (names[keep[i]].clone(), f))
                    .collect(),
            );
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cheap_rng(seed: u64) -> impl FnMut() -> f64 {
        let mut state = seed;
        move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        }
    }

    #[test]
    fn flat_rules() {
        let cfg = BadChanConfig::default();
        let n = 1000;
        let mut data = Array2::<f64>::zeros((3, n));
        let mut rnd = cheap_rng(3);
        for t in 0..n {
            data[[1, t]] = 10.0 * rnd(); // healthy
            data[[2, t]] = 5.0; // constant...
        }
        data[[2, 100]] = 6.0; // ...except 3 samples
        data[[2, 500]] = 4.0;
        data[[2, 900]] = 7.0;
        let (flat, nan) = detect_flat_nan(&data, &[false; 3], &cfg);
        assert!(flat.contains(&0), "all-zero flagged");
        assert!(!flat.contains(&1), "healthy not flagged");
        assert!(flat.contains(&2), "nearly-constant flagged");
        assert!(nan.is_empty());
        let (_, nan) = detect_flat_nan(&data, &[false, true, false], &cfg);
        assert!(nan.contains(&1));
    }

    #[test]
    fn deviation_flags_extreme_amplitude() {
        let mut rnd = cheap_rng(11);
        let n = 2000;
        let mut data = Array2::<f64>::zeros((19, n));
        for c in 0..19 {
            let scale = if c == 7 { 200.0 } else { 10.0 };
            for t in 0..n {
                data[[c, t]] = scale * rnd();
            }
        }
        let (flagged, zs) = detect_deviation(&data, &BadChanConfig::default());
        assert_eq!(flagged, BTreeSet::from([7]));
        assert!(zs[7] > 5.0, "z = {}", zs[7]);
        // brute-force the z-score of channel 7
        let amps: Vec<f64> = (0..19)
            .map(|c| stats::robust_std(&data.row(c).to_vec()))
            .collect();
        let med = stats::median(&amps);
        let scale = 0.7413 * (stats::quantile(&amps, 0.75) - stats::quantile(&amps, 0.25));
        let brute = (amps[7] - med) / scale;
        assert!((zs[7] - brute).abs() < 1e-9);
    }

    #[test]
    fn deviation_near_flat_channel_gets_negative_z() {
        let mut rnd = cheap_rng(13);
        let n = 2000;
        let mut data = Array2::<f64>::zeros((19, n));
        for c in 0..19 {
            let scale = if c == 3 { 1e-3 } else { 10.0 };
            for t in 0..n {
                data[[c, t]] = scale * rnd();
            }
        }
        let (flagged, zs) = detect_deviation(&data, &BadChanConfig::default());
        assert!(flagged.contains(&3));
        assert!(zs[3] < -5.0, "z = {}", zs[3]);
    }

    #[test]
    fn identical_statistics_flag_nothing() {
        let mut rnd = cheap_rng(17);
        let data = Array2::from_shape_fn((10, 1500), |_| 10.0 * rnd());
        let (flagged, _) = detect_deviation(&data, &BadChanConfig::default());
        assert!(flagged.is_empty());
    }

    #[test]
    fn hf_noise_skipped_at_low_rate() {
        let data = Array2::<f64>::zeros((5, 500));
        assert!(detect_hf_noise(&data, 100.0, &BadChanConfig::default()).is_none());
    }

    #[test]
    fn correlation_flags_independent_noise() {
        // common source + tiny per-channel noise; one channel pure noise
        let mut rnd = cheap_rng(23);
        let fs = 250.0;
        let n = 5000;
        let common: Vec<f64> = (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * 6.0 * t as f64 / fs).sin())
            .collect();
        let mut data = Array2::<f64>::zeros((8, n));
        for c in 0..8 {
            for t in 0..n {
                data[[c, t]] = if c == 5 {
                    rnd()
                } else {
                    (1.0 + 0.2 * c as f64) * common[t] + 0.05 * rnd()
                };
            }
        }
        let (flagged, fracs) = detect_correlation(&data, fs, &BadChanConfig::default());
        assert_eq!(flagged, BTreeSet::from([5]), "fracs {fracs:?}");
    }

    #[test]
    fn duplicated_channels_stay_unflagged() {
        let mut rnd = cheap_rng(29);
        let fs = 250.0;
        let n = 3000;
        let common: Vec<f64> = (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * 9.0 * t as f64 / fs).sin())
            .collect();
        let mut data = Array2::<f64>::zeros((6, n));
        for c in 0..6 {
            for t in 0..n {
                data[[c, t]] = (1.0 + 0.1 * c as f64) * common[t] + 0.05 * rnd();
            }
        }
        let mut dup = Array2::<f64>::zeros((7, n));
        for c in 0..6 {
            dup.row_mut(c).assign(&data.row(c));
        }
        let first = data.row(0).to_owned();
        dup.row_mut(6).assign(&first);
        let cfg = BadChanConfig::default();
        let (dev, _) = detect_deviation(&dup, &cfg);
        let (corr, _) = detect_correlation(&dup, fs, &cfg);
        assert!(dev.is_empty());
        assert!(corr.is_empty());
    }
}
