//! Synthetic EEG scenarios with exact ground truth, and an EDF writer.
//!
//! Scalp fields are sums of low-order spherical-harmonic spatial patterns
//! times band-limited timecourses over a 1/f background, so the
//! smooth-field assumptions behind interpolation and RANSAC hold by
//! construction. Faults (flat, noisy, shuffled, line, blink, muscle,
//! heart) are injected on known channels and recorded in the ground
//! truth. Everything is reproducible from `(scenario, seed)`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channels::{ChannelInfo, Montage};
use crate::edf::{Annotation, RawRecording};
use crate::fftutil::{fft_real, ifft_real};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("samples contain non-finite values; cannot digitize")]
    RangeOverflow,
    #[error("recording has no channels or samples")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Low-order spherical-harmonic pattern index (l <= 3).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HarmonicPattern {
    pub l: u32,
    pub m: i32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectrumKind {
    /// Band-limited Gaussian noise, unit variance before scaling.
    Band { lo_hz: f64, hi_hz: f64 },
    /// 1/f-shaped noise.
    Pink,
    /// Pure tone with a seeded phase.
    Sine { freq_hz: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceSpec {
    pub pattern: HarmonicPattern,
    pub spectrum: SpectrumKind,
    pub amplitude_uv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Flat,
    HfNoise,
    Shuffled,
    Deviant,
    Line,
    Blink,
    Muscle,
    Heart,
}

impl FaultKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FaultKind::Flat => "flat",
            FaultKind::HfNoise => "hf_noise",
            FaultKind::Shuffled => "shuffled",
            FaultKind::Deviant => "deviant",
            FaultKind::Line => "line",
            FaultKind::Blink => "blink",
            FaultKind::Muscle => "muscle",
            FaultKind::Heart => "heart",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    /// Target channel by canonical name; channel-spanning faults (line,
    /// blink, muscle, heart) ignore it.
    #[serde(default)]
    pub channel: Option<String>,
    /// Amplitude relative to the scenario background.
    #[serde(default = "default_strength")]
    pub strength: f64,
}

fn default_strength() -> f64 {
    10.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub name: String,
    /// Canonical channel names to emit; unknown names get no scalp field.
    pub channels: Vec<String>,
    pub fs: f64,
    pub duration_secs: f64,
    pub sources: Vec<SourceSpec>,
    pub faults: Vec<FaultSpec>,
    /// Per-channel independent 1/f background, microvolts.
    pub background_uv: f64,
    /// Line frequency used by the line fault.
    pub line_freq: f64,
    /// Annotated events: (onset, duration, text).
    pub events: Vec<(f64, f64, String)>,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "clean19".into(),
            channels: Montage::standard_1020_19().target_order,
            fs: 250.0,
            duration_secs: 120.0,
            sources: default_sources(),
            faults: vec![],
            background_uv: 2.0,
            line_freq: 60.0,
            events: vec![],
            seed: 0,
        }
    }
}

fn default_sources() -> Vec<SourceSpec> {
    // enough low-order patterns that every electrode carries a strong
    // shared field; the independent background stays small next to it.
    // The uniform l=0 term plays the volume-conduction common mode.
    vec![
        SourceSpec {
            pattern: HarmonicPattern { l: 0, m: 0 },
            spectrum: SpectrumKind::Pink,
            amplitude_uv: 32.0,
        },
        SourceSpec {
            pattern: HarmonicPattern { l: 1, m: 0 },
            spectrum: SpectrumKind::Band { lo_hz: 8.0, hi_hz: 12.0 },
            amplitude_uv: 22.0,
        },
        SourceSpec {
            pattern: HarmonicPattern { l: 1, m: 1 },
            spectrum: SpectrumKind::Band { lo_hz: 4.0, hi_hz: 7.0 },
            amplitude_uv: 18.0,
        },
        SourceSpec {
            pattern: HarmonicPattern { l: 1, m: -1 },
            spectrum: SpectrumKind::Pink,
            amplitude_uv: 18.0,
        },
        SourceSpec {
            pattern: HarmonicPattern { l: 2, m: 0 },
            spectrum: SpectrumKind::Pink,
            amplitude_uv: 14.0,
        },
        SourceSpec {
            pattern: HarmonicPattern { l: 2, m: 1 },
            spectrum: SpectrumKind::Band { lo_hz: 6.0, hi_hz: 14.0 },
            amplitude_uv: 14.0,
        },
        SourceSpec {
            pattern: HarmonicPattern { l: 2, m: -1 },
            spectrum: SpectrumKind::Band { lo_hz: 3.0, hi_hz: 9.0 },
            amplitude_uv: 14.0,
        },
        SourceSpec {
            pattern: HarmonicPattern { l: 2, m: 2 },
            spectrum: SpectrumKind::Band { lo_hz: 13.0, hi_hz: 25.0 },
            amplitude_uv: 10.0,
        },
        SourceSpec {
            pattern: HarmonicPattern { l: 3, m: 0 },
            spectrum: SpectrumKind::Pink,
            amplitude_uv: 10.0,
        },
    ]
}

/// Ground truth sufficient to score every detector.
#[derive(Debug, Clone, Serialize)]
pub struct GroundTruth {
    pub scenario: String,
    pub seed: u64,
    pub fs: f64,
    pub channel_labels: Vec<String>,
    pub canonical_names: Vec<String>,
    /// fault kind -> canonical channel names.
    pub fault_channels: BTreeMap<String, Vec<String>>,
    pub line: Option<LineGroundTruth>,
    /// channels-by-sources pattern matrix (scalp sources only).
    #[serde(skip)]
    pub mixing: Array2<f64>,
    #[serde(skip)]
    pub source_timecourses: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LineGroundTruth {
    pub freq_hz: f64,
    pub amplitude_uv: f64,
    pub n_patterns: usize,
    #[serde(skip)]
    pub patterns: Array2<f64>,
}

/// Real solid harmonics on the unit sphere, l <= 3, unnormalized.
fn solid_harmonic(l: u32, m: i32, p: [f64; 3]) -> f64 {
    let [x, y, z] = p;
    match (l, m) {
        (0, 0) => 1.0,
        (1, -1) => y,
        (1, 0) => z,
        (1, 1) => x,
        (2, -2) => x * y,
        (2, -1) => y * z,
        (2, 0) => 3.0 * z * z - 1.0,
        (2, 1) => x * z,
        (2, 2) => x * x - y * y,
        (3, -3) => y * (3.0 * x * x - y * y),
        (3, -2) => x * y * z,
        (3, -1) => y * (5.0 * z * z - 1.0),
        (3, 0) => z * (5.0 * z * z - 3.0),
        (3, 1) => x * (5.0 * z * z - 1.0),
        (3, 2) => z * (x * x - y * y),
        (3, 3) => x * (x * x - 3.0 * y * y),
        _ => panic!("harmonic degree {l} order {m} not supported"),
    }
}

/// Unit-norm pattern of a harmonic over the given positions.
fn pattern_vector(h: HarmonicPattern, positions: &[Option<[f64; 3]>]) -> Vec<f64> {
    let mut v: Vec<f64> = positions
        .iter()
        .map(|p| p.map(|p| solid_harmonic(h.l, h.m, p)).unwrap_or(0.0))
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Gaussian white noise spectrally shaped by `shape(freq)`, unit variance.
fn shaped_noise(n: usize, fs: f64, rng: &mut ChaCha8Rng, shape: impl Fn(f64) -> f64) -> Vec<f64> {
    let white: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut spec = fft_real(&white);
    let half = n / 2;
    for (b, v) in spec.iter_mut().enumerate() {
        let freq = if b <= half {
            b as f64 * fs / n as f64
        } else {
            (n - b) as f64 * fs / n as f64
        };
        let g = shape(freq);
        *v = Complex::new(v.re * g, v.im * g);
    }
    let mut x = ifft_real(&spec);
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let inv_std = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
    for v in &mut x {
        *v = (*v - mean) * inv_std;
    }
    x
}

fn timecourse(spec: &SpectrumKind, n: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match spec {
        SpectrumKind::Band { lo_hz, hi_hz } => {
            let (lo, hi) = (*lo_hz, *hi_hz);
            shaped_noise(n, fs, rng, move |f| if f >= lo && f <= hi { 1.0 } else { 0.0 })
        }
        SpectrumKind::Pink => shaped_noise(n, fs, rng, |f| 1.0 / f.max(0.5).sqrt()),
        SpectrumKind::Sine { freq_hz } => {
            let phase: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
            let f = *freq_hz;
            (0..n)
                .map(|t| (std::f64::consts::TAU * f * t as f64 / fs + phase).sin() * 2.0_f64.sqrt())
                .collect()
        }
    }
}

/// Smooth bump train for blink-like events: Gaussian bumps at random
/// times, roughly `rate_hz` events per second.
fn bump_train(n: usize, fs: f64, rate_hz: f64, width_secs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = vec![0.0_f64; n];
    let n_events = ((n as f64 / fs) * rate_hz).round() as usize;
    let half_w = (width_secs * fs / 2.0).max(1.0);
    for _ in 0..n_events {
        let center = rng.gen_range(0..n) as f64;
        let lo = ((center - 4.0 * half_w).max(0.0)) as usize;
        let hi = ((center + 4.0 * half_w) as usize).min(n - 1);
        for (t, v) in x.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let d = (t as f64 - center) / half_w;
            *v += (-0.5 * d * d).exp();
        }
    }
    x
}

/// Periodic sharp-wave train at `rate_hz` with narrow biphasic peaks.
fn periodic_spikes(n: usize, fs: f64, rate_hz: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = vec![0.0_f64; n];
    let period = fs / rate_hz;
    let phase0: f64 = rng.gen::<f64>() * period;
    let narrow = (0.04 * fs).max(1.0);
    let wide = (0.08 * fs).max(2.0);
    let mut center = phase0;
    while (center as usize) < n {
        let lo = ((center - 4.0 * wide).max(0.0)) as usize;
        let hi = ((center + 4.0 * wide) as usize).min(n - 1);
        for (t, v) in x.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let d = t as f64 - center;
            *v += 1.4 * (-0.5 * (d / narrow).powi(2)).exp()
                - 0.4 * (-0.5 * (d / wide).powi(2)).exp();
        }
        center += period;
    }
    x
}

/// Generates the recording and its ground truth. Same `(scenario, seed)`
/// gives a bit-identical result.
pub fn gen_scenario<S: Scalar>(sc: &Scenario) -> (RawRecording<S>, GroundTruth) {
    let montage = Montage::standard_1020_19();
    let n = (sc.duration_secs * sc.fs).round() as usize;
    let c = sc.channels.len();
    let positions: Vec<Option<[f64; 3]>> =
        sc.channels.iter().map(|name| montage.position(name)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);

    let mut data = Array2::<f64>::zeros((c, n));
    // scalp sources
    let mut mixing = Array2::<f64>::zeros((c, sc.sources.len()));
    let mut source_timecourses = Vec::with_capacity(sc.sources.len());
    for (k, src) in sc.sources.iter().enumerate() {
        let pat = pattern_vector(src.pattern, &positions);
        let tc = timecourse(&src.spectrum, n, sc.fs, &mut rng);
        for ch in 0..c {
            let w = pat[ch] * src.amplitude_uv;
            mixing[[ch, k]] = w;
            if w != 0.0 {
                for t in 0..n {
                    data[[ch, t]] += w * tc[t];
                }
            }
        }
        source_timecourses.push(tc);
    }
    // independent 1/f background per channel
    for ch in 0..c {
        let bg = shaped_noise(n, sc.fs, &mut rng, |f| 1.0 / f.max(0.5).sqrt());
        for t in 0..n {
            data[[ch, t]] += sc.background_uv * bg[t];
        }
    }

    // faults
    let mut fault_channels: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut line_truth: Option<LineGroundTruth> = None;
    let by_name = |name: &str| sc.channels.iter().position(|c| c == name);
    for fault in &sc.faults {
        match fault.kind {
            FaultKind::Flat | FaultKind::Shuffled | FaultKind::Deviant | FaultKind::HfNoise => {
                let Some(name) = fault.channel.as_deref() else { continue };
                let Some(idx) = by_name(name) else { continue };
                match fault.kind {
                    FaultKind::Flat => data.row_mut(idx).fill(0.0),
                    FaultKind::Deviant => {
                        let s = fault.strength;
                        data.row_mut(idx).mapv_inplace(|v| v * s);
                    }
                    FaultKind::Shuffled => {
                        let mut row: Vec<f64> = data.row(idx).to_vec();
                        row.shuffle(&mut rng);
                        for (t, v) in row.into_iter().enumerate() {
                            data[[idx, t]] = v;
                        }
                    }
                    FaultKind::HfNoise => {
                        let hi = (sc.fs / 2.0 - 10.0).min(110.0);
                        let noise = shaped_noise(n, sc.fs, &mut rng, move |f| {
                            if f >= 60.0 && f <= hi {
                                1.0
                            } else {
                                0.0
                            }
                        });
                        let s = fault.strength * sc.background_uv;
                        for t in 0..n {
                            data[[idx, t]] += s * noise[t];
                        }
                    }
                    _ => unreachable!(),
                }
                fault_channels
                    .entry(fault.kind.as_str().to_string())
                    .or_default()
                    .push(name.to_string());
            }
            FaultKind::Line => {
                // three amplitude-modulated spatial patterns at the line
                // frequency: a genuinely rank-3 contamination
                let amp = fault.strength * sc.background_uv;
                let pats = [
                    HarmonicPattern { l: 1, m: 0 },
                    HarmonicPattern { l: 1, m: 1 },
                    HarmonicPattern { l: 2, m: -1 },
                ];
                let mut pattern_mat = Array2::<f64>::zeros((c, pats.len()));
                for (j, hp) in pats.iter().enumerate() {
                    let pat = pattern_vector(*hp, &positions);
                    let phase: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
                    let am = shaped_noise(n, sc.fs, &mut rng, |f| {
                        if f <= 0.8 {
                            1.0
                        } else {
                            0.0
                        }
                    });
                    for ch in 0..c {
                        pattern_mat[[ch, j]] = pat[ch] * amp;
                        if pat[ch] == 0.0 {
                            continue;
                        }
                        for t in 0..n {
                            let carrier = (std::f64::consts::TAU * sc.line_freq * t as f64
                                / sc.fs
                                + phase)
                                .sin();
                            data[[ch, t]] += amp * pat[ch] * (1.0 + 0.4 * am[t]) * carrier;
                        }
                    }
                }
                line_truth = Some(LineGroundTruth {
                    freq_hz: sc.line_freq,
                    amplitude_uv: amp,
                    n_patterns: pats.len(),
                    patterns: pattern_mat,
                });
            }
            FaultKind::Blink | FaultKind::Muscle | FaultKind::Heart => {
                let (names, tc): (Vec<&str>, Vec<f64>) = match fault.kind {
                    FaultKind::Blink => (
                        vec!["Fp1", "Fp2", "F7", "F8"],
                        bump_train(n, sc.fs, 0.25, 0.25, &mut rng),
                    ),
                    FaultKind::Muscle => {
                        let hi = (sc.fs / 2.0 - 5.0).min(100.0);
                        (
                            vec!["T7", "T8", "F7", "F8"],
                            shaped_noise(n, sc.fs, &mut rng, move |f| {
                                if f >= 20.0 && f <= hi {
                                    1.0
                                } else {
                                    0.0
                                }
                            }),
                        )
                    }
                    FaultKind::Heart => (
                        vec!["T7", "T8", "P7", "P8", "O1", "O2"],
                        periodic_spikes(n, sc.fs, 1.1, &mut rng),
                    ),
                    _ => unreachable!(),
                };
                let amp = fault.strength * sc.background_uv;
                let mut touched = Vec::new();
                for name in names {
                    if let Some(idx) = by_name(name) {
                        let w = amp * if name.starts_with("Fp") { 1.0 } else { 0.6 };
                        for t in 0..n {
                            data[[idx, t]] += w * tc[t];
                        }
                        touched.push(name.to_string());
                    }
                }
                fault_channels
                    .entry(fault.kind.as_str().to_string())
                    .or_default()
                    .extend(touched);
            }
        }
    }

    let channel_labels: Vec<String> = sc
        .channels
        .iter()
        .map(|n| format!("EEG {}-REF", n.to_ascii_uppercase()))
        .collect();
    let channels: Vec<ChannelInfo> = channel_labels
        .iter()
        .map(|l| ChannelInfo::new(l.clone(), sc.fs))
        .collect();
    let annotations: Vec<Annotation> = sc
        .events
        .iter()
        .map(|(onset, duration, text)| Annotation {
            onset: *onset,
            duration: *duration,
            text: text.clone(),
        })
        .collect();

    let truth = GroundTruth {
        scenario: sc.name.clone(),
        seed: sc.seed,
        fs: sc.fs,
        channel_labels: channel_labels.clone(),
        canonical_names: sc.channels.clone(),
        fault_channels,
        line: line_truth,
        mixing,
        source_timecourses,
    };
    let rec = RawRecording {
        data: data.mapv(S::from_f64_c),
        fs: sc.fs,
        channels,
        annotations,
        recording_id: sc.name.clone(),
    };
    (rec, truth)
}

/// Built-in scenario library.
pub fn builtin_scenario(name: &str, seed: u64) -> Option<Scenario> {
    let base = Scenario {
        seed,
        ..Scenario::default()
    };
    match name {
        "clean19" => Some(Scenario {
            name: "clean19".into(),
            ..base
        }),
        "line60" => Some(Scenario {
            name: "line60".into(),
            faults: vec![FaultSpec {
                kind: FaultKind::Line,
                channel: None,
                strength: 10.0,
            }],
            ..base
        }),
        "badmix" => Some(Scenario {
            name: "badmix".into(),
            faults: vec![
                FaultSpec { kind: FaultKind::Flat, channel: Some("T7".into()), strength: 0.0 },
                FaultSpec { kind: FaultKind::Flat, channel: Some("O2".into()), strength: 0.0 },
                FaultSpec { kind: FaultKind::Deviant, channel: Some("F3".into()), strength: 20.0 },
                FaultSpec { kind: FaultKind::Shuffled, channel: Some("P4".into()), strength: 0.0 },
            ],
            ..base
        }),
        "artifacts" => Some(Scenario {
            name: "artifacts".into(),
            faults: vec![
                FaultSpec { kind: FaultKind::Line, channel: None, strength: 8.0 },
                FaultSpec { kind: FaultKind::Blink, channel: None, strength: 15.0 },
                FaultSpec { kind: FaultKind::Heart, channel: None, strength: 4.0 },
            ],
            ..base
        }),
        _ => None,
    }
}

fn without(channels: &[String], name: &str) -> Vec<String> {
    channels.iter().filter(|c| c.as_str() != name).cloned().collect()
}

/// Built-in multi-recording corpora, as (relative file name, scenario)
/// pairs. Per-recording seeds derive from the corpus seed.
pub fn builtin_corpus(name: &str, seed: u64) -> Option<Vec<(String, Scenario)>> {
    let all = Montage::standard_1020_19().target_order;
    let sub_seed = |k: u64| seed.wrapping_mul(1_000_003).wrapping_add(k);
    match name {
        // a small corpus exercising every pipeline branch: clean data,
        // line noise, missing/extra channels, a too-short recording, a
        // mostly-dead recording, artifacts, and annotated events
        "corpus10" => {
            let mut corpus = Vec::new();
            let mut push = |idx: usize, sc: Scenario| {
                corpus.push((format!("rec{idx:02}_{}.edf", sc.name), sc));
            };
            push(0, Scenario {
                name: "clean".into(),
                duration_secs: 150.0,
                seed: sub_seed(0),
                ..Scenario::default()
            });
            push(1, Scenario {
                name: "clean_long".into(),
                duration_secs: 180.0,
                seed: sub_seed(1),
                ..Scenario::default()
            });
            push(2, Scenario {
                name: "line".into(),
                duration_secs: 150.0,
                seed: sub_seed(2),
                ..builtin_scenario("line60", 0).unwrap()
            });
            push(3, Scenario {
                name: "missing_fz".into(),
                channels: without(&all, "Fz"),
                seed: sub_seed(3),
                ..Scenario::default()
            });
            push(4, Scenario {
                name: "missing_pz".into(),
                channels: without(&all, "Pz"),
                seed: sub_seed(4),
                ..Scenario::default()
            });
            push(5, Scenario {
                name: "extras".into(),
                channels: {
                    let mut c = all.clone();
                    c.push("A1".into());
                    c.push("A2".into());
                    c.push("EKG".into());
                    c
                },
                seed: sub_seed(5),
                ..Scenario::default()
            });
            push(6, Scenario {
                name: "short".into(),
                duration_secs: 45.0,
                seed: sub_seed(6),
                ..Scenario::default()
            });
            push(7, Scenario {
                name: "manybad".into(),
                faults: all
                    .iter()
                    .take(16)
                    .map(|ch| FaultSpec {
                        kind: FaultKind::Flat,
                        channel: Some(ch.clone()),
                        strength: 0.0,
                    })
                    .collect(),
                seed: sub_seed(7),
                ..Scenario::default()
            });
            push(8, Scenario {
                name: "artifacts".into(),
                seed: sub_seed(8),
                ..builtin_scenario("artifacts", 0).unwrap()
            });
            push(9, Scenario {
                name: "events".into(),
                duration_secs: 150.0,
                events: vec![
                    (10.0, 0.0, "T1".into()),
                    (60.0, 1.5, "T2".into()),
                    (100.0, 2.0, "T3".into()),
                ],
                seed: sub_seed(9),
                ..Scenario::default()
            });
            Some(corpus)
        }
        // clean recordings with known missing channels, for checking the
        // interpolation and IC-class bookkeeping end to end
        "figmix" => Some(vec![
            (
                "fig_missing_fz.edf".into(),
                Scenario {
                    name: "fig_missing_fz".into(),
                    channels: without(&all, "Fz"),
                    seed: sub_seed(0),
                    ..Scenario::default()
                },
            ),
            (
                "fig_missing_pz.edf".into(),
                Scenario {
                    name: "fig_missing_pz".into(),
                    channels: without(&all, "Pz"),
                    seed: sub_seed(1),
                    ..Scenario::default()
                },
            ),
            (
                "fig_clean.edf".into(),
                Scenario {
                    name: "fig_clean".into(),
                    duration_secs: 60.0,
                    seed: sub_seed(2),
                    ..Scenario::default()
                },
            ),
        ]),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// EDF writer

/// Fits a float into an 8-character ASCII header field. Returns the string
/// and the exact value it parses back to, which the digitization then
/// uses, keeping the round-trip error inside one quantum.
fn fmt8(v: f64) -> (String, f64) {
    for prec in (0..=7).rev() {
        let s = format!("{v:.prec$}");
        if s.len() <= 8 {
            let parsed: f64 = s.parse().expect("formatted float parses");
            return (s, parsed);
        }
    }
    let s = format!("{v:.0e}");
    let parsed: f64 = s.parse().unwrap_or(v);
    (s, parsed)
}

fn pad(field: &str, width: usize) -> Vec<u8> {
    let mut bytes = field.as_bytes().to_vec();
    bytes.truncate(width);
    bytes.resize(width, b' ');
    bytes
}

/// Writes the recording as EDF (plain) or EDF+C when annotations exist.
/// Samples are digitized into 16-bit with a per-channel physical range, so
/// each sample survives the round trip within one digitization quantum.
pub fn write_edf<S: Scalar>(rec: &RawRecording<S>, path: &Path) -> Result<(), SynthError> {
    let file = std::fs::File::create(path)?;
    write_edf_to(rec, std::io::BufWriter::new(file))
}

pub fn write_edf_to<S: Scalar, W: Write>(rec: &RawRecording<S>, mut w: W) -> Result<(), SynthError> {
    let c = rec.n_channels();
    let n = rec.n_samples();
    if c == 0 || n == 0 {
        return Err(SynthError::Empty);
    }
    if rec.data.iter().any(|v| !v.is_finite()) {
        return Err(SynthError::RangeOverflow);
    }
    let edf_plus = !rec.annotations.is_empty();

    // one-second records when that divides the data; otherwise one record
    let per_rec = rec.fs.round() as usize;
    let (samples_per_record, n_records, record_duration) =
        if per_rec > 0 && (rec.fs - per_rec as f64).abs() < 1e-9 && n % per_rec == 0 {
            (per_rec, n / per_rec, 1.0)
        } else {
            (n, 1, n as f64 / rec.fs)
        };

    // per-channel calibration from the data range, via the 8-char fields
    let dig_min = -32768_i32;
    let dig_max = 32767_i32;
    let mut phys: Vec<(String, f64, String, f64)> = Vec::with_capacity(c);
    for row in rec.data.rows() {
        let max_abs = row
            .iter()
            .fold(0.0_f64, |a, &v| a.max(v.to_f64_c().abs()))
            .max(1e-3);
        let (smax, pmax) = fmt8(max_abs * 1.0001);
        let (smin, pmin) = fmt8(-max_abs * 1.0001);
        phys.push((smin, pmin, smax, pmax));
    }

    // annotation signal: TAL bytes per record
    let mut tal_records: Vec<Vec<u8>> = Vec::new();
    let mut ann_samples_per_record = 0usize;
    if edf_plus {
        for r in 0..n_records {
            let t0 = r as f64 * record_duration;
            let mut tal = format!("+{t0}\u{14}\u{14}\u{0}").into_bytes();
            for a in &rec.annotations {
                let in_record = a.onset >= t0 && a.onset < t0 + record_duration;
                let last_catchall = r == n_records - 1 && a.onset >= t0 + record_duration;
                if in_record || last_catchall {
                    let mut s = format!("+{}", a.onset);
                    if a.duration > 0.0 {
                        s.push('\u{15}');
                        s.push_str(&format!("{}", a.duration));
                    }
                    s.push('\u{14}');
                    s.push_str(&a.text);
                    s.push('\u{14}');
                    s.push('\u{0}');
                    tal.extend_from_slice(s.as_bytes());
                }
            }
            ann_samples_per_record = ann_samples_per_record.max(tal.len().div_ceil(2));
            tal_records.push(tal);
        }
        ann_samples_per_record = ann_samples_per_record.max(8);
    }

    let n_signals = c + usize::from(edf_plus);
    let header_bytes = 256 * (1 + n_signals);

    // fixed header
    w.write_all(&pad("0", 8))?;
    w.write_all(&pad("X X X X", 80))?;
    w.write_all(&pad("Startdate 01-JAN-2001 X X X", 80))?;
    w.write_all(&pad("01.01.01", 8))?;
    w.write_all(&pad("00.00.00", 8))?;
    w.write_all(&pad(&header_bytes.to_string(), 8))?;
    w.write_all(&pad(if edf_plus { "EDF+C" } else { "" }, 44))?;
    w.write_all(&pad(&n_records.to_string(), 8))?;
    let dur_str = if (record_duration - record_duration.round()).abs() < 1e-9 {
        format!("{}", record_duration.round() as i64)
    } else {
        fmt8(record_duration).0
    };
    w.write_all(&pad(&dur_str, 8))?;
    w.write_all(&pad(&n_signals.to_string(), 4))?;

    // signal headers, field by field across all signals
    let ann_label = "EDF Annotations";
    let labels: Vec<String> = rec.channels.iter().map(|ch| ch.raw_label.clone()).collect();
    let write_field = |w: &mut W, width: usize, data_field: &dyn Fn(usize) -> String, ann: &str|
     -> std::io::Result<()> {
        for i in 0..c {
            w.write_all(&pad(&data_field(i), width))?;
        }
        if edf_plus {
            w.write_all(&pad(ann, width))?;
        }
        Ok(())
    };
    write_field(&mut w, 16, &|i| labels[i].clone(), ann_label)?;
    write_field(&mut w, 80, &|_| String::new(), "")?;
    write_field(&mut w, 8, &|_| "uV".into(), "")?;
    write_field(&mut w, 8, &|i| phys[i].0.clone(), "-1")?;
    write_field(&mut w, 8, &|i| phys[i].2.clone(), "1")?;
    write_field(&mut w, 8, &|_| dig_min.to_string(), &dig_min.to_string())?;
    write_field(&mut w, 8, &|_| dig_max.to_string(), &dig_max.to_string())?;
    write_field(&mut w, 80, &|_| String::new(), "")?;
    write_field(&mut w, 8, &|_| samples_per_record.to_string(), &ann_samples_per_record.to_string())?;
    write_field(&mut w, 32, &|_| String::new(), "")?;

    // data records
    let span = (dig_max - dig_min) as f64;
    for r in 0..n_records {
        for (ch, row) in rec.data.rows().into_iter().enumerate() {
            let (_, pmin, _, pmax) = (&phys[ch].0, phys[ch].1, &phys[ch].2, phys[ch].3);
            let gain = span / (pmax - pmin);
            for t in r * samples_per_record..(r + 1) * samples_per_record {
                let v = row[t].to_f64_c();
                let d = ((v - pmin) * gain + dig_min as f64).round();
                let d = d.clamp(dig_min as f64, dig_max as f64) as i16;
                w.write_all(&d.to_le_bytes())?;
            }
        }
        if edf_plus {
            let mut tal = tal_records[r].clone();
            tal.resize(ann_samples_per_record * 2, 0);
            w.write_all(&tal)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bit_identical() {
        let sc = builtin_scenario("badmix", 7).unwrap();
        let (a, _) = gen_scenario::<f64>(&sc);
        let (b, _) = gen_scenario::<f64>(&sc);
        assert_eq!(a.data, b.data);
        let sc2 = builtin_scenario("badmix", 8).unwrap();
        let (c, _) = gen_scenario::<f64>(&sc2);
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn badmix_truth_lists_exact_faults() {
        let sc = builtin_scenario("badmix", 1).unwrap();
        let (_, truth) = gen_scenario::<f64>(&sc);
        assert_eq!(truth.fault_channels["flat"], vec!["T7", "O2"]);
        assert_eq!(truth.fault_channels["deviant"], vec!["F3"]);
        assert_eq!(truth.fault_channels["shuffled"], vec!["P4"]);
        let total: usize = truth.fault_channels.values().map(|v| v.len()).sum();
        assert_eq!(total, 4);
    }

    #[test]
    fn minimal_file_size_arithmetic() {
        // 2 channels, plain EDF, 1 s at 250 Hz
        let sc = Scenario {
            name: "tiny".into(),
            channels: vec!["Cz".into(), "Pz".into()],
            duration_secs: 1.0,
            sources: default_sources(),
            ..Scenario::default()
        };
        let (rec, _) = gen_scenario::<f64>(&sc);
        let mut buf = Vec::new();
        write_edf_to(&rec, &mut buf).unwrap();
        assert_eq!(buf.len(), 256 * (1 + 2) + 2 * 250 * 2);
    }

    #[test]
    fn harmonic_patterns_are_orthogonal_enough() {
        let m = Montage::standard_1020_19();
        let positions: Vec<Option<[f64; 3]>> =
            m.target_order.iter().map(|n| m.position(n)).collect();
        let a = pattern_vector(HarmonicPattern { l: 1, m: 0 }, &positions);
        let b = pattern_vector(HarmonicPattern { l: 1, m: 1 }, &positions);
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!(dot.abs() < 0.3, "patterns too similar: {dot}");
    }
}
