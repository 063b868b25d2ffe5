//! Window quality gate.
//!
//! Four badness ratios are computed on a filtered copy of each window:
//! OHA (overall high amplitude), THV (timepoints of high variance across
//! channels), CHV (channels of high variance over time), and RBC (ratio of
//! bad channels). A window is dropped as soon as any ratio reaches its
//! cutoff, or when too few channels remain to interpolate the target
//! montage.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::stats;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityMetrics {
    /// Fraction of all samples with |x| above the amplitude threshold.
    pub oha: f64,
    /// Fraction of timepoints whose robust cross-channel std is high.
    pub thv: f64,
    /// Fraction of channels whose std over time is high.
    pub chv: f64,
    /// Bad channels over total channels.
    pub rbc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityThresholds {
    pub oha_max: f64,
    pub thv_max: f64,
    pub chv_max: f64,
    pub rbc_max: f64,
    /// Sample amplitude counted as "high", in microvolts.
    pub amp_abs_uv: f64,
    /// Cross-channel robust std counted as "high variance", in microvolts.
    pub var_time_uv: f64,
    /// Per-channel std counted as "high variance", in microvolts.
    pub var_chan_uv: f64,
    /// Minimum fraction of the target channel count that must be present.
    pub min_channel_frac: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self {
            oha_max: 0.8,
            thv_max: 0.5,
            chv_max: 0.5,
            rbc_max: 0.8,
            amp_abs_uv: 100.0,
            var_time_uv: 50.0,
            var_chan_uv: 50.0,
            min_channel_frac: 0.5,
        }
    }
}

/// Why a window was dropped (or a recording skipped).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Oha,
    Thv,
    Chv,
    Rbc,
    MinChannel,
    IcaExcess,
    RecordingTooShort,
    Stage(String),
}

impl std::fmt::Display for DropReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DropReason::Oha => write!(f, "oha"),
            DropReason::Thv => write!(f, "thv"),
            DropReason::Chv => write!(f, "chv"),
            DropReason::Rbc => write!(f, "rbc"),
            DropReason::MinChannel => write!(f, "min_channel"),
            DropReason::IcaExcess => write!(f, "ica_excess"),
            DropReason::RecordingTooShort => write!(f, "recording_too_short"),
            DropReason::Stage(s) => write!(f, "stage:{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateDecision {
    Keep,
    Drop(Vec<DropReason>),
}

impl GateDecision {
    pub fn is_keep(&self) -> bool {
        matches!(self, GateDecision::Keep)
    }
}

/// Computes the four quality ratios on an already-filtered window copy.
pub fn compute_metrics<S: Scalar>(
    data: &Array2<S>,
    n_bad_channels: usize,
    th: &QualityThresholds,
) -> QualityMetrics {
    let (c, n) = (data.nrows(), data.ncols());
    let amp = S::from_f64_c(th.amp_abs_uv);
    let high = data.iter().filter(|v| v.abs() > amp).count();
    let oha = high as f64 / (c * n) as f64;

    let var_time = S::from_f64_c(th.var_time_uv);
    let mut high_t = 0usize;
    let mut col = vec![S::zero(); c];
    for t in 0..n {
        for ch in 0..c {
            col[ch] = data[[ch, t]];
        }
        if stats::robust_std(&col) > var_time {
            high_t += 1;
        }
    }
    let thv = high_t as f64 / n as f64;

    let mut high_c = 0usize;
    let var_chan = S::from_f64_c(th.var_chan_uv);
    for row in data.rows() {
        if stats::std_dev(row.as_slice().expect("contiguous row")) > var_chan {
            high_c += 1;
        }
    }
    let chv = high_c as f64 / c as f64;

    QualityMetrics {
        oha,
        thv,
        chv,
        rbc: n_bad_channels as f64 / c as f64,
    }
}

/// Keep unless any badness ratio reaches its cutoff; every violated
/// criterion is reported.
pub fn gate(m: &QualityMetrics, th: &QualityThresholds) -> GateDecision {
    let mut reasons = Vec::new();
    if m.oha >= th.oha_max {
        reasons.push(DropReason::Oha);
    }
    if m.thv >= th.thv_max {
        reasons.push(DropReason::Thv);
    }
    if m.chv >= th.chv_max {
        reasons.push(DropReason::Chv);
    }
    if m.rbc >= th.rbc_max {
        reasons.push(DropReason::Rbc);
    }
    if reasons.is_empty() {
        GateDecision::Keep
    } else {
        GateDecision::Drop(reasons)
    }
}

/// Drop when fewer than `ceil(min_frac * n_target)` channels are present.
pub fn min_channel_check(n_present: usize, n_target: usize, min_frac: f64) -> GateDecision {
    assert!(n_target >= 1);
    let need = (min_frac * n_target as f64).ceil() as usize;
    if n_present < need {
        GateDecision::Drop(vec![DropReason::MinChannel])
    } else {
        GateDecision::Keep
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn th() -> QualityThresholds {
        QualityThresholds::default()
    }

    #[test]
    fn all_zero_window_scores_zero() {
        let data = Array2::<f64>::zeros((19, 1000));
        let m = compute_metrics(&data, 0, &th());
        assert_eq!(m.oha, 0.0);
        assert_eq!(m.thv, 0.0);
        assert_eq!(m.chv, 0.0);
        assert_eq!(m.rbc, 0.0);
    }

    #[test]
    fn loud_sine_trips_oha() {
        // 500 uV sine everywhere; fraction of samples above 100 uV is
        // 1 - (2/pi) asin(0.2) ~ 0.872
        let n = 10000;
        let data = Array2::from_shape_fn((19, n), |(_, t)| {
            500.0 * (2.0 * std::f64::consts::PI * 10.0 * t as f64 / 250.0).sin()
        });
        let m = compute_metrics(&data, 0, &th());
        let analytic = 1.0 - 2.0 / std::f64::consts::PI * (0.2_f64).asin();
        assert!(m.oha > 0.5);
        assert!((m.oha - analytic).abs() < 0.01, "oha {} vs {analytic}", m.oha);
    }

    #[test]
    fn rbc_is_the_exact_ratio() {
        let data = Array2::<f64>::zeros((19, 100));
        let m = compute_metrics(&data, 4, &th());
        assert!((m.rbc - 4.0 / 19.0).abs() < 1e-12);
    }

    #[test]
    fn gate_boundary_semantics() {
        let t = th();
        let keep = QualityMetrics { oha: 0.79, thv: 0.49, chv: 0.49, rbc: 0.79 };
        assert!(gate(&keep, &t).is_keep());
        let drop = QualityMetrics { oha: 0.9, thv: 0.1, chv: 0.1, rbc: 0.0 };
        match gate(&drop, &t) {
            GateDecision::Drop(reasons) => assert_eq!(reasons, vec![DropReason::Oha]),
            GateDecision::Keep => panic!("expected drop"),
        }
        let zero = QualityMetrics { oha: 0.0, thv: 0.0, chv: 0.0, rbc: 0.0 };
        assert!(gate(&zero, &t).is_keep());
    }

    #[test]
    fn gate_reports_every_violation() {
        let m = QualityMetrics { oha: 0.8, thv: 0.5, chv: 0.5, rbc: 0.8 };
        match gate(&m, &th()) {
            GateDecision::Drop(reasons) => assert_eq!(reasons.len(), 4),
            GateDecision::Keep => panic!("expected drop"),
        }
    }

    #[test]
    fn gate_is_monotone() {
        let t = th();
        let base = QualityMetrics { oha: 0.3, thv: 0.2, chv: 0.1, rbc: 0.4 };
        assert!(gate(&base, &t).is_keep());
        for bump in [
            QualityMetrics { oha: 0.85, ..base },
            QualityMetrics { thv: 0.55, ..base },
            QualityMetrics { chv: 0.9, ..base },
            QualityMetrics { rbc: 0.81, ..base },
        ] {
            assert!(!gate(&bump, &t).is_keep());
        }
    }

    #[test]
    fn metrics_invariant_under_channel_permutation() {
        let n = 500;
        let data = Array2::from_shape_fn((5, n), |(c, t)| {
            (c as f64 + 1.0) * 60.0 * (0.07 * t as f64 + c as f64).sin()
        });
        let mut permuted = data.clone();
        for (dst, src) in [(0usize, 3usize), (1, 4), (2, 0), (3, 1), (4, 2)] {
            permuted.row_mut(dst).assign(&data.row(src));
        }
        let a = compute_metrics(&data, 2, &th());
        let b = compute_metrics(&permuted, 2, &th());
        assert_eq!(a, b);
    }

    #[test]
    fn half_channel_rule() {
        assert!(min_channel_check(10, 19, 0.5).is_keep());
        assert!(!min_channel_check(9, 19, 0.5).is_keep());
        assert!(!min_channel_check(0, 19, 0.5).is_keep());
    }
}
