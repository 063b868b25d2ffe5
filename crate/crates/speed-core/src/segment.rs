//! Windowing for pretraining and event-span cropping for downstream data.

use ndarray::s;
use thiserror::Error;

use crate::channels::ChannelInfo;
use crate::edf::RawRecording;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("downstream mode requires at least one annotated event")]
    NoEvents,
}

/// A fixed-duration channels-by-samples slice with provenance.
#[derive(Debug, Clone)]
pub struct Window<S> {
    pub data: ndarray::Array2<S>,
    pub fs: f64,
    pub recording_id: String,
    pub window_index: usize,
    /// Offset of the first sample in seconds from recording start.
    pub t_start: f64,
    pub channels: Vec<ChannelInfo>,
}

impl<S: Scalar> Window<S> {
    pub fn channel_names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.name().to_string()).collect()
    }
}

/// Cuts non-overlapping windows of exactly `window_secs`; the trailing
/// remainder is discarded. A recording shorter than one window yields an
/// empty vector (the caller logs it).
pub fn window_pretrain<S: Scalar>(rec: &RawRecording<S>, window_secs: f64) -> Vec<Window<S>> {
    assert!(window_secs > 0.0, "window_secs must be positive");
    let n_per = (window_secs * rec.fs).round() as usize;
    if n_per == 0 {
        return Vec::new();
    }
    let count = rec.n_samples() / n_per;
    (0..count)
        .map(|k| Window {
            data: rec.data.slice(s![.., k * n_per..(k + 1) * n_per]).to_owned(),
            fs: rec.fs,
            recording_id: rec.recording_id.clone(),
            window_index: k,
            t_start: (k * n_per) as f64 / rec.fs,
            channels: rec.channels.clone(),
        })
        .collect()
}

/// Truncates the recording to `[first onset, last onset + last duration]`
/// and rebases annotation onsets to the new origin.
pub fn crop_downstream<S: Scalar>(rec: &RawRecording<S>) -> Result<RawRecording<S>, SegmentError> {
    if rec.annotations.is_empty() {
        return Err(SegmentError::NoEvents);
    }
    // annotations are sorted by onset at parse time; be safe anyway
    let first_onset = rec
        .annotations
        .iter()
        .map(|a| a.onset)
        .fold(f64::INFINITY, f64::min);
    let last = rec
        .annotations
        .iter()
        .max_by(|a, b| a.onset.partial_cmp(&b.onset).unwrap_or(std::cmp::Ordering::Equal))
        .expect("nonempty");
    let span_end = last.onset + last.duration;

    let n = rec.n_samples();
    let start = ((first_onset * rec.fs).round() as usize).min(n);
    let end = ((span_end * rec.fs).round() as usize).clamp(start, n);
    let data = rec.data.slice(s![.., start..end]).to_owned();
    let annotations = rec
        .annotations
        .iter()
        .map(|a| crate::edf::Annotation {
            onset: a.onset - first_onset,
            duration: a.duration,
            text: a.text.clone(),
        })
        .collect();
    Ok(RawRecording {
        data,
        fs: rec.fs,
        channels: rec.channels.clone(),
        annotations,
        recording_id: rec.recording_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edf::Annotation;
    use ndarray::Array2;

    fn rec(duration_secs: f64, fs: f64, annotations: Vec<Annotation>) -> RawRecording<f64> {
        let n = (duration_secs * fs).round() as usize;
        let data = Array2::from_shape_fn((3, n), |(c, t)| (c * n + t) as f64);
        RawRecording {
            data,
            fs,
            channels: (0..3).map(|i| ChannelInfo::new(format!("ch{i}"), fs)).collect(),
            annotations,
            recording_id: "r".into(),
        }
    }

    #[test]
    fn windows_of_150s_at_60s_each() {
        let r = rec(150.0, 250.0, vec![]);
        let ws = window_pretrain(&r, 60.0);
        assert_eq!(ws.len(), 2);
        assert_eq!(ws[0].t_start, 0.0);
        assert_eq!(ws[1].t_start, 60.0);
        assert_eq!(ws[0].data.ncols(), 15000);
        assert_eq!(ws[1].window_index, 1);
    }

    #[test]
    fn exactly_one_window_at_the_boundary() {
        let r = rec(60.0, 250.0, vec![]);
        assert_eq!(window_pretrain(&r, 60.0).len(), 1);
    }

    #[test]
    fn short_recording_yields_no_windows() {
        let r = rec(59.9, 250.0, vec![]);
        assert!(window_pretrain(&r, 60.0).is_empty());
    }

    #[test]
    fn concatenated_windows_reproduce_the_prefix() {
        let r = rec(150.0, 250.0, vec![]);
        let ws = window_pretrain(&r, 60.0);
        let n_per = 15000;
        for (k, w) in ws.iter().enumerate() {
            for c in 0..3 {
                for t in 0..n_per {
                    assert_eq!(w.data[[c, t]], r.data[[c, k * n_per + t]]);
                }
            }
        }
    }

    #[test]
    fn crop_spans_first_to_last_event_end() {
        let anns = vec![
            Annotation { onset: 10.0, duration: 0.0, text: "start".into() },
            Annotation { onset: 100.0, duration: 2.0, text: "end".into() },
        ];
        let r = rec(120.0, 250.0, anns);
        let cropped = crop_downstream(&r).unwrap();
        // brute-force index arithmetic: [10 s, 102 s) at 250 Hz
        let want = (102.0_f64 * 250.0).round() as usize - (10.0_f64 * 250.0).round() as usize;
        assert_eq!(cropped.n_samples(), want);
        assert!((cropped.duration_secs() - 92.0).abs() < 1e-9);
        assert_eq!(cropped.annotations[0].onset, 0.0);
        assert_eq!(cropped.annotations[1].onset, 90.0);
        // data content preserved from the offset
        assert_eq!(cropped.data[[0, 0]], r.data[[0, 2500]]);
    }

    #[test]
    fn full_length_event_is_identity_crop() {
        let anns = vec![Annotation { onset: 0.0, duration: 120.0, text: "all".into() }];
        let r = rec(120.0, 250.0, anns);
        let cropped = crop_downstream(&r).unwrap();
        assert_eq!(cropped.n_samples(), r.n_samples());
        assert_eq!(cropped.data, r.data);
    }

    #[test]
    fn no_events_is_an_error() {
        let r = rec(120.0, 250.0, vec![]);
        assert!(matches!(crop_downstream(&r), Err(SegmentError::NoEvents)));
    }
}
