//! Structured, replayable decision log.
//!
//! One JSON record per decision. Workers emit events in any order; the
//! collector merges them into a canonical (recording, window, stage)
//! order, so two runs of the same corpus produce the same log apart from
//! wall-clock fields.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("malformed log line {line}: {msg}")]
    MalformedLog { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Scan,
    Parse,
    Standardize,
    Segment,
    QaBadchan,
    QaMetrics,
    QaGate,
    Zapline,
    Badchan,
    DropChannels,
    Detrend,
    Filter,
    Reref,
    IcaFit,
    IcaClassify,
    IcaExclude,
    IcaCheck,
    BadchanPost,
    Interpolate,
    Resample,
    Output,
}

impl Stage {
    pub fn rank(&self) -> u8 {
        match self {
            Stage::Scan => 0,
            Stage::Parse => 1,
            Stage::Standardize => 2,
            Stage::Segment => 3,
            Stage::QaBadchan => 4,
            Stage::QaMetrics => 5,
            Stage::QaGate => 6,
            Stage::Zapline => 7,
            Stage::Badchan => 8,
            Stage::DropChannels => 9,
            Stage::Detrend => 10,
            Stage::Filter => 11,
            Stage::Reref => 12,
            Stage::IcaFit => 13,
            Stage::IcaClassify => 14,
            Stage::IcaExclude => 15,
            Stage::IcaCheck => 16,
            Stage::BadchanPost => 17,
            Stage::Interpolate => 18,
            Stage::Resample => 19,
            Stage::Output => 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Kept,
    Dropped,
    Flagged,
    Interpolated,
    Excluded,
    Info,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogEvent {
    pub recording_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub window_index: Option<usize>,
    pub stage: Stage,
    pub action: Action,
    pub payload: serde_json::Value,
    /// Wall-clock milliseconds since the epoch; informational only.
    pub wall_time_ms: u64,
    /// Emission order within one work item, for a stable merge.
    pub seq: u32,
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Per-work-item event buffer.
#[derive(Debug, Default, Clone)]
pub struct EventSink {
    events: Vec<LogEvent>,
}

impl EventSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn emit(
        &mut self,
        recording_id: &str,
        window_index: Option<usize>,
        stage: Stage,
        action: Action,
        payload: serde_json::Value,
    ) {
        let seq = self.events.len() as u32;
        self.events.push(LogEvent {
            recording_id: recording_id.to_string(),
            window_index,
            stage,
            action,
            payload,
            wall_time_ms: now_ms(),
            seq,
        });
    }

    pub fn into_events(self) -> Vec<LogEvent> {
        self.events
    }
}

/// Canonical order: recording, then recording-level events, then windows,
/// then stage rank, then emission order.
pub fn merge_events(mut events: Vec<LogEvent>) -> Vec<LogEvent> {
    events.sort_by(|a, b| {
        a.recording_id
            .cmp(&b.recording_id)
            .then_with(|| {
                let ka = a.window_index.map(|w| w as i64).unwrap_or(-1);
                let kb = b.window_index.map(|w| w as i64).unwrap_or(-1);
                ka.cmp(&kb)
            })
            .then_with(|| a.stage.rank().cmp(&b.stage.rank()))
            .then_with(|| a.seq.cmp(&b.seq))
    });
    events
}

pub fn write_log(path: &Path, events: &[LogEvent]) -> Result<(), LogError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in events {
        serde_json::to_writer(&mut w, e)
            .map_err(|e| LogError::MalformedLog { line: 0, msg: e.to_string() })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<LogEvent>, LogError> {
    let file = std::fs::File::open(path)?;
    let mut events = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: LogEvent = serde_json::from_str(&line).map_err(|e| LogError::MalformedLog {
            line: i + 1,
            msg: e.to_string(),
        })?;
        events.push(e);
    }
    Ok(events)
}

/// Aggregated view of a run log.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SummaryReport {
    pub windows_kept: usize,
    pub windows_dropped: usize,
    /// drop reason -> window count.
    pub drop_reasons: BTreeMap<String, usize>,
    /// channel name -> times interpolated.
    pub interpolated_channels: BTreeMap<String, usize>,
    /// IC class -> certainty bucket -> count. Buckets: "<0.5", "0.5-0.8",
    /// ">0.8".
    pub ic_classes: BTreeMap<String, BTreeMap<String, usize>>,
    /// IC class -> excluded component count.
    pub ic_excluded: BTreeMap<String, usize>,
}

fn bucket(prob: f64) -> &'static str {
    if prob > 0.8 {
        ">0.8"
    } else if prob >= 0.5 {
        "0.5-0.8"
    } else {
        "<0.5"
    }
}

/// Replays a log into histograms (interpolated channels, IC classes by
/// certainty, drop reasons).
pub fn summarize_events(events: &[LogEvent]) -> SummaryReport {
    let mut report = SummaryReport::default();
    for e in events {
        match (e.stage, e.action) {
            (Stage::Output, Action::Kept) => report.windows_kept += 1,
            (_, Action::Dropped) => {
                report.windows_dropped += 1;
                if let Some(reasons) = e.payload.get("reasons").and_then(|r| r.as_array()) {
                    for r in reasons {
                        if let Some(s) = r.as_str() {
                            *report.drop_reasons.entry(s.to_string()).or_default() += 1;
                        }
                    }
                }
            }
            (Stage::Interpolate, Action::Interpolated) => {
                if let Some(chs) = e.payload.get("channels").and_then(|c| c.as_array()) {
                    for ch in chs {
                        if let Some(s) = ch.as_str() {
                            *report
                                .interpolated_channels
                                .entry(s.to_string())
                                .or_default() += 1;
                        }
                    }
                }
            }
            (Stage::IcaClassify, Action::Info) => {
                if let Some(comps) = e.payload.get("components").and_then(|c| c.as_array()) {
                    for comp in comps {
                        let class = comp.get("class").and_then(|c| c.as_str()).unwrap_or("other");
                        let prob = comp.get("prob").and_then(|p| p.as_f64()).unwrap_or(0.0);
                        *report
                            .ic_classes
                            .entry(class.to_string())
                            .or_default()
                            .entry(bucket(prob).to_string())
                            .or_default() += 1;
                    }
                }
            }
            (Stage::IcaExclude, Action::Excluded) => {
                if let Some(comps) = e.payload.get("components").and_then(|c| c.as_array()) {
                    for comp in comps {
                        if let Some(class) = comp.get("class").and_then(|c| c.as_str()) {
                            *report.ic_excluded.entry(class.to_string()).or_default() += 1;
                        }
                    }
                }
            }
            _ => {}
        }
    }
    report
}

pub fn summarize_log(path: &Path) -> Result<SummaryReport, LogError> {
    Ok(summarize_events(&read_log(path)?))
}

impl std::fmt::Display for SummaryReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "windows kept:    {}", self.windows_kept)?;
        writeln!(f, "windows dropped: {}", self.windows_dropped)?;
        if !self.drop_reasons.is_empty() {
            writeln!(f, "drop reasons:")?;
            for (reason, count) in &self.drop_reasons {
                writeln!(f, "  {reason:<24} {count}")?;
            }
        }
        if !self.interpolated_channels.is_empty() {
            writeln!(f, "interpolated channels:")?;
            for (ch, count) in &self.interpolated_channels {
                writeln!(f, "  {ch:<8} {count}")?;
            }
        }
        if !self.ic_classes.is_empty() {
            writeln!(f, "IC classes (by certainty):")?;
            for (class, buckets) in &self.ic_classes {
                let line: Vec<String> = buckets.iter().map(|(b, c)| format!("{b}: {c}")).collect();
                writeln!(f, "  {class:<16} {}", line.join("  "))?;
            }
        }
        if !self.ic_excluded.is_empty() {
            writeln!(f, "ICs excluded:")?;
            for (class, count) in &self.ic_excluded {
                writeln!(f, "  {class:<16} {count}")?;
            }
        }
        Ok(())
    }
}

/// Minimal horizontal bar chart, one SVG per histogram.
pub fn write_bar_svg(path: &Path, title: &str, pairs: &[(String, usize)]) -> Result<(), LogError> {
    let max = pairs.iter().map(|(_, v)| *v).max().unwrap_or(1).max(1);
    let bar_h = 18;
    let gap = 6;
    let label_w = 140;
    let plot_w = 420;
    let height = 40 + pairs.len() * (bar_h + gap);
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"12\">\n",
        label_w + plot_w + 60,
        height
    ));
    s.push_str(&format!("<text x=\"8\" y=\"18\" font-size=\"14\">{title}</text>\n"));
    for (i, (label, value)) in pairs.iter().enumerate() {
        let y = 34 + i * (bar_h + gap);
        let w = (*value as f64 / max as f64 * plot_w as f64).round() as usize;
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            label_w - 6,
            y + bar_h - 5,
            label
        ));
        s.push_str(&format!(
            "<rect x=\"{label_w}\" y=\"{y}\" width=\"{w}\" height=\"{bar_h}\" fill=\"#4878d0\"/>\n"
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            label_w + w + 6,
            y + bar_h - 5,
            value
        ));
    }
    s.push_str("</svg>\n");
    std::fs::write(path, s)?;
    Ok(())
}

/// Writes the report's histograms as SVG files into `dir`.
pub fn write_plots(report: &SummaryReport, dir: &Path) -> Result<(), LogError> {
    std::fs::create_dir_all(dir)?;
    let interp: Vec<(String, usize)> = report
        .interpolated_channels
        .iter()
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    write_bar_svg(&dir.join("interpolated_channels.svg"), "Interpolated channels", &interp)?;
    let classes: Vec<(String, usize)> = report
        .ic_classes
        .iter()
        .map(|(k, v)| (k.clone(), v.values().sum()))
        .collect();
    write_bar_svg(&dir.join("ic_classes.svg"), "IC classifications", &classes)?;
    let drops: Vec<(String, usize)> = report
        .drop_reasons
        .iter()
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    write_bar_svg(&dir.join("drop_reasons.svg"), "Window drop reasons", &drops)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(rec: &str, win: Option<usize>, stage: Stage, action: Action, seq: u32) -> LogEvent {
        LogEvent {
            recording_id: rec.into(),
            window_index: win,
            stage,
            action,
            payload: serde_json::json!({}),
            wall_time_ms: 0,
            seq,
        }
    }

    #[test]
    fn merge_orders_recording_then_window_then_stage() {
        let events = vec![
            event("b.edf", Some(0), Stage::Zapline, Action::Info, 3),
            event("a.edf", Some(1), Stage::QaGate, Action::Kept, 2),
            event("a.edf", None, Stage::Parse, Action::Info, 0),
            event("a.edf", Some(0), Stage::Output, Action::Kept, 9),
            event("a.edf", Some(0), Stage::QaGate, Action::Kept, 1),
        ];
        let merged = merge_events(events);
        let keys: Vec<(String, Option<usize>, u8)> = merged
            .iter()
            .map(|e| (e.recording_id.clone(), e.window_index, e.stage.rank()))
            .collect();
        assert_eq!(keys[0], ("a.edf".into(), None, Stage::Parse.rank()));
        assert_eq!(keys[1], ("a.edf".into(), Some(0), Stage::QaGate.rank()));
        assert_eq!(keys[2], ("a.edf".into(), Some(0), Stage::Output.rank()));
        assert_eq!(keys[3], ("a.edf".into(), Some(1), Stage::QaGate.rank()));
        assert_eq!(keys[4], ("b.edf".into(), Some(0), Stage::Zapline.rank()));
    }

    #[test]
    fn summarize_counts_interpolations_and_drops() {
        let mut events = vec![
            event("r", Some(0), Stage::Output, Action::Kept, 5),
            event("r", Some(1), Stage::QaGate, Action::Dropped, 1),
        ];
        events[1].payload = serde_json::json!({"reasons": ["oha", "thv"]});
        let mut interp = event("r", Some(0), Stage::Interpolate, Action::Interpolated, 4);
        interp.payload = serde_json::json!({"channels": ["Fz", "Pz"]});
        events.push(interp.clone());
        events.push({
            let mut e = interp;
            e.window_index = Some(2);
            e.payload = serde_json::json!({"channels": ["Fz"]});
            e
        });
        let report = summarize_events(&events);
        assert_eq!(report.windows_kept, 1);
        assert_eq!(report.windows_dropped, 1);
        assert_eq!(report.drop_reasons["oha"], 1);
        assert_eq!(report.interpolated_channels["Fz"], 2);
        assert_eq!(report.interpolated_channels["Pz"], 1);
    }

    #[test]
    fn empty_log_is_all_zero() {
        let report = summarize_events(&[]);
        assert_eq!(report.windows_kept, 0);
        assert_eq!(report.windows_dropped, 0);
        assert!(report.interpolated_channels.is_empty());
    }

    #[test]
    fn log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut e = event("r.edf", Some(3), Stage::IcaClassify, Action::Info, 7);
        e.payload = serde_json::json!({"components": [{"index": 0, "class": "brain", "prob": 0.9}]});
        write_log(&path, &[e.clone()]).unwrap();
        let back = read_log(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].recording_id, "r.edf");
        assert_eq!(back[0].window_index, Some(3));
        let report = summarize_events(&back);
        assert_eq!(report.ic_classes["brain"][">0.8"], 1);
    }

    #[test]
    fn malformed_log_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{not json}\n").unwrap();
        assert!(matches!(
            summarize_log(&path),
            Err(LogError::MalformedLog { line: 1, .. })
        ));
    }
}
