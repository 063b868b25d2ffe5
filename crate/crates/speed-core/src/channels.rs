//! Channel-name standardization, type detection, and montage application.
//!
//! Raw clinical labels ("EEG FP1-REF", "EEG T3-LE", "EKG", "BURSTS", ...)
//! are mapped onto the canonical montage vocabulary; non-EEG channels and
//! channels with no montage position are removed before any numeric stage.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::edf::RawRecording;
use crate::Scalar;

const DEFAULT_MONTAGE: &str = include_str!("../data/montage_1020_19.txt");
const DEFAULT_ALIASES: &str = include_str!("../data/aliases.txt");

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("no EEG channels with montage positions remain")]
    NoEegChannels,
    #[error("malformed montage file: {0}")]
    MalformedMontage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ChannelType {
    Eeg,
    Eog,
    Ecg,
    Emg,
    Photic,
    Other,
}

/// Per-channel metadata carried alongside the sample matrix.
#[derive(Debug, Clone)]
pub struct ChannelInfo {
    pub raw_label: String,
    pub canonical_name: Option<String>,
    pub ch_type: ChannelType,
    /// Unit-sphere electrode position, once the montage is applied.
    pub position: Option<[f64; 3]>,
    /// Set when non-finite samples were zeroed at parse time.
    pub had_nonfinite: bool,
    /// Sampling rate the channel had in the source file.
    pub orig_fs: f64,
}

impl ChannelInfo {
    pub fn new(raw_label: impl Into<String>, orig_fs: f64) -> Self {
        Self {
            raw_label: raw_label.into(),
            canonical_name: None,
            ch_type: ChannelType::Other,
            position: None,
            had_nonfinite: false,
            orig_fs,
        }
    }

    /// Canonical name when known, else the raw label.
    pub fn name(&self) -> &str {
        self.canonical_name.as_deref().unwrap_or(&self.raw_label)
    }
}

/// Electrode set with unit-sphere positions and the ordered target subset
/// the pipeline emits.
#[derive(Debug, Clone)]
pub struct Montage {
    pub name: String,
    pub electrodes: BTreeMap<String, [f64; 3]>,
    pub target_order: Vec<String>,
}

impl Montage {
    /// The built-in 19-electrode 10-20 montage (plus Fpz/Oz/A1/A2 as
    /// recognized extras).
    pub fn standard_1020_19() -> Self {
        Self::parse(DEFAULT_MONTAGE, "standard_1020_19").expect("embedded montage parses")
    }

    /// Parses `name x y z [extra]` lines; `#` starts a comment. Lines not
    /// flagged `extra` form the target order.
    pub fn parse(text: &str, name: &str) -> Result<Self, ChannelError> {
        let mut electrodes = BTreeMap::new();
        let mut target_order = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 && parts.len() != 5 {
                return Err(ChannelError::MalformedMontage(format!(
                    "line {}: expected `name x y z [extra]`",
                    lineno + 1
                )));
            }
            let label = parts[0].to_string();
            let mut pos = [0.0_f64; 3];
            for (i, p) in parts[1..4].iter().enumerate() {
                pos[i] = p.parse::<f64>().map_err(|_| {
                    ChannelError::MalformedMontage(format!("line {}: bad coordinate", lineno + 1))
                })?;
            }
            let norm = (pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2]).sqrt();
            if norm < 1e-9 {
                return Err(ChannelError::MalformedMontage(format!(
                    "line {}: zero-length position",
                    lineno + 1
                )));
            }
            for p in &mut pos {
                *p /= norm;
            }
            let extra = parts.len() == 5 && parts[4].eq_ignore_ascii_case("extra");
            if !extra {
                target_order.push(label.clone());
            }
            electrodes.insert(label, pos);
        }
        if target_order.is_empty() {
            return Err(ChannelError::MalformedMontage("no target electrodes".into()));
        }
        Ok(Self {
            name: name.to_string(),
            electrodes,
            target_order,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, ChannelError> {
        let text = std::fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "custom".into());
        Self::parse(&text, &name)
    }

    pub fn position(&self, name: &str) -> Option<[f64; 3]> {
        self.electrodes.get(name).copied()
    }
}

/// Old-to-new nomenclature mapping (T3 -> T7 and friends).
#[derive(Debug, Clone)]
pub struct AliasTable {
    map: BTreeMap<String, String>,
}

impl AliasTable {
    pub fn standard() -> Self {
        Self::parse(DEFAULT_ALIASES)
    }

    /// Parses `from to` pairs, `#` comments allowed.
    pub fn parse(text: &str) -> Self {
        let mut map = BTreeMap::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            let mut it = line.split_whitespace();
            if let (Some(from), Some(to)) = (it.next(), it.next()) {
                map.insert(from.to_ascii_uppercase(), to.to_string());
            }
        }
        Self { map }
    }

    pub fn from_file(path: &Path) -> Result<Self, ChannelError> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn lookup(&self, upper: &str) -> Option<&str> {
        self.map.get(upper).map(|s| s.as_str())
    }
}

/// Strips modality prefixes and reference suffixes from a raw label.
fn clean_label(raw: &str) -> String {
    let mut s = raw.trim().to_ascii_uppercase();
    for prefix in ["EEG ", "EEG-", "EEG_"] {
        if let Some(rest) = s.strip_prefix(prefix) {
            s = rest.trim_start().to_string();
            break;
        }
    }
    for suffix in ["-REF", "-LE", " REF", " LE"] {
        if let Some(rest) = s.strip_suffix(suffix) {
            s = rest.trim_end().to_string();
            break;
        }
    }
    s
}

/// Maps a raw label onto the montage vocabulary; `None` when no rule
/// matches.
pub fn standardize_name(raw_label: &str, montage: &Montage, aliases: &AliasTable) -> Option<String> {
    let cleaned = clean_label(raw_label);
    if cleaned.is_empty() {
        return None;
    }
    let resolved = aliases.lookup(&cleaned).unwrap_or(&cleaned);
    montage
        .electrodes
        .keys()
        .find(|k| k.eq_ignore_ascii_case(resolved))
        .cloned()
}

/// Keyword-based channel type detection; montage membership means EEG.
pub fn detect_type(canonical_name: Option<&str>, raw_label: &str) -> ChannelType {
    let upper = raw_label.to_ascii_uppercase();
    for key in ["EKG", "ECG"] {
        if upper.contains(key) {
            return ChannelType::Ecg;
        }
    }
    for key in ["EOG", "LOC", "ROC"] {
        if upper.contains(key) {
            return ChannelType::Eog;
        }
    }
    if upper.contains("EMG") {
        return ChannelType::Emg;
    }
    if upper.contains("PHOTIC") {
        return ChannelType::Photic;
    }
    if canonical_name.is_some() {
        ChannelType::Eeg
    } else {
        ChannelType::Other
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub enum DropCause {
    NonEeg(String),
    NotInMontage,
}

/// What `apply_montage` did, for the decision log.
#[derive(Debug, Clone, Default)]
pub struct MontageReport {
    pub dropped: Vec<(String, DropCause)>,
    pub aliased: Vec<(String, String)>,
}

/// Drops non-EEG channels and EEG channels without a montage position;
/// survivors get canonical names and positions attached.
pub fn apply_montage<S: Scalar>(
    rec: &RawRecording<S>,
    montage: &Montage,
    aliases: &AliasTable,
) -> Result<(RawRecording<S>, MontageReport), ChannelError> {
    let mut report = MontageReport::default();
    let mut keep: Vec<usize> = Vec::new();
    let mut infos: Vec<ChannelInfo> = Vec::new();
    for (idx, ch) in rec.channels.iter().enumerate() {
        let canonical = standardize_name(&ch.raw_label, montage, aliases);
        let ch_type = detect_type(canonical.as_deref(), &ch.raw_label);
        if ch_type != ChannelType::Eeg {
            report
                .dropped
                .push((ch.raw_label.clone(), DropCause::NonEeg(format!("{ch_type:?}"))));
            continue;
        }
        let Some(name) = canonical else {
            report
                .dropped
                .push((ch.raw_label.clone(), DropCause::NotInMontage));
            continue;
        };
        let cleaned = clean_label(&ch.raw_label);
        if !name.eq_ignore_ascii_case(&cleaned) {
            report.aliased.push((ch.raw_label.clone(), name.clone()));
        }
        let position = montage.position(&name);
        if position.is_none() {
            report
                .dropped
                .push((ch.raw_label.clone(), DropCause::NotInMontage));
            continue;
        }
        keep.push(idx);
        infos.push(ChannelInfo {
            raw_label: ch.raw_label.clone(),
            canonical_name: Some(name),
            ch_type: ChannelType::Eeg,
            position,
            had_nonfinite: ch.had_nonfinite,
            orig_fs: ch.orig_fs,
        });
    }
    if keep.is_empty() {
        return Err(ChannelError::NoEegChannels);
    }
    let mut data = ndarray::Array2::<S>::zeros((keep.len(), rec.data.ncols()));
    for (row, &src) in keep.iter().enumerate() {
        data.row_mut(row).assign(&rec.data.row(src));
    }
    Ok((
        RawRecording {
            data,
            fs: rec.fs,
            channels: infos,
            annotations: rec.annotations.clone(),
            recording_id: rec.recording_id.clone(),
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn montage() -> Montage {
        Montage::standard_1020_19()
    }

    #[test]
    fn montage_loads_19_targets() {
        let m = montage();
        assert_eq!(m.target_order.len(), 19);
        assert_eq!(m.electrodes.len(), 23);
        for pos in m.electrodes.values() {
            let norm = (pos[0].powi(2) + pos[1].powi(2) + pos[2].powi(2)).sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
        }
        assert_eq!(m.target_order[0], "Fp1");
        assert_eq!(m.target_order[18], "O2");
    }

    #[test]
    fn name_standardization_rules() {
        let m = montage();
        let a = AliasTable::standard();
        assert_eq!(standardize_name("EEG FP1-REF", &m, &a).as_deref(), Some("Fp1"));
        assert_eq!(standardize_name("EEG T3-LE", &m, &a).as_deref(), Some("T7"));
        assert_eq!(standardize_name("BURSTS", &m, &a), None);
        assert_eq!(standardize_name("cz", &m, &a).as_deref(), Some("Cz"));
        assert_eq!(standardize_name("EEG T6-REF", &m, &a).as_deref(), Some("P8"));
    }

    #[test]
    fn type_detection_rules() {
        assert_eq!(detect_type(None, "EEG EKG-REF"), ChannelType::Ecg);
        assert_eq!(detect_type(Some("Fp1"), "EEG FP1-REF"), ChannelType::Eeg);
        assert_eq!(detect_type(None, "DC1"), ChannelType::Other);
        assert_eq!(detect_type(None, "PHOTIC PH"), ChannelType::Photic);
        assert_eq!(detect_type(None, "EMG chin"), ChannelType::Emg);
        assert_eq!(detect_type(None, "LOC"), ChannelType::Eog);
    }

    fn recording_with(labels: &[&str]) -> RawRecording<f64> {
        let n = 100;
        let data = Array2::from_shape_fn((labels.len(), n), |(i, j)| (i * n + j) as f64);
        RawRecording {
            data,
            fs: 250.0,
            channels: labels
                .iter()
                .map(|l| ChannelInfo::new(l.to_string(), 250.0))
                .collect(),
            annotations: vec![],
            recording_id: "test".into(),
        }
    }

    #[test]
    fn apply_montage_drops_and_attaches_positions() {
        let mut labels: Vec<String> = montage()
            .target_order
            .iter()
            .map(|n| format!("EEG {}-REF", n.to_ascii_uppercase()))
            .collect();
        labels.push("EEG EKG-REF".into());
        labels.push("EEG EKG2-REF".into());
        let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
        let rec = recording_with(&refs);
        let (out, report) = apply_montage(&rec, &montage(), &AliasTable::standard()).unwrap();
        assert_eq!(out.data.nrows(), 19);
        assert_eq!(report.dropped.len(), 2);
        for ch in &out.channels {
            assert!(ch.position.is_some());
            assert!(ch.canonical_name.is_some());
        }
        // surviving rows are bit-identical to their sources
        for (row, ch) in out.channels.iter().enumerate() {
            let src = rec
                .channels
                .iter()
                .position(|c| c.raw_label == ch.raw_label)
                .unwrap();
            assert_eq!(out.data.row(row), rec.data.row(src));
        }
    }

    #[test]
    fn apply_montage_is_idempotent() {
        let rec = recording_with(&["EEG FP1-REF", "EEG T3-REF", "Cz"]);
        let (once, _) = apply_montage(&rec, &montage(), &AliasTable::standard()).unwrap();
        let (twice, report) = apply_montage(&once, &montage(), &AliasTable::standard()).unwrap();
        assert_eq!(once.data, twice.data);
        assert!(report.dropped.is_empty());
        let names: Vec<&str> = twice.channels.iter().map(|c| c.name()).collect();
        assert_eq!(names, vec!["Fp1", "T7", "Cz"]);
    }

    #[test]
    fn only_non_eeg_channels_is_an_error() {
        let rec = recording_with(&["EEG EKG-REF", "EMG chin"]);
        assert!(matches!(
            apply_montage(&rec, &montage(), &AliasTable::standard()),
            Err(ChannelError::NoEegChannels)
        ));
    }
}
