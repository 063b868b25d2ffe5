//! EDF and EDF+ ingest.
//!
//! Parses the fixed-width ASCII headers and 16-bit little-endian sample
//! records into physically calibrated microvolt signals, decodes EDF+
//! time-stamped annotation lists (TALs), and enumerates corpora on disk.
//! EDF+D (discontinuous) files are rejected.

use std::collections::HashMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use thiserror::Error;

use crate::channels::ChannelInfo;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum EdfError {
    #[error("malformed EDF header: {0}")]
    MalformedHeader(String),
    #[error("file length inconsistent with header: expected {expected} data bytes, found {actual}")]
    SizeMismatch { expected: u64, actual: u64 },
    #[error("recording contains no data")]
    EmptyRecording,
    #[error("EDF+D (discontinuous) files are not supported")]
    Discontinuous,
    #[error("malformed annotation list: {0}")]
    MalformedTal(String),
    #[error("signals have differing sampling rates; harmonize before building a recording")]
    MixedSamplingRates,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Start-of-recording timestamp from the EDF header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EdfDateTime {
    pub year: u16,
    pub month: u8,
    pub day: u8,
    pub hour: u8,
    pub minute: u8,
    pub second: u8,
}

#[derive(Debug, Clone)]
pub struct EdfHeader {
    pub version: String,
    pub start_datetime: EdfDateTime,
    pub n_data_records: i64,
    pub record_duration: f64,
    pub n_signals: usize,
    /// True when the reserved field carries "EDF+C".
    pub edf_plus: bool,
}

#[derive(Debug, Clone)]
pub struct SignalHeader {
    pub label: String,
    pub transducer: String,
    pub physical_dim: String,
    pub phys_min: f64,
    pub phys_max: f64,
    pub dig_min: i32,
    pub dig_max: i32,
    pub prefilter: String,
    pub samples_per_record: usize,
}

impl SignalHeader {
    pub fn is_annotation(&self) -> bool {
        self.label.trim() == "EDF Annotations"
    }

    /// Size of one digitization step in physical units.
    pub fn quantum(&self) -> f64 {
        (self.phys_max - self.phys_min) / (self.dig_max - self.dig_min) as f64
    }
}

/// One annotated event: onset and duration in seconds from recording start.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Annotation {
    pub onset: f64,
    pub duration: f64,
    pub text: String,
}

/// A losslessly parsed EDF file; signals keep their own sampling rates.
#[derive(Debug, Clone)]
pub struct EdfFile<S> {
    pub header: EdfHeader,
    pub signals: Vec<EdfSignal<S>>,
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone)]
pub struct EdfSignal<S> {
    pub header: SignalHeader,
    pub fs: f64,
    /// Calibrated samples in microvolts.
    pub samples: Vec<S>,
    pub had_nonfinite: bool,
}

/// Calibrated multichannel recording at a single sampling rate.
#[derive(Debug, Clone)]
pub struct RawRecording<S> {
    /// Channels-by-samples matrix in microvolts.
    pub data: Array2<S>,
    pub fs: f64,
    pub channels: Vec<ChannelInfo>,
    pub annotations: Vec<Annotation>,
    pub recording_id: String,
}

impl<S: Scalar> RawRecording<S> {
    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn duration_secs(&self) -> f64 {
        self.n_samples() as f64 / self.fs
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.name().to_string()).collect()
    }
}

fn ascii_field(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).trim().to_string()
}

fn parse_num<T: std::str::FromStr>(bytes: &[u8], what: &str) -> Result<T, EdfError> {
    ascii_field(bytes)
        .parse::<T>()
        .map_err(|_| EdfError::MalformedHeader(format!("unparseable {what}: {:?}", ascii_field(bytes))))
}

fn parse_date_time(date: &str, time: &str) -> Result<EdfDateTime, EdfError> {
    let d: Vec<&str> = date.split(['.', ':', '-']).collect();
    let t: Vec<&str> = time.split(['.', ':', '-']).collect();
    if d.len() != 3 || t.len() != 3 {
        return Err(EdfError::MalformedHeader(format!("bad date/time {date} {time}")));
    }
    let num = |s: &str, what: &str| -> Result<u8, EdfError> {
        s.parse::<u8>()
            .map_err(|_| EdfError::MalformedHeader(format!("bad {what}: {s}")))
    };
    let yy = num(d[2], "year")? as u16;
    // EDF clipping date: two-digit years 85-99 are 1985-1999
    let year = if yy >= 85 { 1900 + yy } else { 2000 + yy };
    Ok(EdfDateTime {
        year,
        month: num(d[1], "month")?,
        day: num(d[0], "day")?,
        hour: num(t[0], "hour")?,
        minute: num(t[1], "minute")?,
        second: num(t[2], "second")?,
    })
}

/// Conversion factor from the header's physical dimension to microvolts.
fn unit_to_uv(dim: &str) -> f64 {
    match dim.trim() {
        "mV" => 1e3,
        "V" => 1e6,
        "nV" => 1e-3,
        _ => 1.0, // uV or unknown: taken as microvolts
    }
}

/// Parses an EDF or EDF+C stream into calibrated per-signal samples.
///
/// Signals keep their individual sampling rates; non-finite samples are
/// zeroed and the signal flagged. "EDF Annotations" signals are decoded
/// into [`Annotation`]s instead of data channels.
pub fn parse_edf<S: Scalar, R: Read>(mut reader: R) -> Result<EdfFile<S>, EdfError> {
    let mut fixed = [0u8; 256];
    reader
        .read_exact(&mut fixed)
        .map_err(|_| EdfError::MalformedHeader("file shorter than fixed header".into()))?;

    let version = ascii_field(&fixed[0..8]);
    let start_date = ascii_field(&fixed[168..176]);
    let start_time = ascii_field(&fixed[176..184]);
    let header_bytes: usize = parse_num(&fixed[184..192], "header byte count")?;
    let reserved = ascii_field(&fixed[192..236]);
    let n_data_records: i64 = parse_num(&fixed[236..244], "data record count")?;
    let record_duration: f64 = parse_num(&fixed[244..252], "record duration")?;
    let n_signals: usize = parse_num(&fixed[252..256], "signal count")?;

    if reserved.starts_with("EDF+D") {
        return Err(EdfError::Discontinuous);
    }
    let edf_plus = reserved.starts_with("EDF+C");
    if n_signals == 0 {
        return Err(EdfError::MalformedHeader("zero signals".into()));
    }
    if record_duration <= 0.0 {
        return Err(EdfError::MalformedHeader(format!(
            "record duration {record_duration} must be positive"
        )));
    }
    if header_bytes != 256 * (1 + n_signals) {
        return Err(EdfError::MalformedHeader(format!(
            "header byte count {header_bytes} does not match {} signals",
            n_signals
        )));
    }
    if n_data_records < -1 {
        return Err(EdfError::MalformedHeader(format!(
            "bad data record count {n_data_records}"
        )));
    }
    let start_datetime = parse_date_time(&start_date, &start_time)?;

    let mut sig_block = vec![0u8; 256 * n_signals];
    reader
        .read_exact(&mut sig_block)
        .map_err(|_| EdfError::MalformedHeader("file shorter than signal headers".into()))?;
    let field = |offset: usize, width: usize, idx: usize| -> &[u8] {
        let base = offset * n_signals + idx * width;
        &sig_block[base..base + width]
    };

    let mut headers = Vec::with_capacity(n_signals);
    for i in 0..n_signals {
        let label = ascii_field(field(0, 16, i));
        let transducer = ascii_field(field(16, 80, i));
        let physical_dim = ascii_field(field(96, 8, i));
        let phys_min: f64 = parse_num(field(104, 8, i), "physical minimum")?;
        let phys_max: f64 = parse_num(field(112, 8, i), "physical maximum")?;
        let dig_min: i32 = parse_num(field(120, 8, i), "digital minimum")?;
        let dig_max: i32 = parse_num(field(128, 8, i), "digital maximum")?;
        let prefilter = ascii_field(field(136, 80, i));
        let samples_per_record: usize = parse_num(field(216, 8, i), "samples per record")?;
        let h = SignalHeader {
            label,
            transducer,
            physical_dim,
            phys_min,
            phys_max,
            dig_min,
            dig_max,
            prefilter,
            samples_per_record,
        };
        if !h.is_annotation() {
            if h.dig_max <= h.dig_min {
                return Err(EdfError::MalformedHeader(format!(
                    "signal {}: digital range [{}, {}]",
                    i, h.dig_min, h.dig_max
                )));
            }
            if h.phys_max == h.phys_min || !h.phys_max.is_finite() || !h.phys_min.is_finite() {
                return Err(EdfError::MalformedHeader(format!(
                    "signal {}: physical range [{}, {}]",
                    i, h.phys_min, h.phys_max
                )));
            }
        }
        if h.samples_per_record == 0 {
            return Err(EdfError::MalformedHeader(format!(
                "signal {i}: zero samples per record"
            )));
        }
        headers.push(h);
    }

    let mut data = Vec::new();
    reader.read_to_end(&mut data)?;
    let record_size: usize = headers.iter().map(|h| h.samples_per_record * 2).sum();
    let n_records = if n_data_records == -1 {
        if record_size == 0 || data.len() % record_size != 0 {
            return Err(EdfError::SizeMismatch {
                expected: record_size as u64,
                actual: data.len() as u64,
            });
        }
        data.len() / record_size
    } else {
        let expected = n_data_records as u64 * record_size as u64;
        if data.len() as u64 != expected {
            return Err(EdfError::SizeMismatch {
                expected,
                actual: data.len() as u64,
            });
        }
        n_data_records as usize
    };
    if n_records == 0 || headers.iter().all(|h| h.is_annotation()) {
        return Err(EdfError::EmptyRecording);
    }

    let mut signals: Vec<EdfSignal<S>> = headers
        .iter()
        .filter(|h| !h.is_annotation())
        .map(|h| EdfSignal {
            header: h.clone(),
            fs: h.samples_per_record as f64 / record_duration,
            samples: Vec::with_capacity(h.samples_per_record * n_records),
            had_nonfinite: false,
        })
        .collect();
    let mut annotations: Vec<Annotation> = Vec::new();

    let mut offset = 0usize;
    for _record in 0..n_records {
        let mut sig_idx = 0usize;
        for h in &headers {
            let nbytes = h.samples_per_record * 2;
            let chunk = &data[offset..offset + nbytes];
            if h.is_annotation() {
                annotations.extend(read_annotations(chunk)?);
            } else {
                let sig = &mut signals[sig_idx];
                let gain = S::from_f64_c(h.quantum() * unit_to_uv(&h.physical_dim));
                let lo_dig = S::from_f64_c(h.dig_min as f64);
                let lo_phys = S::from_f64_c(h.phys_min * unit_to_uv(&h.physical_dim));
                for pair in chunk.chunks_exact(2) {
                    let d = i16::from_le_bytes([pair[0], pair[1]]);
                    let mut v = (S::from_f64_c(d as f64) - lo_dig) * gain + lo_phys;
                    if !v.is_finite() {
                        v = S::zero();
                        sig.had_nonfinite = true;
                    }
                    sig.samples.push(v);
                }
                sig_idx += 1;
            }
            offset += nbytes;
        }
    }
    annotations.sort_by(|a, b| a.onset.partial_cmp(&b.onset).unwrap_or(std::cmp::Ordering::Equal));

    Ok(EdfFile {
        header: EdfHeader {
            version,
            start_datetime,
            n_data_records: n_records as i64,
            record_duration,
            n_signals,
            edf_plus,
        },
        signals,
        annotations,
    })
}

impl<S: Scalar> EdfFile<S> {
    /// True when every data signal shares one sampling rate.
    pub fn uniform_rate(&self) -> bool {
        self.signals
            .windows(2)
            .all(|w| (w[0].fs - w[1].fs).abs() < 1e-9)
    }

    /// The most common sampling rate across signals (ties: the highest).
    pub fn modal_fs(&self) -> f64 {
        let mut counts: HashMap<u64, (usize, f64)> = HashMap::new();
        for s in &self.signals {
            let key = (s.fs * 1e6).round() as u64;
            let e = counts.entry(key).or_insert((0, s.fs));
            e.0 += 1;
        }
        counts
            .values()
            .max_by(|a, b| a.0.cmp(&b.0).then(a.1.partial_cmp(&b.1).unwrap()))
            .map(|&(_, fs)| fs)
            .unwrap_or(0.0)
    }

    /// Assembles the uniform channels-by-samples recording.
    /// Fails with [`EdfError::MixedSamplingRates`] when rates differ.
    pub fn into_recording(self, recording_id: &str) -> Result<RawRecording<S>, EdfError> {
        if !self.uniform_rate() {
            return Err(EdfError::MixedSamplingRates);
        }
        let fs = self.signals.first().map(|s| s.fs).ok_or(EdfError::EmptyRecording)?;
        let n = self
            .signals
            .iter()
            .map(|s| s.samples.len())
            .min()
            .unwrap_or(0);
        if n == 0 {
            return Err(EdfError::EmptyRecording);
        }
        let mut data = Array2::<S>::zeros((self.signals.len(), n));
        let mut channels = Vec::with_capacity(self.signals.len());
        for (row, sig) in self.signals.into_iter().enumerate() {
            for (col, v) in sig.samples.into_iter().take(n).enumerate() {
                data[[row, col]] = v;
            }
            let mut info = ChannelInfo::new(sig.header.label.clone(), sig.fs);
            info.had_nonfinite = sig.had_nonfinite;
            channels.push(info);
        }
        Ok(RawRecording {
            data,
            fs,
            channels,
            annotations: self.annotations,
            recording_id: recording_id.to_string(),
        })
    }
}

/// Decodes one block of EDF+ TAL bytes.
///
/// Grammar per TAL: `onset [\x15 duration] \x14 (text \x14)* \x00`.
/// Timekeeping TALs (empty text) are dropped; the result is sorted by onset.
pub fn read_annotations(tal_bytes: &[u8]) -> Result<Vec<Annotation>, EdfError> {
    let mut out = Vec::new();
    for chunk in tal_bytes.split(|&b| b == 0x00) {
        if chunk.is_empty() {
            continue;
        }
        let text = String::from_utf8_lossy(chunk);
        if !text.starts_with('+') && !text.starts_with('-') {
            return Err(EdfError::MalformedTal(format!(
                "TAL must start with a signed onset, got {:?}",
                &text[..text.len().min(12)]
            )));
        }
        let Some(head_end) = text.find('\u{14}') else {
            return Err(EdfError::MalformedTal("missing 0x14 after onset".into()));
        };
        let head = &text[..head_end];
        let (onset_str, duration_str) = match head.find('\u{15}') {
            Some(p) => (&head[..p], Some(&head[p + 1..])),
            None => (head, None),
        };
        let onset: f64 = onset_str
            .parse()
            .map_err(|_| EdfError::MalformedTal(format!("bad onset {onset_str:?}")))?;
        let duration: f64 = match duration_str {
            Some(d) => d
                .parse()
                .map_err(|_| EdfError::MalformedTal(format!("bad duration {d:?}")))?,
            None => 0.0,
        };
        if onset < 0.0 || duration < 0.0 {
            return Err(EdfError::MalformedTal(format!(
                "negative onset/duration: {onset} {duration}"
            )));
        }
        for label in text[head_end + 1..].split('\u{14}') {
            if label.is_empty() {
                continue;
            }
            out.push(Annotation {
                onset,
                duration,
                text: label.to_string(),
            });
        }
    }
    out.sort_by(|a, b| a.onset.partial_cmp(&b.onset).unwrap_or(std::cmp::Ordering::Equal));
    Ok(out)
}

/// Reference to one EDF file discovered by [`scan_corpus`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordingRef {
    pub path: PathBuf,
    /// Path relative to the corpus root, used as the stable recording key.
    pub recording_id: String,
}

#[derive(Debug, Clone, Default)]
pub struct CorpusScan {
    pub recordings: Vec<RecordingRef>,
    /// Non-EDF files that were skipped, for the log.
    pub skipped: Vec<PathBuf>,
}

/// Finds every `.edf` file under `root`, in lexicographic order of the
/// relative path. The relative path becomes the recording id.
pub fn scan_corpus(root: &Path) -> Result<CorpusScan, EdfError> {
    let mut scan = CorpusScan::default();
    for entry in walkdir::WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|e| EdfError::Io(e.into()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path().to_path_buf();
        let is_edf = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("edf"))
            .unwrap_or(false);
        if !is_edf {
            scan.skipped.push(path);
            continue;
        }
        let rel = path
            .strip_prefix(root)
            .unwrap_or(&path)
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        scan.recordings.push(RecordingRef {
            path,
            recording_id: rel,
        });
    }
    scan.recordings.sort_by(|a, b| a.recording_id.cmp(&b.recording_id));
    scan.skipped.sort();
    Ok(scan)
}
