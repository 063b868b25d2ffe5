//! Pipeline orchestration: configuration, the per-window stage chain, and
//! the parallel corpus runner.
//!
//! Work is distributed over windows; every window's randomness derives
//! from a stable hash of `(run seed, recording id, window index)` and the
//! outputs are written in a canonical order, so results are byte-identical
//! for any worker count.

pub mod log;
pub mod output;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::badchan::{detect_bad_channels, BadChanConfig};
use crate::channels::{apply_montage, AliasTable, Montage};
use crate::detrend::robust_detrend;
use crate::edf::{parse_edf, scan_corpus, EdfFile, RawRecording};
use crate::filter::{fir_filter, FilterSpec};
use crate::ica::{
    classify_ic, exclude_and_reconstruct, extended_infomax, ic_features, ica_drop_check, whiten,
    IcClass, IcLabel, InfomaxOptions,
};
use crate::interp::{finalize_channels, SplineParams};
use crate::quality::{
    compute_metrics, gate, min_channel_check, DropReason, GateDecision, QualityThresholds,
};
use crate::reference::average_reference;
use crate::resample::resample;
use crate::segment::{crop_downstream, window_pretrain, Window};
use crate::zapline::{zapline_iterative, ZaplineConfig};
use crate::Scalar;

use self::log::{merge_events, summarize_events, Action, EventSink, LogEvent, Stage};
use self::output::{write_output, ProcessedWindow};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Channel(#[from] crate::channels::ChannelError),
    #[error(transparent)]
    Edf(#[from] crate::edf::EdfError),
    #[error(transparent)]
    Output(#[from] output::OutputError),
    #[error(transparent)]
    Log(#[from] log::LogError),
    #[error("malformed IC label file line {line}: {msg}")]
    MalformedLabels { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    Pretrain,
    Downstream,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub mode: PipelineMode,
    pub line_freq: f64,
    /// Built-in montage name; `montage_file` overrides.
    pub montage: String,
    pub montage_file: Option<PathBuf>,
    pub alias_file: Option<PathBuf>,
    pub window_secs: f64,
    pub with_ica: bool,
    pub with_ransac: bool,
    pub ic_labels_file: Option<PathBuf>,
    pub thresholds: QualityThresholds,
    pub zapline: ZaplineConfig,
    pub badchan: BadChanConfig,
    pub infomax: InfomaxOptions,
    pub spline: SplineParams,
    /// Drop a window when more than this fraction of ICs is excluded.
    pub max_excluded_frac: f64,
    pub target_fs: f64,
    pub seed: u64,
    pub jobs: usize,
    pub input: PathBuf,
    pub output: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: PipelineMode::Pretrain,
            line_freq: 60.0,
            montage: "standard_1020_19".into(),
            montage_file: None,
            alias_file: None,
            window_secs: 60.0,
            with_ica: false,
            with_ransac: false,
            ic_labels_file: None,
            thresholds: QualityThresholds::default(),
            zapline: ZaplineConfig::default(),
            badchan: BadChanConfig::default(),
            infomax: InfomaxOptions::default(),
            spline: SplineParams::default(),
            max_excluded_frac: 0.5,
            target_fs: 256.0,
            seed: 0,
            jobs: 1,
            input: PathBuf::from("."),
            output: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| PipelineError::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.jobs < 1 {
            return Err(PipelineError::InvalidConfig("jobs must be >= 1".into()));
        }
        if self.target_fs <= 0.0 {
            return Err(PipelineError::InvalidConfig("target_fs must be positive".into()));
        }
        if self.mode == PipelineMode::Pretrain && self.window_secs <= 0.0 {
            return Err(PipelineError::InvalidConfig(
                "pretrain mode requires window_secs > 0".into(),
            ));
        }
        if self.line_freq <= 0.0 {
            return Err(PipelineError::InvalidConfig("line_freq must be positive".into()));
        }
        Ok(())
    }

    /// Zapline settings with the run's line frequency applied.
    pub fn effective_zapline(&self) -> ZaplineConfig {
        ZaplineConfig {
            f_line: self.line_freq,
            ..self.zapline
        }
    }

    /// Manifest snapshot: the scientific parameters, without execution
    /// details (worker count, output location) that must not affect
    /// output bytes.
    pub fn snapshot_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("jobs");
            obj.remove("output");
        }
        v
    }

    pub fn load_montage(&self) -> Result<Montage, PipelineError> {
        if let Some(path) = &self.montage_file {
            return Ok(Montage::from_file(path)?);
        }
        match self.montage.as_str() {
            "standard_1020_19" => Ok(Montage::standard_1020_19()),
            other => Err(PipelineError::InvalidConfig(format!(
                "unknown montage {other:?}; supply --montage-file"
            ))),
        }
    }

    pub fn load_aliases(&self) -> Result<AliasTable, PipelineError> {
        match &self.alias_file {
            Some(path) => Ok(AliasTable::from_file(path)?),
            None => Ok(AliasTable::standard()),
        }
    }
}

/// Stable 64-bit FNV-1a over the run seed, recording id, and window index;
/// identical across platforms and worker counts.
pub fn window_seed(run_seed: u64, recording_id: &str, window_index: usize) -> u64 {
    let mut h = 0xcbf29ce484222325_u64;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(&run_seed.to_le_bytes());
    eat(recording_id.as_bytes());
    eat(&[0xff]);
    eat(&(window_index as u64).to_le_bytes());
    h
}

type IcOverrides = BTreeMap<(String, usize), BTreeMap<usize, IcLabel>>;

/// Parses `recording_id window_index component_index class prob` lines.
pub fn load_ic_labels(path: &Path) -> Result<IcOverrides, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    let mut map: IcOverrides = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 5 {
            return Err(PipelineError::MalformedLabels {
                line: i + 1,
                msg: "expected 5 fields".into(),
            });
        }
        let win: usize = parts[1].parse().map_err(|_| PipelineError::MalformedLabels {
            line: i + 1,
            msg: format!("bad window index {:?}", parts[1]),
        })?;
        let comp: usize = parts[2].parse().map_err(|_| PipelineError::MalformedLabels {
            line: i + 1,
            msg: format!("bad component index {:?}", parts[2]),
        })?;
        let class = IcClass::from_str_loose(parts[3]).ok_or(PipelineError::MalformedLabels {
            line: i + 1,
            msg: format!("unknown class {:?}", parts[3]),
        })?;
        let prob: f64 = parts[4].parse().map_err(|_| PipelineError::MalformedLabels {
            line: i + 1,
            msg: format!("bad probability {:?}", parts[4]),
        })?;
        map.entry((parts[0].to_string(), win))
            .or_default()
            .insert(comp, IcLabel::from_class_prob(class, prob));
    }
    Ok(map)
}

/// Run-wide immutable context shared by all workers.
pub struct RunContext {
    pub cfg: PipelineConfig,
    pub montage: Montage,
    pub aliases: AliasTable,
    pub ic_overrides: IcOverrides,
}

impl RunContext {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let montage = cfg.load_montage()?;
        let aliases = cfg.load_aliases()?;
        let ic_overrides = match &cfg.ic_labels_file {
            Some(path) => load_ic_labels(path)?,
            None => BTreeMap::new(),
        };
        Ok(Self {
            cfg,
            montage,
            aliases,
            ic_overrides,
        })
    }
}

/// Result of processing one window (or one downstream recording).
pub enum WindowOutcome<S> {
    Kept(ProcessedWindow<S>),
    Dropped(Vec<DropReason>),
}

struct StageFailure {
    stage: Stage,
    msg: String,
}

fn fail(stage: Stage, err: impl std::fmt::Display) -> StageFailure {
    StageFailure {
        stage,
        msg: err.to_string(),
    }
}

/// The pretraining chain for one window. Gates can drop the window; hard
/// errors drop it with a stage reason. Downstream mode reuses this chain
/// with the gates disabled.
pub fn process_window<S: Scalar>(
    win: &Window<S>,
    ctx: &RunContext,
    sink: &mut EventSink,
) -> WindowOutcome<S> {
    let gated = ctx.cfg.mode == PipelineMode::Pretrain;
    let event_window = if gated { Some(win.window_index) } else { None };
    let rec = win.recording_id.as_str();
    match process_window_inner(win, ctx, sink, gated, event_window) {
        Ok(outcome) => outcome,
        Err(f) => {
            let reason = DropReason::Stage(format!("{:?}:{}", f.stage, f.msg));
            sink.emit(
                rec,
                event_window,
                f.stage,
                Action::Dropped,
                json!({ "reasons": [reason.to_string()], "error": f.msg }),
            );
            WindowOutcome::Dropped(vec![reason])
        }
    }
}

fn process_window_inner<S: Scalar>(
    win: &Window<S>,
    ctx: &RunContext,
    sink: &mut EventSink,
    gated: bool,
    event_window: Option<usize>,
) -> Result<WindowOutcome<S>, StageFailure> {
    let cfg = &ctx.cfg;
    let rec = win.recording_id.as_str();
    let seed = window_seed(cfg.seed, rec, win.window_index);
    let n_target = ctx.montage.target_order.len();
    let fs = win.fs;
    let nyq = fs / 2.0;

    let mut data = win.data.clone();
    let mut channels = win.channels.clone();

    if gated {
        // quick bad-channel pass (no RANSAC) feeds the RBC metric only
        let quick = detect_bad_channels(&data, fs, &channels, false, seed, &cfg.badchan)
            .map_err(|e| fail(Stage::QaBadchan, e))?;
        sink.emit(
            rec,
            event_window,
            Stage::QaBadchan,
            Action::Flagged,
            json!({ "channels": quick.union, "n_bad": quick.count() }),
        );

        // QA filters on a copy
        let mut qa = data.clone();
        if cfg.line_freq < nyq {
            qa = fir_filter(&qa, fs, &FilterSpec::notch(cfg.line_freq))
                .map_err(|e| fail(Stage::QaMetrics, e))?;
        }
        qa = fir_filter(&qa, fs, &FilterSpec::highpass(1.0))
            .map_err(|e| fail(Stage::QaMetrics, e))?;
        if 100.0 < nyq {
            qa = fir_filter(&qa, fs, &FilterSpec::lowpass(100.0))
                .map_err(|e| fail(Stage::QaMetrics, e))?;
        }
        let metrics = compute_metrics(&qa, quick.count(), &cfg.thresholds);
        sink.emit(
            rec,
            event_window,
            Stage::QaMetrics,
            Action::Info,
            json!({ "oha": metrics.oha, "thv": metrics.thv, "chv": metrics.chv, "rbc": metrics.rbc }),
        );
        // the metric cutoffs and the half-channel rule form one exclusion
        // set; a window violating several reports them all
        let mut reasons = match gate(&metrics, &cfg.thresholds) {
            GateDecision::Drop(r) => r,
            GateDecision::Keep => vec![],
        };
        let present = channels.len().saturating_sub(quick.count());
        if let GateDecision::Drop(r) =
            min_channel_check(present, n_target, cfg.thresholds.min_channel_frac)
        {
            reasons.extend(r);
        }
        if !reasons.is_empty() {
            let strs: Vec<String> = reasons.iter().map(|r| r.to_string()).collect();
            sink.emit(
                rec,
                event_window,
                Stage::QaGate,
                Action::Dropped,
                json!({ "reasons": strs, "present": present, "target": n_target }),
            );
            return Ok(WindowOutcome::Dropped(reasons));
        }
        sink.emit(rec, event_window, Stage::QaGate, Action::Kept, json!({}));
    }

    // line noise removal
    if cfg.line_freq < nyq {
        let (cleaned, report) = zapline_iterative(&data, fs, &cfg.effective_zapline())
            .map_err(|e| fail(Stage::Zapline, e))?;
        sink.emit(
            rec,
            event_window,
            Stage::Zapline,
            Action::Info,
            json!({
                "iterations": report.iterations.len(),
                "scores": report.iterations.iter().map(|i| i.top_score).collect::<Vec<_>>(),
                "final_prominence_db": report.final_prominence_db,
            }),
        );
        data = cleaned;
    }

    // bad channel detection on a copy; verdicts remove rows
    let report = detect_bad_channels(&data, fs, &channels, cfg.with_ransac, seed, &cfg.badchan)
        .map_err(|e| fail(Stage::Badchan, e))?;
    sink.emit(
        rec,
        event_window,
        Stage::Badchan,
        Action::Flagged,
        json!({
            "union": report.union,
            "by_criterion": report.by_criterion.iter()
                .map(|(k, v)| (k.as_str().to_string(), v.clone()))
                .collect::<BTreeMap<String, BTreeSet<String>>>(),
        }),
    );
    if !report.union.is_empty() {
        let keep: Vec<usize> = (0..channels.len())
            .filter(|&i| !report.union.contains(channels[i].name()))
            .collect();
        let mut kept_data = Array2::<S>::zeros((keep.len(), data.ncols()));
        for (row, &src) in keep.iter().enumerate() {
            kept_data.row_mut(row).assign(&data.row(src));
        }
        data = kept_data;
        channels = keep.iter().map(|&i| channels[i].clone()).collect();
        sink.emit(
            rec,
            event_window,
            Stage::DropChannels,
            Action::Info,
            json!({ "removed": report.union, "remaining": channels.len() }),
        );
    }
    if gated {
        if let GateDecision::Drop(reasons) =
            min_channel_check(channels.len(), n_target, cfg.thresholds.min_channel_frac)
        {
            let strs: Vec<String> = reasons.iter().map(|r| r.to_string()).collect();
            sink.emit(
                rec,
                event_window,
                Stage::DropChannels,
                Action::Dropped,
                json!({ "reasons": strs, "present": channels.len(), "target": n_target }),
            );
            return Ok(WindowOutcome::Dropped(reasons));
        }
    }

    // robust detrend + band-limiting filters
    for mut row in data.rows_mut() {
        let x = row.to_vec();
        let y = robust_detrend(&x, 1, 3, 3.0).map_err(|e| fail(Stage::Detrend, e))?;
        for (dst, v) in row.iter_mut().zip(y) {
            *dst = v;
        }
    }
    sink.emit(rec, event_window, Stage::Detrend, Action::Info, json!({ "order": 1 }));
    data = fir_filter(&data, fs, &FilterSpec::highpass(0.5)).map_err(|e| fail(Stage::Filter, e))?;
    if 100.0 < nyq {
        data = fir_filter(&data, fs, &FilterSpec::lowpass(100.0))
            .map_err(|e| fail(Stage::Filter, e))?;
    }
    sink.emit(
        rec,
        event_window,
        Stage::Filter,
        Action::Info,
        json!({ "highpass_hz": 0.5, "lowpass_hz": if 100.0 < nyq { Some(100.0) } else { None } }),
    );

    // average reference over the remaining (all good) channels
    let mask = vec![true; channels.len()];
    data = average_reference(&data, &mask).map_err(|e| fail(Stage::Reref, e))?;
    sink.emit(rec, event_window, Stage::Reref, Action::Info, json!({ "n_channels": channels.len() }));

    // optional ICA cleanup
    let mut post_bad: BTreeSet<String> = BTreeSet::new();
    if cfg.with_ica {
        let (z, whitener) = whiten(&data).map_err(|e| fail(Stage::IcaFit, e))?;
        let model = extended_infomax(&z, &whitener, seed, &cfg.infomax)
            .map_err(|e| fail(Stage::IcaFit, e))?;
        sink.emit(
            rec,
            event_window,
            Stage::IcaFit,
            Action::Info,
            json!({
                "n_components": model.n_components,
                "converged": model.converged,
                "n_iters": model.n_iters,
            }),
        );
        let sources = model.sources(&z);
        let names: Vec<String> = channels.iter().map(|c| c.name().to_string()).collect();
        let overrides = ctx.ic_overrides.get(&(rec.to_string(), win.window_index));
        let labels: Vec<IcLabel> = (0..model.n_components)
            .map(|i| {
                if let Some(label) = overrides.and_then(|m| m.get(&i)) {
                    return label.clone();
                }
                let tc = sources.row(i).to_vec();
                let topo = model.mixing.column(i).to_vec();
                classify_ic(&ic_features(&tc, &topo, &names, fs, cfg.line_freq))
            })
            .collect();
        sink.emit(
            rec,
            event_window,
            Stage::IcaClassify,
            Action::Info,
            json!({
                "components": labels.iter().enumerate().map(|(i, l)| json!({
                    "index": i,
                    "class": l.class.as_str(),
                    "prob": l.argmax_prob,
                })).collect::<Vec<_>>(),
            }),
        );
        let (clean, excluded) = exclude_and_reconstruct(&data, &whitener, &model, &labels);
        sink.emit(
            rec,
            event_window,
            Stage::IcaExclude,
            Action::Excluded,
            json!({
                "components": excluded.iter().map(|&i| json!({
                    "index": i,
                    "class": labels[i].class.as_str(),
                    "prob": labels[i].argmax_prob,
                })).collect::<Vec<_>>(),
                "n_excluded": excluded.len(),
                "n_total": model.n_components,
            }),
        );
        if gated && !ica_drop_check(excluded.len(), model.n_components, cfg.max_excluded_frac) {
            let reasons = vec![DropReason::IcaExcess];
            sink.emit(
                rec,
                event_window,
                Stage::IcaCheck,
                Action::Dropped,
                json!({ "reasons": ["ica_excess"], "n_excluded": excluded.len(), "n_total": model.n_components }),
            );
            return Ok(WindowOutcome::Dropped(reasons));
        }
        data = clean;

        // a second bad-channel pass on a copy; verdicts feed interpolation
        let post = detect_bad_channels(&data, fs, &channels, cfg.with_ransac, seed, &cfg.badchan)
            .map_err(|e| fail(Stage::BadchanPost, e))?;
        post_bad = post.union.clone();
        sink.emit(
            rec,
            event_window,
            Stage::BadchanPost,
            Action::Flagged,
            json!({ "union": post.union }),
        );
    }

    // interpolate onto the target montage
    let (finalized, report) =
        finalize_channels(&data, &channels, &post_bad, &ctx.montage, &cfg.spline)
            .map_err(|e| fail(Stage::Interpolate, e))?;
    sink.emit(
        rec,
        event_window,
        Stage::Interpolate,
        Action::Interpolated,
        json!({ "channels": report.interpolated, "dropped_extra": report.dropped_extra }),
    );
    data = finalized;

    // resample to the target rate
    let out = resample(&data, fs, cfg.target_fs);
    sink.emit(
        rec,
        event_window,
        Stage::Resample,
        Action::Info,
        json!({ "fs_in": fs, "fs_out": cfg.target_fs, "n_samples": out.ncols() }),
    );
    if out.iter().any(|v| !v.is_finite()) {
        return Err(fail(Stage::Resample, "non-finite output sample"));
    }
    if gated {
        let want = (cfg.window_secs * cfg.target_fs).round() as usize;
        if out.nrows() != n_target || out.ncols() != want {
            return Err(fail(
                Stage::Resample,
                format!(
                    "output shape ({}, {}) does not match ({n_target}, {want})",
                    out.nrows(),
                    out.ncols()
                ),
            ));
        }
    }
    sink.emit(
        rec,
        event_window,
        Stage::Output,
        Action::Kept,
        json!({ "shape": [out.nrows(), out.ncols()] }),
    );
    Ok(WindowOutcome::Kept(ProcessedWindow {
        recording_id: rec.to_string(),
        window_index: event_window,
        data: out,
    }))
}

/// Per-recording ingest: parse, harmonize rates, standardize channels.
fn ingest<S: Scalar>(
    path: &Path,
    recording_id: &str,
    ctx: &RunContext,
    sink: &mut EventSink,
) -> Result<RawRecording<S>, String> {
    let file = std::fs::File::open(path).map_err(|e| e.to_string())?;
    let mut edf: EdfFile<S> =
        parse_edf(std::io::BufReader::new(file)).map_err(|e| e.to_string())?;
    if !edf.uniform_rate() {
        let modal = edf.modal_fs();
        let mut harmonized = Vec::new();
        for sig in &mut edf.signals {
            if (sig.fs - modal).abs() > 1e-9 {
                sig.samples = crate::resample::resample_channel(&sig.samples, sig.fs, modal);
                harmonized.push(sig.header.label.clone());
                sig.fs = modal;
            }
        }
        sink.emit(
            recording_id,
            None,
            Stage::Parse,
            Action::Info,
            json!({ "harmonized_to_hz": modal, "channels": harmonized }),
        );
    }
    let rec = edf.into_recording(recording_id).map_err(|e| e.to_string())?;
    sink.emit(
        recording_id,
        None,
        Stage::Parse,
        Action::Info,
        json!({
            "n_channels": rec.n_channels(),
            "fs": rec.fs,
            "duration_secs": rec.duration_secs(),
            "n_annotations": rec.annotations.len(),
        }),
    );
    let (rec, report) = apply_montage(&rec, &ctx.montage, &ctx.aliases).map_err(|e| e.to_string())?;
    sink.emit(
        recording_id,
        None,
        Stage::Standardize,
        Action::Info,
        json!({
            "kept": rec.channel_names(),
            "dropped": report.dropped.iter().map(|(l, c)| json!({ "label": l, "cause": c })).collect::<Vec<_>>(),
            "aliased": report.aliased,
        }),
    );
    Ok(rec)
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct RunSummary {
    pub recordings_scanned: usize,
    pub recordings_failed: usize,
    /// Segmented windows in pretrain mode; processed recordings downstream.
    pub items_total: usize,
    pub items_kept: usize,
    pub items_dropped: usize,
    pub drop_reasons: BTreeMap<String, usize>,
    pub interpolated_channels: BTreeMap<String, usize>,
    pub ic_classes: BTreeMap<String, usize>,
    pub output_dir: PathBuf,
}

/// Runs the full corpus: scan, parse, process in parallel, write windows,
/// manifest, and the merged log. Per-item failures are logged and skipped;
/// only I/O on the output side is fatal.
pub fn run_pipeline<S: Scalar>(ctx: &RunContext) -> Result<RunSummary, PipelineError> {
    let cfg = &ctx.cfg;
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output)?;
    let scan = scan_corpus(&cfg.input)?;

    let mut events: Vec<LogEvent> = Vec::new();
    let mut scan_sink = EventSink::new();
    scan_sink.emit(
        "",
        None,
        Stage::Scan,
        Action::Info,
        json!({
            "n_recordings": scan.recordings.len(),
            "skipped": scan.skipped.iter().map(|p| p.to_string_lossy()).collect::<Vec<_>>(),
        }),
    );
    events.extend(scan_sink.into_events());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;

    // phase A: ingest and segment each recording
    struct Ingested<S> {
        windows: Vec<Window<S>>,
        events: Vec<LogEvent>,
        failed: bool,
    }
    let ingested: Vec<Ingested<S>> = pool.install(|| {
        scan.recordings
            .par_iter()
            .map(|r| {
                let mut sink = EventSink::new();
                match ingest::<S>(&r.path, &r.recording_id, ctx, &mut sink) {
                    Err(msg) => {
                        sink.emit(
                            &r.recording_id,
                            None,
                            Stage::Parse,
                            Action::Info,
                            json!({ "error": msg }),
                        );
                        Ingested { windows: vec![], events: sink.into_events(), failed: true }
                    }
                    Ok(rec) => {
                        let windows = match cfg.mode {
                            PipelineMode::Pretrain => {
                                let ws = window_pretrain(&rec, cfg.window_secs);
                                if ws.is_empty() {
                                    sink.emit(
                                        &r.recording_id,
                                        None,
                                        Stage::Segment,
                                        Action::Info,
                                        json!({
                                            "reason": DropReason::RecordingTooShort.to_string(),
                                            "duration_secs": rec.duration_secs(),
                                        }),
                                    );
                                } else {
                                    let remainder = rec.duration_secs()
                                        - ws.len() as f64 * cfg.window_secs;
                                    sink.emit(
                                        &r.recording_id,
                                        None,
                                        Stage::Segment,
                                        Action::Info,
                                        json!({
                                            "n_windows": ws.len(),
                                            "remainder_secs_discarded": remainder,
                                        }),
                                    );
                                }
                                ws
                            }
                            PipelineMode::Downstream => match crop_downstream(&rec) {
                                Ok(cropped) => {
                                    sink.emit(
                                        &r.recording_id,
                                        None,
                                        Stage::Segment,
                                        Action::Info,
                                        json!({ "cropped_secs": cropped.duration_secs() }),
                                    );
                                    vec![Window {
                                        data: cropped.data,
                                        fs: cropped.fs,
                                        recording_id: cropped.recording_id,
                                        window_index: 0,
                                        t_start: 0.0,
                                        channels: cropped.channels,
                                    }]
                                }
                                Err(e) => {
                                    sink.emit(
                                        &r.recording_id,
                                        None,
                                        Stage::Segment,
                                        Action::Info,
                                        json!({ "error": e.to_string() }),
                                    );
                                    vec![]
                                }
                            },
                        };
                        Ingested { windows, events: sink.into_events(), failed: false }
                    }
                }
            })
            .collect()
    });

    let mut recordings_failed = 0usize;
    let mut items: Vec<Window<S>> = Vec::new();
    for rec in ingested {
        if rec.failed {
            recordings_failed += 1;
        }
        events.extend(rec.events);
        items.extend(rec.windows);
    }
    let items_total = items.len();

    // phase B: process every window in parallel
    let results: Vec<(Option<ProcessedWindow<S>>, Vec<LogEvent>)> = pool.install(|| {
        items
            .par_iter()
            .map(|win| {
                let mut sink = EventSink::new();
                let outcome = process_window(win, ctx, &mut sink);
                let kept = match outcome {
                    WindowOutcome::Kept(w) => Some(w),
                    WindowOutcome::Dropped(_) => None,
                };
                (kept, sink.into_events())
            })
            .collect()
    });

    let mut kept: Vec<ProcessedWindow<S>> = Vec::new();
    for (win, evs) in results {
        events.extend(evs);
        if let Some(w) = win {
            kept.push(w);
        }
    }

    // phase C: canonical outputs
    let manifest = write_output(
        &kept,
        &cfg.output,
        &ctx.montage.target_order,
        cfg.target_fs,
        cfg.snapshot_json(),
    )?;
    let events = merge_events(events);
    log::write_log(&cfg.output.join("log.jsonl"), &events)?;

    let report = summarize_events(&events);
    Ok(RunSummary {
        recordings_scanned: scan.recordings.len(),
        recordings_failed,
        items_total,
        items_kept: manifest.windows.len(),
        items_dropped: report.windows_dropped,
        drop_reasons: report.drop_reasons,
        interpolated_channels: report.interpolated_channels,
        ic_classes: report
            .ic_classes
            .iter()
            .map(|(k, v)| (k.clone(), v.values().sum()))
            .collect(),
        output_dir: cfg.output.clone(),
    })
}

pub use self::log::{summarize_log, write_plots, SummaryReport};
pub use self::output::{read_manifest, read_window, verify_checksum};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_seed_is_stable_and_distinct() {
        let a = window_seed(42, "rec/a.edf", 0);
        let b = window_seed(42, "rec/a.edf", 1);
        let c = window_seed(42, "rec/b.edf", 0);
        let d = window_seed(43, "rec/a.edf", 0);
        assert_eq!(a, window_seed(42, "rec/a.edf", 0));
        assert!(a != b && a != c && a != d);
    }

    #[test]
    fn config_snapshot_drops_jobs() {
        let cfg = PipelineConfig {
            jobs: 8,
            ..PipelineConfig::default()
        };
        let snap = cfg.snapshot_json();
        assert!(snap.get("jobs").is_none());
        assert!(snap.get("seed").is_some());
        let other = PipelineConfig {
            jobs: 1,
            ..PipelineConfig::default()
        };
        assert_eq!(snap, other.snapshot_json());
    }

    #[test]
    fn config_validation() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.jobs = 0;
        assert!(cfg.validate().is_err());
        cfg.jobs = 1;
        cfg.window_secs = 0.0;
        assert!(cfg.validate().is_err());
        cfg.mode = PipelineMode::Downstream;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn ic_label_file_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        std::fs::write(&path, "# comment\nrec.edf 0 2 muscle_artifact 0.9\nrec.edf 0 3 brain 0.99\n")
            .unwrap();
        let map = load_ic_labels(&path).unwrap();
        let labels = &map[&("rec.edf".to_string(), 0)];
        assert_eq!(labels[&2].class, IcClass::MuscleArtifact);
        assert!(labels[&2].is_excluded(0.8));
        assert!(!labels[&3].is_excluded(0.8));
        std::fs::write(&path, "only three fields\n").unwrap();
        assert!(load_ic_labels(&path).is_err());
    }
}
