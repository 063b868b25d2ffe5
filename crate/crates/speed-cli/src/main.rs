//! `speed` — EEG preprocessing for machine-learning corpora.
//!
//! Subcommands: `preprocess` (run the pipeline over a corpus of EDF
//! files), `summarize` (histograms from a run log), `synth` (generate
//! synthetic benchmark corpora with ground truth).

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use speed_core::pipeline::{
    self, PipelineConfig, PipelineMode, RunContext,
};
use speed_core::synth;

#[derive(Parser)]
#[command(name = "speed", version, about = "Scalable EEG preprocessing pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Preprocess a corpus of EDF recordings into uniform windows.
    Preprocess(PreprocessArgs),
    /// Aggregate a run log into histograms (and optional SVG plots).
    Summarize(SummarizeArgs),
    /// Generate a synthetic scenario or corpus as EDF plus ground truth.
    Synth(SynthArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Corpus root directory (searched recursively for .edf).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory for windows.bin, index.json, log.jsonl.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<PipelineMode>,
    /// Power line frequency in Hz (usually 50 or 60).
    #[arg(long)]
    line_freq: Option<f64>,
    /// Built-in montage name.
    #[arg(long)]
    montage: Option<String>,
    /// Montage definition file (`name x y z [extra]` lines).
    #[arg(long)]
    montage_file: Option<PathBuf>,
    /// Channel alias file (`from to` lines).
    #[arg(long)]
    alias_file: Option<PathBuf>,
    #[arg(long)]
    window_secs: Option<f64>,
    /// Enable the ICA cleanup stage.
    #[arg(long)]
    with_ica: bool,
    /// Enable the RANSAC predictability criterion.
    #[arg(long)]
    with_ransac: bool,
    /// Per-component label overrides:
    /// `recording_id window_index component class prob` lines.
    #[arg(long)]
    ic_labels: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output sampling rate in Hz.
    #[arg(long)]
    target_fs: Option<f64>,
    /// TOML config file mirroring these flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<PipelineMode, String> {
    match s {
        "pretrain" => Ok(PipelineMode::Pretrain),
        "downstream" => Ok(PipelineMode::Downstream),
        other => Err(format!("unknown mode {other:?}; use pretrain or downstream")),
    }
}

#[derive(Args)]
struct SummarizeArgs {
    /// Path to a log.jsonl produced by `speed preprocess`.
    #[arg(long)]
    log: PathBuf,
    /// Directory for SVG histograms.
    #[arg(long)]
    plots: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Built-in scenario (clean19, line60, badmix, artifacts) or corpus
    /// (corpus10, figmix).
    #[arg(long)]
    scenario: String,
    /// TOML file defining a custom scenario; overrides --scenario.
    #[arg(long)]
    scenario_file: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through the error path too
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Preprocess(args) => preprocess(args),
        Command::Summarize(args) => summarize(args),
        Command::Synth(args) => synth_cmd(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            // distinguish I/O failures per the documented exit codes
            let io = e.root_cause().downcast_ref::<std::io::Error>().is_some();
            ExitCode::from(if io { 3 } else { 1 })
        }
    }
}

fn preprocess(args: PreprocessArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::from_toml_file(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = args.input {
        cfg.input = v;
    }
    if let Some(v) = args.output {
        cfg.output = v;
    }
    if let Some(v) = args.mode {
        cfg.mode = v;
    }
    if let Some(v) = args.line_freq {
        cfg.line_freq = v;
    }
    if let Some(v) = args.montage {
        cfg.montage = v;
    }
    if let Some(v) = args.montage_file {
        cfg.montage_file = Some(v);
    }
    if let Some(v) = args.alias_file {
        cfg.alias_file = Some(v);
    }
    if let Some(v) = args.window_secs {
        cfg.window_secs = v;
    }
    if args.with_ica {
        cfg.with_ica = true;
    }
    if args.with_ransac {
        cfg.with_ransac = true;
    }
    if let Some(v) = args.ic_labels {
        cfg.ic_labels_file = Some(v);
    }
    if let Some(v) = args.jobs {
        cfg.jobs = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.target_fs {
        cfg.target_fs = v;
    }

    let ctx = RunContext::new(cfg)?;
    let summary = pipeline::run_pipeline::<f64>(&ctx)?;
    println!(
        "recordings: {} scanned, {} failed",
        summary.recordings_scanned, summary.recordings_failed
    );
    println!(
        "windows: {} total, {} kept, {} dropped",
        summary.items_total, summary.items_kept, summary.items_dropped
    );
    for (reason, count) in &summary.drop_reasons {
        println!("  dropped[{reason}] = {count}");
    }
    for (ch, count) in &summary.interpolated_channels {
        println!("  interpolated[{ch}] = {count}");
    }
    for (class, count) in &summary.ic_classes {
        println!("  ic[{class}] = {count}");
    }
    println!("output: {}", summary.output_dir.display());
    if summary.items_kept == 0 {
        eprintln!("no window survived preprocessing");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn summarize(args: SummarizeArgs) -> anyhow::Result<ExitCode> {
    let report = pipeline::summarize_log(&args.log)
        .with_context(|| format!("reading {}", args.log.display()))?;
    print!("{report}");
    if let Some(dir) = args.plots {
        pipeline::write_plots(&report, &dir)?;
        println!("plots: {}", dir.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn synth_cmd(args: SynthArgs) -> anyhow::Result<ExitCode> {
    std::fs::create_dir_all(&args.out)?;
    let scenarios: Vec<(String, synth::Scenario)> = if let Some(path) = &args.scenario_file {
        let text = std::fs::read_to_string(path)?;
        let mut sc: synth::Scenario = toml::from_str(&text)
            .map_err(|e| anyhow::anyhow!("bad scenario file: {e}"))?;
        sc.seed = args.seed;
        vec![(format!("{}.edf", sc.name), sc)]
    } else if let Some(corpus) = synth::builtin_corpus(&args.scenario, args.seed) {
        corpus
    } else if let Some(sc) = synth::builtin_scenario(&args.scenario, args.seed) {
        vec![(format!("{}.edf", sc.name), sc)]
    } else {
        anyhow::bail!(
            "unknown scenario {:?}; built-ins: clean19, line60, badmix, artifacts, corpus10, figmix",
            args.scenario
        );
    };

    let mut truths = Vec::new();
    for (filename, sc) in &scenarios {
        let (rec, truth) = synth::gen_scenario::<f64>(sc);
        let path = args.out.join(filename);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        synth::write_edf(&rec, &path)?;
        println!("wrote {}", path.display());
        truths.push(serde_json_value(filename, &truth)?);
    }
    let gt_path = args.out.join("groundtruth.json");
    std::fs::write(&gt_path, serde_json::to_string_pretty(&truths)?)?;
    println!("wrote {}", gt_path.display());
    Ok(ExitCode::SUCCESS)
}

fn serde_json_value(
    filename: &str,
    truth: &synth::GroundTruth,
) -> anyhow::Result<serde_json::Value> {
    let mut v = serde_json::to_value(truth)?;
    if let Some(obj) = v.as_object_mut() {
        obj.insert("file".into(), serde_json::Value::String(filename.to_string()));
    }
    Ok(v)
}
