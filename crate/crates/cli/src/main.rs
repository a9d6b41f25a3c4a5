use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tempomatch::alignment::{trim_silence, DurationMode, DEFAULT_SILENCE_LABELS};
use tempomatch::audio::write_wav;
use tempomatch::ratemath::{instantaneous_rate, local_rate, DEFAULT_GRID_STEP_S, DEFAULT_WINDOW_S};
use tempomatch::segmentation::{
    boundary_metrics, detect_boundaries, dissimilarity_curve, read_features, segment_unsupervised,
    BoundaryList,
};
use tempomatch::wsola::{time_stretch, StretchParams, DEFAULT_FRAME_MS, DEFAULT_TOLERANCE_MS};
use tempomatch::{UnsupervisedParams, VadParams};
use tempomatch_cli::batch::{read_manifest, run_batch, write_report};
use tempomatch_cli::pipeline::{
    convert, estimate_rate, load_alignment, load_wav, ConversionJob, ConvertConfig, Mode,
    RateOptions, BOUNDARY_TOLERANCE_S,
};
use tempomatch_cli::report::{Versioned, DEFAULT_JND};

#[derive(Parser)]
#[command(
    name = "tempomatch",
    version,
    about = "Speaking-rate estimation and conversion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// How phoneme counts are obtained.
    #[arg(long, value_enum, default_value = "aligned")]
    mode: ModeArg,
    /// Comma-separated labels treated as silence.
    #[arg(long, value_delimiter = ',')]
    silence_labels: Option<Vec<String>>,
    /// Aligned mode: measure speech duration with the VAD.
    #[arg(long)]
    vad_duration: bool,
    /// Aligned mode: keep interior pauses in the speech duration.
    #[arg(long)]
    edges_only: bool,
    /// VAD threshold relative to the loudest frame.
    #[arg(long, default_value_t = -40.0, allow_negative_numbers = true)]
    vad_threshold_db: f64,
}

#[derive(Args, Clone)]
struct Wsola {
    #[arg(long, default_value_t = DEFAULT_FRAME_MS)]
    wsola_frame_ms: f64,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE_MS)]
    wsola_tolerance_ms: f64,
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum ModeArg {
    Aligned,
    Unsupervised,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Aligned => Mode::Aligned,
            ModeArg::Unsupervised => Mode::Unsupervised,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the phoneme rate of an utterance.
    Rate {
        wav: PathBuf,
        #[arg(long)]
        alignment: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Time-stretch a WAV file by a fixed tempo factor.
    Stretch {
        input: PathBuf,
        output: PathBuf,
        /// Output is `alpha` times faster than the input.
        #[arg(long)]
        alpha: f64,
        #[command(flatten)]
        wsola: Wsola,
    },
    /// Convert a source utterance to a target speaker's rate.
    Convert {
        source: PathBuf,
        output: PathBuf,
        #[arg(long)]
        source_alignment: Option<PathBuf>,
        /// Rate reference utterance of the target speaker.
        #[arg(long, conflicts_with = "target_rate")]
        target: Option<PathBuf>,
        #[arg(long)]
        target_alignment: Option<PathBuf>,
        #[arg(long)]
        target_rate: Option<f64>,
        /// Same sentence by the target speaker, for duration scoring.
        #[arg(long)]
        parallel_target: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_JND)]
        jnd: f64,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        wsola: Wsola,
    },
    /// Print unsupervised phoneme boundaries, one time per line.
    Segment {
        /// WAV file to segment.
        #[arg(required_unless_present = "features")]
        wav: Option<PathBuf>,
        /// Precomputed feature file instead of audio.
        #[arg(long, conflicts_with = "wav")]
        features: Option<PathBuf>,
        /// Reference alignment; precision/recall/F1/R-value go to stderr.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = BOUNDARY_TOLERANCE_S * 1000.0)]
        tolerance_ms: f64,
        #[arg(long, default_value_t = -40.0, allow_negative_numbers = true)]
        vad_threshold_db: f64,
    },
    /// Run every job of a JSON-lines manifest and write a JSON report.
    Eval {
        manifest: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_JND)]
        jnd: f64,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        wsola: Wsola,
    },
    /// Print instantaneous and smoothed local rate curves as TSV.
    LocalRate {
        alignment: PathBuf,
        #[arg(long, default_value_t = DEFAULT_GRID_STEP_S * 1000.0)]
        grid_ms: f64,
        #[arg(long, default_value_t = DEFAULT_WINDOW_S * 1000.0)]
        window_ms: f64,
        #[arg(long, value_delimiter = ',')]
        silence_labels: Option<Vec<String>>,
    },
}

fn label_set(labels: &Option<Vec<String>>) -> Option<BTreeSet<String>> {
    labels
        .as_ref()
        .map(|l| l.iter().map(|s| s.trim().to_string()).collect())
}

fn vad_params(threshold_db: f64) -> VadParams {
    VadParams {
        threshold_db,
        ..VadParams::default()
    }
}

fn rate_options(c: &Common) -> RateOptions {
    RateOptions {
        mode: c.mode.into(),
        vad: vad_params(c.vad_threshold_db),
        vad_duration: c.vad_duration,
        duration_mode: if c.edges_only {
            DurationMode::EdgesOnly
        } else {
            DurationMode::ExcludeAllSilence
        },
        silence_labels: label_set(&c.silence_labels),
        unsupervised: UnsupervisedParams::default(),
    }
}

fn convert_config(c: &Common, w: &Wsola, jnd: f64) -> ConvertConfig {
    ConvertConfig {
        rate: rate_options(c),
        wsola_frame_ms: w.wsola_frame_ms,
        wsola_tolerance_ms: w.wsola_tolerance_ms,
        jnd,
    }
}

/// Error with its process exit code: 1 usage, 2 data, 3 internal.
struct Failure(u8, String);

impl Failure {
    fn data(e: impl std::fmt::Display) -> Self {
        Failure(2, e.to_string())
    }
}

impl From<tempomatch_cli::pipeline::PipelineError> for Failure {
    fn from(e: tempomatch_cli::pipeline::PipelineError) -> Self {
        Failure(e.exit_code(), e.to_string())
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(&Versioned::new(value)).map_err(|e| Failure(3, e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Rate {
            wav,
            alignment,
            common,
        } => {
            let est = estimate_rate(&wav, alignment.as_deref(), &rate_options(&common))?;
            println!("{}", est.rate);
        }
        Command::Stretch {
            input,
            output,
            alpha,
            wsola,
        } => {
            let audio = load_wav(&input)?;
            let params = StretchParams::from_ms(
                audio.sample_rate(),
                wsola.wsola_frame_ms,
                wsola.wsola_tolerance_ms,
            )
            .map_err(|e| Failure(1, e.to_string()))?;
            let result = time_stretch(&audio, alpha, &params).map_err(Failure::data)?;
            write_wav(&result.audio, &output).map_err(Failure::data)?;
        }
        Command::Convert {
            source,
            output,
            source_alignment,
            target,
            target_alignment,
            target_rate,
            parallel_target,
            jnd,
            common,
            wsola,
        } => {
            let cfg = convert_config(&common, &wsola, jnd);
            let job = ConversionJob {
                source_wav: source,
                source_alignment,
                target_wav: target,
                target_alignment,
                target_rate,
                mode: common.mode.into(),
                output_wav: output,
                parallel_target_wav: parallel_target,
                ..ConversionJob::default()
            };
            let report = convert(&job, &cfg)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", to_json(&report)?);
        }
        Command::Segment {
            wav,
            features,
            reference,
            tolerance_ms,
            vad_threshold_db,
        } => {
            let params = UnsupervisedParams {
                vad: Some(vad_params(vad_threshold_db)),
                ..UnsupervisedParams::default()
            };
            let boundaries = match (wav, features) {
                (_, Some(path)) => {
                    let feats = read_features(&path).map_err(Failure::data)?;
                    let curve = dissimilarity_curve(&feats).map_err(Failure::data)?;
                    detect_boundaries(
                        &curve,
                        params.prominence.threshold(&curve),
                        params.min_separation_s,
                    )
                }
                (Some(path), None) => {
                    let audio = load_wav(&path)?;
                    segment_unsupervised(&audio, &params).map_err(Failure::data)?
                }
                (None, None) => unreachable!("clap requires one input"),
            };
            for t in boundaries.times() {
                println!("{t:.4}");
            }
            if let Some(path) = reference {
                let alignment = load_alignment(&path, None)?;
                let trimmed = trim_silence(&alignment).map_err(Failure::data)?;
                let truth =
                    BoundaryList::from_unsorted(trimmed.interior_boundaries()).unwrap_or_default();
                let m = boundary_metrics(&boundaries, &truth, tolerance_ms / 1000.0);
                eprintln!(
                    "precision {:.4} recall {:.4} f1 {:.4} r_value {:.4}",
                    m.precision, m.recall, m.f1, m.r_value
                );
            }
        }
        Command::Eval {
            manifest,
            output,
            jnd,
            common,
            wsola,
        } => {
            let jobs = read_manifest(&manifest).map_err(|e| Failure(1, e.to_string()))?;
            let report = run_batch(&jobs, &convert_config(&common, &wsola, jnd));
            write_report(&report, &output).map_err(|e| Failure(3, e.to_string()))?;
            let a = &report.aggregate;
            eprintln!(
                "{} jobs, {} succeeded, {} failed",
                a.jobs, a.succeeded, a.failed
            );
        }
        Command::LocalRate {
            alignment,
            grid_ms,
            window_ms,
            silence_labels,
        } => {
            let labels = label_set(&silence_labels).unwrap_or_else(|| {
                DEFAULT_SILENCE_LABELS
                    .iter()
                    .map(|s| s.to_string())
                    .collect()
            });
            let alignment = load_alignment(&alignment, Some(&labels))?;
            let inst = instantaneous_rate(&alignment, grid_ms / 1000.0)
                .map_err(|e| Failure(1, e.to_string()))?;
            let local =
                local_rate(&inst, window_ms / 1000.0).map_err(|e| Failure(1, e.to_string()))?;
            println!("time_s\tinstantaneous\tlocal");
            for (n, (i, r)) in inst.values().iter().zip(local.values()).enumerate() {
                println!("{:.4}\t{i}\t{r}", inst.time_at(n));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
