//! Rate estimation and speaking-rate conversion on files.
//!
//! Both utterances are rate-estimated, the tempo factor is the target rate
//! over the source rate, and the source is time-stretched by WSOLA.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tempomatch::alignment::{
    parse_alignment, phoneme_count, trim_silence, utterance_phoneme_rate, DurationMode,
    PhonemeAlignment,
};
use tempomatch::audio::{detect_speech, read_wav, speech_duration, write_wav};
use tempomatch::ratemath::{interpolation_factor, rate_errors};
use tempomatch::segmentation::{boundary_metrics, segment_unsupervised, BoundaryList};
use tempomatch::wsola::{time_stretch, StretchParams, DEFAULT_FRAME_MS, DEFAULT_TOLERANCE_MS};
use tempomatch::{
    AlignmentError, AudioBuffer, AudioError, RateError, SegmentationError, StretchError,
    UnsupervisedParams, VadParams,
};
use thiserror::Error;

use crate::report::{EvalReport, ZeroTargetDuration, DEFAULT_JND};

/// Utterances shorter than this after trimming get a warning.
pub const SHORT_UTTERANCE_S: f64 = 2.0;
/// Tolerance for boundary precision/recall.
pub const BOUNDARY_TOLERANCE_S: f64 = 0.020;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}: {1}")]
    Audio(PathBuf, #[source] AudioError),
    #[error("{0}: {1}")]
    Alignment(PathBuf, #[source] AlignmentError),
    #[error("reading {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Stretch(#[from] StretchError),
    #[error(transparent)]
    TargetDuration(#[from] ZeroTargetDuration),
    #[error(
        "sample rates differ: {source_path} is {source_rate} Hz, {other_path} is {other_rate} Hz"
    )]
    SampleRateMismatch {
        source_path: PathBuf,
        source_rate: u32,
        other_path: PathBuf,
        other_rate: u32,
    },
    #[error("missing input: {0}")]
    ModeInputMissing(String),
    #[error("no speech found in {0}")]
    ZeroDuration(PathBuf),
}

impl PipelineError {
    /// Process exit code: 1 usage error, 2 data error.
    pub fn exit_code(&self) -> u8 {
        match self {
            PipelineError::ModeInputMissing(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Phoneme counts from forced alignments.
    #[default]
    Aligned,
    /// Phoneme counts from unsupervised boundary detection.
    Unsupervised,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateOptions {
    pub mode: Mode,
    pub vad: VadParams,
    /// Aligned mode: take the speech duration from the VAD instead of the
    /// alignment.
    pub vad_duration: bool,
    pub duration_mode: DurationMode,
    pub silence_labels: Option<BTreeSet<String>>,
    pub unsupervised: UnsupervisedParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub rate: f64,
    /// Phonemes (aligned) or detected boundaries (unsupervised).
    pub count: usize,
    pub speech_duration_s: f64,
    /// First speech onset to last offset.
    pub trimmed_duration_s: f64,
    pub boundaries: Option<BoundaryList>,
}

pub fn load_alignment(
    path: &Path,
    silence_labels: Option<&BTreeSet<String>>,
) -> Result<PhonemeAlignment, PipelineError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| PipelineError::Io(path.to_path_buf(), e))?;
    let alignment =
        parse_alignment(&text).map_err(|e| PipelineError::Alignment(path.to_path_buf(), e))?;
    Ok(match silence_labels {
        Some(labels) => alignment.with_silence_labels(labels.clone()),
        None => alignment,
    })
}

pub fn load_wav(path: &Path) -> Result<AudioBuffer, PipelineError> {
    read_wav(path).map_err(|e| PipelineError::Audio(path.to_path_buf(), e))
}

/// Rate of an utterance already in memory. `name` labels errors.
pub fn estimate_rate_from(
    name: &Path,
    audio: Option<&AudioBuffer>,
    alignment: Option<&PhonemeAlignment>,
    opts: &RateOptions,
) -> Result<RateEstimate, PipelineError> {
    let alignment_err = |e| PipelineError::Alignment(name.to_path_buf(), e);
    match opts.mode {
        Mode::Aligned => {
            let alignment = alignment.ok_or_else(|| {
                PipelineError::ModeInputMissing(format!(
                    "aligned mode needs an alignment for {}",
                    name.display()
                ))
            })?;
            let trimmed = trim_silence(alignment).map_err(alignment_err)?;
            let regions = if opts.vad_duration {
                let audio = audio.ok_or_else(|| {
                    PipelineError::ModeInputMissing(format!(
                        "VAD duration needs audio for {}",
                        name.display()
                    ))
                })?;
                Some(
                    detect_speech(audio, &opts.vad)
                        .map_err(|e| PipelineError::Audio(name.to_path_buf(), e))?,
                )
            } else {
                None
            };
            let rate = utterance_phoneme_rate(&trimmed, regions.as_deref(), opts.duration_mode)
                .map_err(alignment_err)?;
            let speech_duration_s = match &regions {
                Some(r) => speech_duration(r),
                None => trimmed.speech_duration_s(opts.duration_mode),
            };
            Ok(RateEstimate {
                rate,
                count: phoneme_count(&trimmed),
                speech_duration_s,
                trimmed_duration_s: trimmed.speech_duration_s(DurationMode::EdgesOnly),
                boundaries: None,
            })
        }
        Mode::Unsupervised => {
            let audio = audio.ok_or_else(|| {
                PipelineError::ModeInputMissing(format!(
                    "unsupervised mode needs audio for {}",
                    name.display()
                ))
            })?;
            let regions = detect_speech(audio, &opts.vad)
                .map_err(|e| PipelineError::Audio(name.to_path_buf(), e))?;
            let duration = speech_duration(&regions);
            if !(duration > 0.0) {
                return Err(PipelineError::ZeroDuration(name.to_path_buf()));
            }
            let params = UnsupervisedParams {
                vad: Some(opts.vad),
                ..opts.unsupervised
            };
            let boundaries = segment_unsupervised(audio, &params)?;
            let trimmed = regions.last().unwrap().end_s - regions[0].start_s;
            Ok(RateEstimate {
                rate: boundaries.len() as f64 / duration,
                count: boundaries.len(),
                speech_duration_s: duration,
                trimmed_duration_s: trimmed,
                boundaries: Some(boundaries),
            })
        }
    }
}

/// Phonemes per second of a WAV file, from its alignment or unsupervised.
pub fn estimate_rate(
    wav: &Path,
    alignment: Option<&Path>,
    opts: &RateOptions,
) -> Result<RateEstimate, PipelineError> {
    let alignment = alignment
        .map(|p| load_alignment(p, opts.silence_labels.as_ref()))
        .transpose()?;
    let needs_audio = opts.mode == Mode::Unsupervised || opts.vad_duration;
    let audio = if needs_audio {
        Some(load_wav(wav)?)
    } else {
        None
    };
    estimate_rate_from(wav, audio.as_ref(), alignment.as_ref(), opts)
}

/// One source utterance to convert toward a target speaking rate.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConversionJob {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub speaker: Option<String>,
    pub source_wav: PathBuf,
    #[serde(default)]
    pub source_alignment: Option<PathBuf>,
    /// Rate reference utterance of the target speaker.
    #[serde(default)]
    pub target_wav: Option<PathBuf>,
    #[serde(default)]
    pub target_alignment: Option<PathBuf>,
    /// Explicit target rate, instead of `target_wav`.
    #[serde(default)]
    pub target_rate: Option<f64>,
    #[serde(default)]
    pub mode: Mode,
    pub output_wav: PathBuf,
    /// Same sentence spoken by the target speaker, for duration scoring.
    #[serde(default)]
    pub parallel_target_wav: Option<PathBuf>,
    #[serde(default)]
    pub parallel_target_duration_s: Option<f64>,
}

impl ConversionJob {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let missing = |msg: &str| Err(PipelineError::ModeInputMissing(msg.to_string()));
        match (&self.target_wav, self.target_rate) {
            (Some(_), Some(_)) => {
                return missing("give either target_wav or target_rate, not both")
            }
            (None, None) => return missing("need target_wav or target_rate"),
            _ => {}
        }
        if self.mode == Mode::Aligned {
            if self.source_alignment.is_none() {
                return missing("aligned mode needs source_alignment");
            }
            if self.target_wav.is_some() && self.target_alignment.is_none() {
                return missing("aligned mode needs target_alignment for target_wav");
            }
        }
        Ok(())
    }

    /// Resolves relative paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.source_wav);
        fix(&mut self.output_wav);
        for p in [
            &mut self.source_alignment,
            &mut self.target_wav,
            &mut self.target_alignment,
            &mut self.parallel_target_wav,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvertConfig {
    pub rate: RateOptions,
    pub wsola_frame_ms: f64,
    pub wsola_tolerance_ms: f64,
    pub jnd: f64,
}

impl Default for ConvertConfig {
    fn default() -> Self {
        Self {
            rate: RateOptions::default(),
            wsola_frame_ms: DEFAULT_FRAME_MS,
            wsola_tolerance_ms: DEFAULT_TOLERANCE_MS,
            jnd: DEFAULT_JND,
        }
    }
}

fn check_rate(
    source: &Path,
    source_audio: &AudioBuffer,
    other: &Path,
    other_audio: &AudioBuffer,
) -> Result<(), PipelineError> {
    if source_audio.sample_rate() != other_audio.sample_rate() {
        return Err(PipelineError::SampleRateMismatch {
            source_path: source.to_path_buf(),
            source_rate: source_audio.sample_rate(),
            other_path: other.to_path_buf(),
            other_rate: other_audio.sample_rate(),
        });
    }
    Ok(())
}

/// Converts the source utterance to the target speaking rate, writes the
/// result to `job.output_wav` and reports the rates, tempo factor and
/// duration metrics.
pub fn convert(job: &ConversionJob, cfg: &ConvertConfig) -> Result<EvalReport, PipelineError> {
    let opts = RateOptions {
        mode: job.mode,
        ..cfg.rate.clone()
    };
    job.validate()?;
    let labels = opts.silence_labels.as_ref();

    let source = load_wav(&job.source_wav)?;
    let source_alignment = job
        .source_alignment
        .as_deref()
        .map(|p| load_alignment(p, labels))
        .transpose()?;
    let source_est = estimate_rate_from(
        &job.source_wav,
        Some(&source),
        source_alignment.as_ref(),
        &opts,
    )?;

    let target_rate = match (&job.target_wav, job.target_rate) {
        (Some(path), _) => {
            let target = load_wav(path)?;
            check_rate(&job.source_wav, &source, path, &target)?;
            let alignment = job
                .target_alignment
                .as_deref()
                .map(|p| load_alignment(p, labels))
                .transpose()?;
            estimate_rate_from(path, Some(&target), alignment.as_ref(), &opts)?.rate
        }
        (None, Some(rate)) => rate,
        (None, None) => unreachable!("validated"),
    };

    let alpha = interpolation_factor(source_est.rate, target_rate)?;
    let params = StretchParams::from_ms(
        source.sample_rate(),
        cfg.wsola_frame_ms,
        cfg.wsola_tolerance_ms,
    )?;
    let stretched = time_stretch(&source, alpha, &params)?;
    write_wav(&stretched.audio, &job.output_wav)
        .map_err(|e| PipelineError::Audio(job.output_wav.clone(), e))?;

    let mut report = EvalReport {
        source_rate: source_est.rate,
        target_rate,
        alpha,
        source_duration_s: source.duration_s(),
        output_duration_s: stretched.audio.duration_s(),
        target_duration_s: None,
        norm_duration_diff: None,
        within_jnd: None,
        jnd_threshold: cfg.jnd,
        rate_errors: None,
        boundary_metrics: None,
        warnings: Vec::new(),
    };

    if source_est.trimmed_duration_s < SHORT_UTTERANCE_S {
        report.warnings.push(format!(
            "source is {:.2} s after trimming, shorter than {SHORT_UTTERANCE_S} s",
            source_est.trimmed_duration_s
        ));
    }

    let parallel_duration = match (&job.parallel_target_wav, job.parallel_target_duration_s) {
        (Some(path), _) => {
            let parallel = load_wav(path)?;
            check_rate(&job.source_wav, &source, path, &parallel)?;
            Some(parallel.duration_s())
        }
        (None, d) => d,
    };
    if let Some(d) = parallel_duration {
        report.set_target_duration(d)?;
    }

    // Unsupervised runs with a reference alignment are scored against it.
    if let (Mode::Unsupervised, Some(alignment), Some(predicted)) =
        (job.mode, &source_alignment, &source_est.boundaries)
    {
        let trimmed = trim_silence(alignment)
            .map_err(|e| PipelineError::Alignment(job.source_wav.clone(), e))?;
        let truth = phoneme_count(&trimmed);
        report.rate_errors = Some(rate_errors(source_est.count as f64, truth)?.into());
        let reference =
            BoundaryList::from_unsorted(trimmed.interior_boundaries()).unwrap_or_default();
        report.boundary_metrics =
            Some(boundary_metrics(predicted, &reference, BOUNDARY_TOLERANCE_S).into());
    }
    Ok(report)
}
