//! Phoneme alignments: ingestion, silence trimming, counting and the
//! utterance-level phoneme rate.
//!
//! Alignments are plain TSV, one segment per line:
//!
//! ```text
//! # start_s  end_s  label
//! 0.00	0.12	sil
//! 0.12	0.19	HH
//! ```
//!
//! Times stay registered to the audio they were aligned against; nothing in
//! this module shifts the time axis.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::audio::{speech_duration, SpeechRegion};

/// Overlap between consecutive segments tolerated (and clipped) on parse.
pub const OVERLAP_TOLERANCE_S: f64 = 0.001;

pub const DEFAULT_SILENCE_LABELS: [&str; 4] = ["sil", "sp", "spn", ""];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignmentError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("segments overlap: [{first_start}, {first_end}) and [{second_start}, ...)")]
    Overlap {
        first_start: f64,
        first_end: f64,
        second_start: f64,
    },
    #[error("alignment contains no phonemes")]
    EmptyAlignment,
    #[error("speech duration is zero")]
    ZeroDuration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhonemeSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub label: String,
}

impl PhonemeSegment {
    pub fn new(start_s: f64, end_s: f64, label: impl Into<String>) -> Option<Self> {
        (start_s.is_finite() && end_s.is_finite() && start_s >= 0.0 && end_s > start_s).then(|| {
            Self {
                start_s,
                end_s,
                label: label.into(),
            }
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// How the speech duration is derived from an alignment alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DurationMode {
    /// Sum of non-silence segment durations: pauses anywhere are excluded.
    #[default]
    ExcludeAllSilence,
    /// First phoneme start to last phoneme end: only edge silence excluded.
    EdgesOnly,
}

/// Ordered, non-overlapping phoneme segments plus the labels that count as
/// silence.
#[derive(Debug, Clone, PartialEq)]
pub struct PhonemeAlignment {
    segments: Vec<PhonemeSegment>,
    silence_labels: BTreeSet<String>,
}

impl Default for PhonemeAlignment {
    fn default() -> Self {
        Self {
            segments: Vec::new(),
            silence_labels: default_silence_labels(),
        }
    }
}

pub fn default_silence_labels() -> BTreeSet<String> {
    DEFAULT_SILENCE_LABELS
        .iter()
        .map(|s| s.to_string())
        .collect()
}

impl PhonemeAlignment {
    /// Sorts the segments by start time and validates them. Overlaps up to
    /// [`OVERLAP_TOLERANCE_S`] are clipped; larger ones are rejected.
    pub fn new(
        mut segments: Vec<PhonemeSegment>,
        silence_labels: BTreeSet<String>,
    ) -> Result<Self, AlignmentError> {
        segments.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        for i in 1..segments.len() {
            let (prev, next) = (&segments[i - 1], &segments[i]);
            if prev.end_s > next.start_s {
                if prev.end_s - next.start_s > OVERLAP_TOLERANCE_S || next.start_s <= prev.start_s {
                    return Err(AlignmentError::Overlap {
                        first_start: prev.start_s,
                        first_end: prev.end_s,
                        second_start: next.start_s,
                    });
                }
                segments[i - 1].end_s = segments[i].start_s;
            }
        }
        Ok(Self {
            segments,
            silence_labels,
        })
    }

    pub fn segments(&self) -> &[PhonemeSegment] {
        &self.segments
    }

    pub fn silence_labels(&self) -> &BTreeSet<String> {
        &self.silence_labels
    }

    pub fn with_silence_labels(mut self, labels: BTreeSet<String>) -> Self {
        self.silence_labels = labels;
        self
    }

    pub fn is_silence(&self, segment: &PhonemeSegment) -> bool {
        self.silence_labels.contains(&segment.label)
    }

    pub fn phonemes(&self) -> impl Iterator<Item = &PhonemeSegment> {
        self.segments.iter().filter(|s| !self.is_silence(s))
    }

    /// Shifts every segment by `offset_s`. Used by property tests and by
    /// callers re-registering an alignment to a cropped buffer.
    pub fn translated(&self, offset_s: f64) -> Self {
        self.map_times(|t| t + offset_s)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map_times(|t| t * factor)
    }

    fn map_times(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .map(|s| PhonemeSegment {
                    start_s: f(s.start_s),
                    end_s: f(s.end_s),
                    label: s.label.clone(),
                })
                .collect(),
            silence_labels: self.silence_labels.clone(),
        }
    }

    /// Speech duration implied by the alignment itself.
    pub fn speech_duration_s(&self, mode: DurationMode) -> f64 {
        match mode {
            DurationMode::ExcludeAllSilence => {
                self.phonemes().map(PhonemeSegment::duration_s).sum()
            }
            DurationMode::EdgesOnly => {
                let mut phonemes = self.phonemes();
                match phonemes.next() {
                    Some(first) => {
                        let last = phonemes.last().unwrap_or(first);
                        last.end_s - first.start_s
                    }
                    None => 0.0,
                }
            }
        }
    }

    /// Interior boundary times: every segment edge except the utterance's
    /// first start and last end. Touching edges are reported once.
    pub fn interior_boundaries(&self) -> Vec<f64> {
        let mut times = Vec::new();
        for (i, seg) in self.segments.iter().enumerate() {
            if i > 0 {
                times.push(seg.start_s);
            }
            if i + 1 < self.segments.len() {
                times.push(seg.end_s);
            }
        }
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        times
    }
}

/// Parses `start<TAB>end<TAB>label` lines. Blank lines and lines starting
/// with `#` are skipped; a missing label parses as the empty (silence) label.
pub fn parse_alignment(text: &str) -> Result<PhonemeAlignment, AlignmentError> {
    let mut segments = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').collect()
        } else {
            line.split_whitespace().collect()
        };
        if fields.len() < 2 || fields.len() > 3 {
            return Err(AlignmentError::Parse {
                line: line_no,
                message: format!("expected 'start<TAB>end<TAB>label', got {:?}", line),
            });
        }
        let parse_time = |field: &str, what: &str| {
            field
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|t| t.is_finite())
                .ok_or_else(|| AlignmentError::Parse {
                    line: line_no,
                    message: format!("invalid {what} time {:?}", field),
                })
        };
        let start = parse_time(fields[0], "start")?;
        let end = parse_time(fields[1], "end")?;
        let label = fields.get(2).map(|l| l.trim()).unwrap_or("");
        let segment =
            PhonemeSegment::new(start, end, label).ok_or_else(|| AlignmentError::Parse {
                line: line_no,
                message: format!("segment must satisfy 0 <= start < end, got [{start}, {end})"),
            })?;
        segments.push(segment);
    }
    PhonemeAlignment::new(segments, default_silence_labels())
}

/// Removes leading and trailing silence segments. Interior silence and the
/// time axis are left untouched.
pub fn trim_silence(alignment: &PhonemeAlignment) -> Result<PhonemeAlignment, AlignmentError> {
    let segs = alignment.segments();
    let first = segs.iter().position(|s| !alignment.is_silence(s));
    let last = segs.iter().rposition(|s| !alignment.is_silence(s));
    match (first, last) {
        (Some(a), Some(b)) => Ok(PhonemeAlignment {
            segments: segs[a..=b].to_vec(),
            silence_labels: alignment.silence_labels.clone(),
        }),
        _ => Err(AlignmentError::EmptyAlignment),
    }
}

pub fn phoneme_count(alignment: &PhonemeAlignment) -> usize {
    alignment.phonemes().count()
}

/// Phonemes per second of speech.
///
/// The duration is the total length of `speech_regions` when given (e.g. VAD
/// output), otherwise it is taken from the alignment according to `mode`.
pub fn utterance_phoneme_rate(
    alignment: &PhonemeAlignment,
    speech_regions: Option<&[SpeechRegion]>,
    mode: DurationMode,
) -> Result<f64, AlignmentError> {
    let count = phoneme_count(alignment);
    if count == 0 {
        return Err(AlignmentError::EmptyAlignment);
    }
    let duration = match speech_regions {
        Some(regions) => speech_duration(regions),
        None => alignment.speech_duration_s(mode),
    };
    if !(duration > 0.0) {
        return Err(AlignmentError::ZeroDuration);
    }
    Ok(count as f64 / duration)
}
