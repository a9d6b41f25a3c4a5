//! Audio ingestion, window functions and energy-based voice activity detection.
//!
//! Every rate computation downstream works on an [`AudioBuffer`]: a mono
//! waveform with its sample rate. Durations are always derived from the
//! sample count, never stored.

use std::f64::consts::PI;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt WAV file: {0}")]
    CorruptFile(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("sample rate must be positive")]
    InvalidSampleRate,
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("window size must be at least 1")]
    InvalidSize,
    #[error("buffer is empty")]
    EmptyBuffer,
    #[error("invalid VAD parameters: {0}")]
    InvalidParams(String),
}

/// Mono waveform with a sample rate. Samples are nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidSampleRate);
        }
        if let Some(idx) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFiniteSample(idx));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Largest absolute sample value (0 for an empty buffer).
    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |acc, s| acc.max(s.abs()))
    }

    /// Samples between two times, clamped to the buffer.
    pub fn slice_seconds(&self, start_s: f64, end_s: f64) -> AudioBuffer {
        let sr = self.sample_rate as f64;
        let start = ((start_s * sr).round().max(0.0) as usize).min(self.samples.len());
        let end = ((end_s * sr).round().max(0.0) as usize).clamp(start, self.samples.len());
        AudioBuffer {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    /// Converts a duration in seconds to the nearest whole sample count.
    pub fn seconds_to_samples(&self, seconds: f64) -> usize {
        (seconds * self.sample_rate as f64).round().max(0.0) as usize
    }
}

/// Reads a mono PCM16 or IEEE float32 WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(map_hound_error)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioError::UnsupportedFormat(format!(
            "{} channels, only mono is supported",
            spec.channels
        )));
    }
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(map_sample_error)?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(map_sample_error)?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedFormat(format!(
                "{bits}-bit {fmt:?} samples"
            )))
        }
    };
    AudioBuffer::new(samples, spec.sample_rate).map_err(|e| match e {
        AudioError::NonFiniteSample(i) => {
            AudioError::CorruptFile(format!("non-finite sample at index {i}"))
        }
        other => other,
    })
}

/// Writes a buffer as mono PCM16. Samples outside `[-1, 1]` are clipped.
pub fn write_wav(buffer: &AudioBuffer, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path.as_ref(), spec).map_err(map_hound_error)?;
    for &s in &buffer.samples {
        writer
            .write_sample(quantize_pcm16(s))
            .map_err(map_hound_error)?;
    }
    writer.finalize().map_err(map_hound_error)
}

fn quantize_pcm16(sample: f32) -> i16 {
    (sample as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

fn map_hound_error(err: hound::Error) -> AudioError {
    match err {
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            AudioError::CorruptFile(e.to_string())
        }
        hound::Error::IoError(e) => AudioError::Io(e),
        hound::Error::FormatError(msg) => AudioError::CorruptFile(msg.to_string()),
        hound::Error::Unsupported => {
            AudioError::UnsupportedFormat("unsupported WAV encoding".into())
        }
        other => AudioError::UnsupportedFormat(other.to_string()),
    }
}

fn map_sample_error(err: hound::Error) -> AudioError {
    match err {
        hound::Error::IoError(e) => AudioError::CorruptFile(format!("truncated sample data: {e}")),
        other => map_hound_error(other),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hann,
}

/// Window coefficients together with the window family they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowVector {
    coefficients: Vec<f64>,
    kind: WindowKind,
}

impl WindowVector {
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn kind(&self) -> WindowKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.coefficients.iter().sum()
    }
}

/// Symmetric Hann window: `w(m) = 0.5 - 0.5 cos(2 pi m / (size - 1))`.
///
/// The second half is mirrored from the first so `w(m) == w(size - 1 - m)`
/// holds bit-exactly.
pub fn hann_window(size: usize) -> Result<WindowVector, AudioError> {
    if size == 0 {
        return Err(AudioError::InvalidSize);
    }
    if size == 1 {
        return Ok(WindowVector {
            coefficients: vec![1.0],
            kind: WindowKind::Hann,
        });
    }
    let denom = (size - 1) as f64;
    let mut coefficients = vec![0.0; size];
    for m in 0..size.div_ceil(2) {
        let w = 0.5 - 0.5 * (2.0 * PI * m as f64 / denom).cos();
        coefficients[m] = w;
        coefficients[size - 1 - m] = w;
    }
    Ok(WindowVector {
        coefficients,
        kind: WindowKind::Hann,
    })
}

/// A stretch of speech on the buffer's time axis, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeechRegion {
    pub start_s: f64,
    pub end_s: f64,
}

impl SpeechRegion {
    pub fn new(start_s: f64, end_s: f64) -> Option<Self> {
        (start_s >= 0.0 && end_s > start_s && end_s.is_finite()).then_some(Self { start_s, end_s })
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Frame-energy VAD configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VadParams {
    pub frame_s: f64,
    pub hop_s: f64,
    /// Threshold relative to the loudest frame, in dB (negative).
    pub threshold_db: f64,
    pub min_region_s: f64,
}

impl Default for VadParams {
    fn default() -> Self {
        Self {
            frame_s: 0.025,
            hop_s: 0.010,
            threshold_db: -40.0,
            min_region_s: 0.100,
        }
    }
}

fn mean_square_db(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return f64::NEG_INFINITY;
    }
    let ms = samples
        .iter()
        .map(|&s| (s as f64) * (s as f64))
        .sum::<f64>()
        / samples.len() as f64;
    if ms > 0.0 {
        10.0 * ms.log10()
    } else {
        f64::NEG_INFINITY
    }
}

/// Energy VAD: frames louder than `peak + threshold_db` are speech.
///
/// Runs of speech frames become regions. Region edges are then refined to
/// hop-sized blocks inside the edge frames, so each boundary lands within one
/// hop of the true onset/offset instead of being smeared by the frame length.
pub fn detect_speech(
    buffer: &AudioBuffer,
    params: &VadParams,
) -> Result<Vec<SpeechRegion>, AudioError> {
    if buffer.is_empty() {
        return Err(AudioError::EmptyBuffer);
    }
    if !(params.hop_s > 0.0 && params.frame_s >= params.hop_s) {
        return Err(AudioError::InvalidParams(format!(
            "need frame_s >= hop_s > 0, got frame_s={} hop_s={}",
            params.frame_s, params.hop_s
        )));
    }
    let samples = buffer.samples();
    let len = samples.len();
    let frame = buffer.seconds_to_samples(params.frame_s).max(1);
    let hop = buffer.seconds_to_samples(params.hop_s).max(1);
    let n_frames = if len >= frame {
        1 + (len - frame) / hop
    } else {
        1
    };

    let frame_db: Vec<f64> = (0..n_frames)
        .map(|i| {
            let start = i * hop;
            mean_square_db(&samples[start..(start + frame).min(len)])
        })
        .collect();
    let peak = frame_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Ok(Vec::new());
    }
    let threshold = peak + params.threshold_db;
    let is_speech: Vec<bool> = frame_db.iter().map(|&db| db > threshold).collect();

    let block_active = |k: usize| {
        let start = k * hop;
        mean_square_db(&samples[start.min(len)..((k + 1) * hop).min(len)]) > threshold
    };

    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < n_frames {
        if !is_speech[i] {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < n_frames && is_speech[j + 1] {
            j += 1;
        }
        let span_start = i * hop;
        let span_end = if j + 1 == n_frames {
            len
        } else {
            (j * hop + frame).min(len)
        };
        let blocks = (span_start / hop)..span_end.div_ceil(hop);
        let first = blocks.clone().find(|&k| block_active(k));
        let last = blocks.rev().find(|&k| block_active(k));
        let (start, end) = match (first, last) {
            (Some(a), Some(b)) => (a * hop, ((b + 1) * hop).min(len)),
            _ => (span_start, span_end),
        };
        match spans.last_mut() {
            Some(prev) if start <= prev.1 => prev.1 = prev.1.max(end),
            _ => spans.push((start, end)),
        }
        i = j + 1;
    }

    let sr = buffer.sample_rate() as f64;
    Ok(spans
        .into_iter()
        .filter_map(|(s, e)| SpeechRegion::new(s as f64 / sr, e as f64 / sr))
        .filter(|r| r.duration_s() >= params.min_region_s)
        .collect())
}

/// Total duration covered by the regions.
pub fn speech_duration(regions: &[SpeechRegion]) -> f64 {
    regions.iter().map(SpeechRegion::duration_s).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, seconds: f64, sr: u32, amp: f32) -> Vec<f32> {
        let n = (seconds * sr as f64).round() as usize;
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / sr as f64).sin() as f32)
            .collect()
    }

    #[test]
    fn rejects_zero_sample_rate_and_nan() {
        assert!(matches!(
            AudioBuffer::new(vec![0.0], 0),
            Err(AudioError::InvalidSampleRate)
        ));
        assert!(matches!(
            AudioBuffer::new(vec![0.0, f32::NAN], 16000),
            Err(AudioError::NonFiniteSample(1))
        ));
    }

    #[test]
    fn hann_small_sizes() {
        assert_eq!(hann_window(1).unwrap().coefficients(), &[1.0]);
        let w3 = hann_window(3).unwrap();
        assert_eq!(w3.coefficients()[0], 0.0);
        assert!((w3.coefficients()[1] - 1.0).abs() < 1e-15);
        assert_eq!(w3.coefficients()[2], 0.0);
        let w5 = hann_window(5).unwrap();
        let expected = [0.0, 0.5, 1.0, 0.5, 0.0];
        for (a, b) in w5.coefficients().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert!(matches!(hann_window(0), Err(AudioError::InvalidSize)));
    }

    #[test]
    fn hann_is_exactly_symmetric_with_center_max() {
        for size in [2, 4, 7, 62, 63, 400, 401] {
            let w = hann_window(size).unwrap();
            let c = w.coefficients();
            for m in 0..size {
                assert_eq!(c[m], c[size - 1 - m]);
                assert!(c[m] >= 0.0);
            }
            let max = c.iter().cloned().fold(0.0, f64::max);
            assert_eq!(c[(size - 1) / 2], max);
        }
    }

    #[test]
    fn vad_all_zero_is_empty() {
        let buf = AudioBuffer::new(vec![0.0; 16000], 16000).unwrap();
        assert!(detect_speech(&buf, &VadParams::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn vad_empty_buffer_errors() {
        let buf = AudioBuffer::new(vec![], 16000).unwrap();
        assert!(matches!(
            detect_speech(&buf, &VadParams::default()),
            Err(AudioError::EmptyBuffer)
        ));
    }

    #[test]
    fn vad_rejects_hop_larger_than_frame() {
        let buf = AudioBuffer::new(vec![0.1; 1600], 16000).unwrap();
        let params = VadParams {
            frame_s: 0.01,
            hop_s: 0.02,
            ..VadParams::default()
        };
        assert!(matches!(
            detect_speech(&buf, &params),
            Err(AudioError::InvalidParams(_))
        ));
    }

    #[test]
    fn vad_padded_sine() {
        let sr = 16000;
        let mut samples = vec![0.0; sr as usize];
        samples.extend(sine(440.0, 1.0, sr, 0.5));
        samples.extend(vec![0.0; sr as usize]);
        let buf = AudioBuffer::new(samples, sr).unwrap();
        let params = VadParams::default();
        let regions = detect_speech(&buf, &params).unwrap();
        assert_eq!(regions.len(), 1);
        assert!((regions[0].start_s - 1.0).abs() <= params.hop_s);
        assert!((regions[0].end_s - 2.0).abs() <= params.hop_s);
        assert!((speech_duration(&regions) - 1.0).abs() <= params.hop_s);
    }

    #[test]
    fn vad_drops_short_regions() {
        let sr = 16000;
        let mut samples = vec![0.0; 8000];
        samples.extend(sine(300.0, 0.05, sr, 0.5));
        samples.extend(vec![0.0; 8000]);
        samples.extend(sine(300.0, 0.5, sr, 0.5));
        samples.extend(vec![0.0; 8000]);
        let buf = AudioBuffer::new(samples, sr).unwrap();
        let regions = detect_speech(&buf, &VadParams::default()).unwrap();
        assert_eq!(regions.len(), 1);
        assert!((regions[0].duration_s() - 0.5).abs() <= 0.01);
    }

    #[test]
    fn speech_duration_sums() {
        assert_eq!(speech_duration(&[]), 0.0);
        let regions = [
            SpeechRegion::new(0.0, 1.0).unwrap(),
            SpeechRegion::new(2.0, 3.5).unwrap(),
        ];
        assert_eq!(speech_duration(&regions), 2.5);
    }

    #[test]
    fn slice_seconds_clamps() {
        let buf = AudioBuffer::new(vec![0.5; 1000], 1000).unwrap();
        assert_eq!(buf.slice_seconds(0.25, 0.5).len(), 250);
        assert_eq!(buf.slice_seconds(0.9, 5.0).len(), 100);
        assert_eq!(buf.slice_seconds(2.0, 3.0).len(), 0);
    }

    #[test]
    fn quantize_full_scale() {
        assert_eq!(quantize_pcm16(1.0), 32767);
        assert_eq!(quantize_pcm16(-1.0), -32768);
        assert_eq!(quantize_pcm16(0.0), 0);
    }
}
