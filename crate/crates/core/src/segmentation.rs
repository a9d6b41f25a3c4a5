//! Unsupervised phoneme boundary detection and boundary-quality metrics.
//!
//! The detector scores how dissimilar each pair of adjacent feature frames
//! is and picks peaks of that curve as boundaries. Frames come from a
//! deterministic MFCC frontend by default, or from any external encoder via
//! the binary feature file format ([`read_features`] / [`write_features`]).

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::audio::{detect_speech, hann_window, AudioBuffer, AudioError, VadParams};

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error("buffer shorter than one analysis frame ({needed} samples needed, got {got})")]
    BufferTooShort { needed: usize, got: usize },
    #[error("need at least two frames, got {0}")]
    TooFewFrames(usize),
    #[error("frame {0} has zero norm")]
    ZeroVector(usize),
    #[error("invalid feature parameters: {0}")]
    InvalidParams(String),
    #[error("invalid feature sequence: {0}")]
    InvalidFeatures(String),
    #[error("feature file: {0}")]
    FeatureFile(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Raw cepstra.
    None,
    /// Per-utterance, per-dimension mean and variance normalization.
    #[default]
    MeanVariance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureParams {
    pub frame_s: f64,
    pub hop_s: f64,
    pub n_mels: usize,
    /// Cepstral coefficients kept, starting at c1 (c0 is dropped).
    pub n_coeffs: usize,
    pub normalization: Normalization,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            frame_s: 0.025,
            hop_s: 0.010,
            n_mels: 40,
            n_coeffs: 13,
            normalization: Normalization::MeanVariance,
        }
    }
}

/// Fixed-dimension feature frames on a uniform grid. `origin_s` is the time
/// of frame 0 (its centre for audio-derived features).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    frames: Vec<Vec<f64>>,
    hop_s: f64,
    origin_s: f64,
}

impl FeatureSequence {
    pub fn new(
        frames: Vec<Vec<f64>>,
        hop_s: f64,
        origin_s: f64,
    ) -> Result<Self, SegmentationError> {
        if !(hop_s > 0.0 && hop_s.is_finite()) {
            return Err(SegmentationError::InvalidFeatures(format!("hop {hop_s}")));
        }
        if let Some(first) = frames.first() {
            let dim = first.len();
            if dim == 0 {
                return Err(SegmentationError::InvalidFeatures("zero dimension".into()));
            }
            for (i, f) in frames.iter().enumerate() {
                if f.len() != dim {
                    return Err(SegmentationError::InvalidFeatures(format!(
                        "frame {i} has dimension {}, expected {dim}",
                        f.len()
                    )));
                }
                if f.iter().any(|v| !v.is_finite()) {
                    return Err(SegmentationError::InvalidFeatures(format!(
                        "frame {i} has a non-finite value"
                    )));
                }
            }
        }
        Ok(Self {
            frames,
            hop_s,
            origin_s,
        })
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn hop_s(&self) -> f64 {
        self.hop_s
    }

    pub fn origin_s(&self) -> f64 {
        self.origin_s
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular Mel filters over `n_bins = n_fft / 2 + 1` spectrum bins.
fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: f64) -> Vec<Vec<(usize, f64)>> {
    let n_bins = n_fft / 2 + 1;
    let mel_max = hz_to_mel(sample_rate / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate / n_fft as f64;
    (0..n_mels)
        .map(|m| {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .filter_map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f > lo && f <= center {
                        (f - lo) / (center - lo)
                    } else if f > center && f < hi {
                        (hi - f) / (hi - center)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect()
        })
        .collect()
}

/// Band energies below this fraction of the utterance maximum are floored
/// before the log. Relative, so amplitude scaling only shifts c0.
const LOG_FLOOR_RELATIVE: f64 = 1e-5;

/// MFCC-style frame vectors: Hann-windowed magnitude spectrum, Mel
/// filterbank, log, DCT-II; coefficients 1..=n_coeffs are kept.
pub fn frame_features(
    buffer: &AudioBuffer,
    params: &FeatureParams,
) -> Result<FeatureSequence, SegmentationError> {
    if !(params.hop_s > 0.0 && params.frame_s >= params.hop_s) {
        return Err(SegmentationError::InvalidParams(format!(
            "need frame_s >= hop_s > 0, got frame_s={} hop_s={}",
            params.frame_s, params.hop_s
        )));
    }
    if params.n_coeffs == 0 || params.n_coeffs >= params.n_mels {
        return Err(SegmentationError::InvalidParams(format!(
            "need 1 <= n_coeffs < n_mels (c0 is dropped), got n_coeffs={} n_mels={}",
            params.n_coeffs, params.n_mels
        )));
    }
    let sr = buffer.sample_rate() as f64;
    let frame_len = buffer.seconds_to_samples(params.frame_s).max(2);
    let hop = buffer.seconds_to_samples(params.hop_s).max(1);
    let samples = buffer.samples();
    if samples.len() < frame_len {
        return Err(SegmentationError::BufferTooShort {
            needed: frame_len,
            got: samples.len(),
        });
    }
    let n_frames = 1 + (samples.len() - frame_len) / hop;
    let n_fft = frame_len.next_power_of_two();
    let window = hann_window(frame_len)?;
    let filters = mel_filterbank(params.n_mels, n_fft, sr);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);

    let mut spectrum = vec![Complex::new(0.0, 0.0); n_fft];
    let mut band_energies: Vec<Vec<f64>> = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let frame = &samples[t * hop..t * hop + frame_len];
        for (slot, (&x, &w)) in spectrum
            .iter_mut()
            .zip(frame.iter().zip(window.coefficients()))
        {
            *slot = Complex::new(x as f64 * w, 0.0);
        }
        for slot in &mut spectrum[frame_len..] {
            *slot = Complex::new(0.0, 0.0);
        }
        fft.process(&mut spectrum);
        let bands = filters
            .iter()
            .map(|filter| filter.iter().map(|&(k, w)| spectrum[k].norm() * w).sum())
            .collect();
        band_energies.push(bands);
    }

    let max_energy = band_energies.iter().flatten().copied().fold(0.0, f64::max);
    let floor = if max_energy > 0.0 {
        max_energy * LOG_FLOOR_RELATIVE
    } else {
        f64::MIN_POSITIVE
    };

    let m = params.n_mels as f64;
    let dct: Vec<Vec<f64>> = (1..=params.n_coeffs)
        .map(|k| {
            (0..params.n_mels)
                .map(|j| (2.0 / m).sqrt() * (PI * k as f64 * (j as f64 + 0.5) / m).cos())
                .collect()
        })
        .collect();
    let mut frames: Vec<Vec<f64>> = band_energies
        .iter()
        .map(|bands| {
            let logs: Vec<f64> = bands.iter().map(|&e: &f64| e.max(floor).ln()).collect();
            dct.iter()
                .map(|basis| basis.iter().zip(&logs).map(|(b, l)| b * l).sum())
                .collect()
        })
        .collect();

    if params.normalization == Normalization::MeanVariance {
        normalize_mean_variance(&mut frames);
    }
    let origin_s = frame_len as f64 / 2.0 / sr;
    FeatureSequence::new(frames, hop as f64 / sr, origin_s)
}

fn normalize_mean_variance(frames: &mut [Vec<f64>]) {
    let n = frames.len() as f64;
    let Some(dim) = frames.first().map(Vec::len) else {
        return;
    };
    for d in 0..dim {
        let mean = frames.iter().map(|f| f[d]).sum::<f64>() / n;
        let var = frames.iter().map(|f| (f[d] - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        for f in frames.iter_mut() {
            f[d] -= mean;
            if std > 1e-12 {
                f[d] /= std;
            }
        }
    }
}

/// Adjacent-frame dissimilarity, one value per pair of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreCurve {
    pub values: Vec<f64>,
    pub hop_s: f64,
    pub origin_s: f64,
}

impl ScoreCurve {
    pub fn time_at(&self, index: usize) -> f64 {
        self.origin_s + index as f64 * self.hop_s
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `1 - cos(frame[t], frame[t + 1])`, clamped to `[0, 2]`, timed at the
/// midpoint between the two frames.
pub fn dissimilarity_curve(features: &FeatureSequence) -> Result<ScoreCurve, SegmentationError> {
    let frames = features.frames();
    if frames.len() < 2 {
        return Err(SegmentationError::TooFewFrames(frames.len()));
    }
    let norms: Vec<f64> = frames.iter().map(|f| norm(f)).collect();
    if let Some(idx) = norms.iter().position(|&n| n == 0.0) {
        return Err(SegmentationError::ZeroVector(idx));
    }
    let values = frames
        .windows(2)
        .zip(norms.windows(2))
        .map(|(pair, ns)| {
            let dot: f64 = pair[0].iter().zip(&pair[1]).map(|(a, b)| a * b).sum();
            (1.0 - dot / (ns[0] * ns[1])).clamp(0.0, 2.0)
        })
        .collect();
    Ok(ScoreCurve {
        values,
        hop_s: features.hop_s(),
        origin_s: features.origin_s() + features.hop_s() / 2.0,
    })
}

/// Strictly increasing, non-negative boundary times in seconds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundaryList {
    times_s: Vec<f64>,
}

impl BoundaryList {
    pub fn new(times_s: Vec<f64>) -> Option<Self> {
        let valid = times_s.iter().all(|t| t.is_finite() && *t >= 0.0)
            && times_s.windows(2).all(|w| w[0] < w[1]);
        valid.then_some(Self { times_s })
    }

    /// Sorts and removes exact duplicates before validating.
    pub fn from_unsorted(mut times_s: Vec<f64>) -> Option<Self> {
        times_s.sort_by(f64::total_cmp);
        times_s.dedup();
        Self::new(times_s)
    }

    pub fn times(&self) -> &[f64] {
        &self.times_s
    }

    pub fn len(&self) -> usize {
        self.times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }
}

/// Interior local maxima. A flat-topped peak is reported at the (left)
/// middle of its plateau. The first and last samples are never peaks.
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    if x.len() < 3 {
        return peaks;
    }
    let mut i = 1;
    while i < x.len() - 1 {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead < x.len() - 1 && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                peaks.push((i + ahead - 1) / 2);
                i = ahead;
                continue;
            }
        }
        i += 1;
    }
    peaks
}

/// Topographic prominence: height above the higher of the two lowest points
/// reachable on either side before meeting a higher sample.
fn prominence(x: &[f64], peak: usize) -> f64 {
    let h = x[peak];
    let mut left_min = h;
    for &v in x[..peak].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &x[peak + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Picks boundaries from a score curve.
///
/// Local maxima are first thinned so no two survivors are closer than
/// `min_separation_s` (the higher wins, ties go to the earlier), then those
/// with prominence below `min_prominence` are dropped. Thinning before the
/// prominence test makes the result a pure filter of a fixed candidate set,
/// so raising the prominence never adds boundaries.
pub fn detect_boundaries(
    curve: &ScoreCurve,
    min_prominence: f64,
    min_separation_s: f64,
) -> BoundaryList {
    let x = &curve.values;
    let mut candidates = local_maxima(x);
    candidates.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::with_capacity(candidates.len());
    for &c in &candidates {
        let too_close = kept
            .iter()
            .any(|&k| (c.abs_diff(k) as f64) * curve.hop_s < min_separation_s - 1e-12);
        if !too_close {
            kept.push(c);
        }
    }
    kept.retain(|&p| prominence(x, p) >= min_prominence);
    kept.sort_unstable();
    let times = kept
        .into_iter()
        .map(|p| curve.time_at(p).max(0.0))
        .collect();
    BoundaryList::from_unsorted(times).unwrap_or_default()
}

/// Prominence threshold as `max(relative * curve_max, absolute_floor)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProminenceRule {
    pub relative: f64,
    pub absolute_floor: f64,
}

impl ProminenceRule {
    pub fn absolute(value: f64) -> Self {
        Self {
            relative: 0.0,
            absolute_floor: value,
        }
    }

    pub fn threshold(&self, curve: &ScoreCurve) -> f64 {
        (self.relative * curve.max().max(0.0)).max(self.absolute_floor)
    }
}

impl Default for ProminenceRule {
    fn default() -> Self {
        Self {
            relative: 0.1,
            absolute_floor: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnsupervisedParams {
    pub features: FeatureParams,
    pub prominence: ProminenceRule,
    pub min_separation_s: f64,
    /// Analyse only VAD speech regions; `None` analyses the whole buffer.
    pub vad: Option<VadParams>,
}

impl Default for UnsupervisedParams {
    fn default() -> Self {
        Self {
            features: FeatureParams {
                normalization: Normalization::None,
                ..FeatureParams::default()
            },
            prominence: ProminenceRule::default(),
            min_separation_s: 0.040,
            vad: Some(VadParams::default()),
        }
    }
}

/// Frames with a cepstral norm below this are treated as silent: the curve
/// is split around them instead of scoring against a direction-less vector.
const SILENT_FRAME_NORM: f64 = 1e-9;

fn boundaries_in_features(
    features: &FeatureSequence,
    params: &UnsupervisedParams,
    offset_s: f64,
    out: &mut Vec<f64>,
) -> Result<(), SegmentationError> {
    let frames = features.frames();
    let mut start = 0;
    while start < frames.len() {
        if norm(&frames[start]) < SILENT_FRAME_NORM {
            start += 1;
            continue;
        }
        let mut end = start;
        while end < frames.len() && norm(&frames[end]) >= SILENT_FRAME_NORM {
            end += 1;
        }
        if end - start >= 2 {
            let run = FeatureSequence::new(
                frames[start..end].to_vec(),
                features.hop_s(),
                features.origin_s() + start as f64 * features.hop_s(),
            )?;
            let curve = dissimilarity_curve(&run)?;
            let threshold = params.prominence.threshold(&curve);
            let found = detect_boundaries(&curve, threshold, params.min_separation_s);
            out.extend(found.times().iter().map(|t| t + offset_s));
        }
        start = end;
    }
    Ok(())
}

/// Interior phoneme boundaries of an utterance, on the buffer's time axis.
pub fn segment_unsupervised(
    buffer: &AudioBuffer,
    params: &UnsupervisedParams,
) -> Result<BoundaryList, SegmentationError> {
    let frame_len = buffer.seconds_to_samples(params.features.frame_s).max(2);
    let mut times = Vec::new();
    match &params.vad {
        Some(vad) => {
            for region in detect_speech(buffer, vad)? {
                let piece = buffer.slice_seconds(region.start_s, region.end_s);
                if piece.len() < frame_len {
                    continue;
                }
                let features = frame_features(&piece, &params.features)?;
                boundaries_in_features(&features, params, region.start_s, &mut times)?;
            }
        }
        None => {
            let features = frame_features(buffer, &params.features)?;
            boundaries_in_features(&features, params, 0.0, &mut times)?;
        }
    }
    Ok(BoundaryList::from_unsorted(times).unwrap_or_default())
}

/// Detected boundary count, used directly as the phoneme-count proxy.
pub fn count_phonemes_unsupervised(
    buffer: &AudioBuffer,
    params: &UnsupervisedParams,
) -> Result<usize, SegmentationError> {
    Ok(segment_unsupervised(buffer, params)?.len())
}

/// Boundary detection quality at a given tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub r_value: f64,
    pub tolerance_s: f64,
    pub matches: usize,
    pub n_predicted: usize,
    pub n_reference: usize,
}

/// One-to-one matching in time order: each reference boundary takes the
/// earliest still-unmatched prediction within `tolerance_s`. Returns the
/// number of matched pairs.
///
/// With equal-width tolerance intervals this greedy is a maximum matching.
pub fn match_boundaries(predicted: &[f64], reference: &[f64], tolerance_s: f64) -> usize {
    let mut matches = 0;
    let mut j = 0;
    for &r in reference {
        while j < predicted.len() && r - predicted[j] > tolerance_s {
            j += 1;
        }
        if j < predicted.len() && predicted[j] - r <= tolerance_s {
            matches += 1;
            j += 1;
        }
    }
    matches
}

/// Precision, recall, F1 and R-value of predicted against reference
/// boundaries.
///
/// With no predictions precision is 0; with no reference recall is 0; both
/// empty scores a perfect 1 everywhere. The R-value uses over-segmentation
/// `OS = |predicted| / |reference| - 1` (equal to `R / P - 1` whenever there
/// is a match), with `|reference|` floored at 1.
pub fn boundary_metrics(
    predicted: &BoundaryList,
    reference: &BoundaryList,
    tolerance_s: f64,
) -> BoundaryMetrics {
    let (n_pred, n_ref) = (predicted.len(), reference.len());
    if n_pred == 0 && n_ref == 0 {
        return BoundaryMetrics {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
            r_value: 1.0,
            tolerance_s,
            matches: 0,
            n_predicted: 0,
            n_reference: 0,
        };
    }
    let matches = match_boundaries(predicted.times(), reference.times(), tolerance_s);
    let precision = if n_pred == 0 {
        0.0
    } else {
        matches as f64 / n_pred as f64
    };
    let recall = if n_ref == 0 {
        0.0
    } else {
        matches as f64 / n_ref as f64
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let os = n_pred as f64 / n_ref.max(1) as f64 - 1.0;
    let r1 = ((1.0 - recall).powi(2) + os * os).sqrt();
    let r2 = (-os + recall - 1.0) / 2f64.sqrt();
    let r_value = 1.0 - (r1.abs() + r2.abs()) / 2.0;
    BoundaryMetrics {
        precision,
        recall,
        f1,
        r_value,
        tolerance_s,
        matches,
        n_predicted: n_pred,
        n_reference: n_ref,
    }
}

// Feature file layout, all little-endian:
//   u32 frame count, u32 dimension, u32 hop in microseconds,
//   then frame-major f32 values.

pub fn write_features(
    features: &FeatureSequence,
    path: impl AsRef<Path>,
) -> Result<(), SegmentationError> {
    let mut out = Vec::with_capacity(12 + 4 * features.len() * features.dim());
    let as_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| SegmentationError::FeatureFile(format!("{what} too large")))
    };
    out.extend_from_slice(&as_u32(features.len(), "frame count")?.to_le_bytes());
    out.extend_from_slice(&as_u32(features.dim(), "dimension")?.to_le_bytes());
    let hop_us = (features.hop_s() * 1e6).round() as usize;
    out.extend_from_slice(&as_u32(hop_us, "hop")?.to_le_bytes());
    for v in features.frames().iter().flatten() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

/// Reads an externally computed feature file. Frame 0 is placed at t = 0.
pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSequence, SegmentationError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 12 {
        return Err(SegmentationError::FeatureFile("missing header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let (count, dim, hop_us) = (word(0), word(1), word(2));
    if hop_us == 0 {
        return Err(SegmentationError::FeatureFile(
            "hop must be positive".into(),
        ));
    }
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(12))
        .ok_or_else(|| SegmentationError::FeatureFile("header overflows".into()))?;
    if bytes.len() != expected {
        return Err(SegmentationError::FeatureFile(format!(
            "expected {expected} bytes for {count}x{dim} frames, found {}",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let frames = if dim == 0 {
        Vec::new()
    } else {
        values.chunks(dim).map(<[f64]>::to_vec).collect()
    };
    FeatureSequence::new(frames, hop_us as f64 * 1e-6, 0.0)
}
