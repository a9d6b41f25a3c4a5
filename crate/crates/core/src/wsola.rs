//! Waveform-similarity overlap-add (WSOLA) time-scale modification.
//!
//! `alpha` is a tempo factor: the output is `len / alpha` samples long, so
//! `alpha > 1` speeds speech up. Synthesis frames sit at multiples of the
//! synthesis hop; each analysis frame is taken near `alpha` times its
//! synthesis position, shifted within `±tolerance` samples to best match the
//! natural continuation of the previous analysis frame.

use thiserror::Error;

use crate::audio::{hann_window, AudioBuffer, WindowVector};

pub const MIN_ALPHA: f64 = 0.25;
pub const MAX_ALPHA: f64 = 4.0;
/// Accumulated window weight below which output samples are not amplified.
pub const WINDOW_SUM_FLOOR: f64 = 1e-6;

pub const DEFAULT_FRAME_MS: f64 = 25.0;
pub const DEFAULT_TOLERANCE_MS: f64 = 7.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StretchError {
    #[error("alpha {0} outside [{MIN_ALPHA}, {MAX_ALPHA}]")]
    AlphaOutOfRange(f64),
    #[error("input has {got} samples, need at least {needed}")]
    InputTooShort { needed: usize, got: usize },
    #[error("candidate region of {got} samples cannot cover all offsets (need {needed})")]
    RegionTooShort { needed: usize, got: usize },
    #[error("invalid stretch parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StretchParams {
    frame_len: usize,
    synthesis_hop: usize,
    tolerance: usize,
    window: WindowVector,
}

impl StretchParams {
    /// Frame length must be even; the window is a symmetric Hann of that
    /// length.
    pub fn new(
        frame_len: usize,
        synthesis_hop: usize,
        tolerance: usize,
    ) -> Result<Self, StretchError> {
        if frame_len < 2 || frame_len % 2 != 0 {
            return Err(StretchError::InvalidParams(format!(
                "frame length must be even and >= 2, got {frame_len}"
            )));
        }
        if synthesis_hop == 0 || synthesis_hop > frame_len {
            return Err(StretchError::InvalidParams(format!(
                "synthesis hop must be in 1..={frame_len}, got {synthesis_hop}"
            )));
        }
        let window = hann_window(frame_len).expect("frame_len >= 2");
        Ok(Self {
            frame_len,
            synthesis_hop,
            tolerance,
            window,
        })
    }

    /// Millisecond settings converted at `sample_rate`, frame rounded to an
    /// even sample count, 50 % synthesis hop.
    pub fn from_ms(
        sample_rate: u32,
        frame_ms: f64,
        tolerance_ms: f64,
    ) -> Result<Self, StretchError> {
        if !(frame_ms > 0.0 && tolerance_ms >= 0.0) {
            return Err(StretchError::InvalidParams(format!(
                "frame {frame_ms} ms, tolerance {tolerance_ms} ms"
            )));
        }
        let sr = sample_rate as f64;
        let frame_len = (((frame_ms / 1000.0 * sr) / 2.0).round() as usize * 2).max(2);
        let tolerance = (tolerance_ms / 1000.0 * sr).round() as usize;
        Self::new(frame_len, frame_len / 2, tolerance)
    }

    /// Defaults: 25 ms frames, 50 % hop, 7.5 ms tolerance.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        Self::from_ms(sample_rate, DEFAULT_FRAME_MS, DEFAULT_TOLERANCE_MS)
            .expect("default settings are valid")
    }

    pub fn with_tolerance(mut self, tolerance: usize) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn synthesis_hop(&self) -> usize {
        self.synthesis_hop
    }

    pub fn tolerance(&self) -> usize {
        self.tolerance
    }

    pub fn window(&self) -> &WindowVector {
        &self.window
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StretchResult {
    pub audio: AudioBuffer,
    /// Input length over output length.
    pub achieved_ratio: f64,
}

/// Offset in `[-tolerance, tolerance]` whose slice of `candidate_region`
/// has the highest normalized cross-correlation with `reference`.
///
/// Offset `d` selects `candidate_region[tolerance + d ..][..reference.len()]`.
/// Zero-energy slices score 0. Ties go to the smaller `|d|`, then to the
/// negative side.
pub fn best_offset(
    reference: &[f32],
    candidate_region: &[f32],
    tolerance: usize,
) -> Result<isize, StretchError> {
    let needed = reference.len() + 2 * tolerance;
    if candidate_region.len() < needed {
        return Err(StretchError::RegionTooShort {
            needed,
            got: candidate_region.len(),
        });
    }
    let ref_energy: f64 = reference.iter().map(|&v| (v as f64) * (v as f64)).sum();
    if tolerance == 0 || ref_energy == 0.0 {
        return Ok(0);
    }
    // prefix[i] = energy of candidate_region[..i]
    let mut prefix = Vec::with_capacity(needed + 1);
    prefix.push(0.0f64);
    for &v in &candidate_region[..needed] {
        prefix.push(prefix.last().unwrap() + (v as f64) * (v as f64));
    }
    let len = reference.len();
    let score = |d: isize| {
        let start = (tolerance as isize + d) as usize;
        let energy = prefix[start + len] - prefix[start];
        if energy <= 0.0 {
            return 0.0;
        }
        let dot: f64 = reference
            .iter()
            .zip(&candidate_region[start..start + len])
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        dot / (ref_energy * energy).sqrt()
    };
    let mut best = (0isize, score(0));
    for step in 1..=tolerance as isize {
        for d in [-step, step] {
            let s = score(d);
            if s > best.1 {
                best = (d, s);
            }
        }
    }
    Ok(best.0)
}

/// Changes the duration of `input` by `1 / alpha` without changing pitch.
///
/// The output has exactly `round(len / alpha)` samples. Overlap-added frames
/// are divided by the accumulated window weight, so each output sample is a
/// convex combination of input samples. The first frame is copied verbatim.
pub fn time_stretch(
    input: &AudioBuffer,
    alpha: f64,
    params: &StretchParams,
) -> Result<StretchResult, StretchError> {
    if !(alpha.is_finite() && (MIN_ALPHA..=MAX_ALPHA).contains(&alpha)) {
        return Err(StretchError::AlphaOutOfRange(alpha));
    }
    let frame = params.frame_len;
    let hop = params.synthesis_hop;
    let tol = params.tolerance;
    let n = input.len();
    if n < 2 * frame {
        return Err(StretchError::InputTooShort {
            needed: 2 * frame,
            got: n,
        });
    }
    let out_len = ((n as f64 / alpha).round() as usize).max(1);

    // Zero padding so every candidate and continuation slice is in range.
    let pad_left = tol;
    let pad_right = 2 * (frame + tol) + (alpha * hop as f64).ceil() as usize + hop;
    let mut padded = vec![0.0f32; pad_left + n + pad_right];
    padded[pad_left..pad_left + n].copy_from_slice(input.samples());
    let at = |pos: isize| (pos + pad_left as isize) as usize;

    let window = params.window.coefficients();
    let mut first_window = window.to_vec();
    for w in &mut first_window[..frame / 2] {
        *w = 1.0;
    }

    let mut acc = vec![0.0f64; out_len + frame];
    let mut weight = vec![0.0f64; out_len + frame];
    let mut prev_pos: isize = 0;
    let mut m = 0usize;
    while m * hop < out_len {
        let synth = m * hop;
        let pos = if m == 0 {
            0
        } else {
            let nominal = (synth as f64 * alpha).round() as isize;
            let natural = at(prev_pos + hop as isize);
            let reference = &padded[natural..natural + frame];
            let region_start = at(nominal - tol as isize);
            let region = &padded[region_start..region_start + frame + 2 * tol];
            nominal + best_offset(reference, region, tol)?
        };
        let w = if m == 0 { &first_window[..] } else { window };
        let src = &padded[at(pos)..at(pos) + frame];
        for (k, (&x, &wk)) in src.iter().zip(w).enumerate() {
            acc[synth + k] += wk * x as f64;
            weight[synth + k] += wk;
        }
        prev_pos = pos;
        m += 1;
    }

    let samples: Vec<f32> = acc[..out_len]
        .iter()
        .zip(&weight[..out_len])
        .map(|(&a, &w)| (a / w.max(WINDOW_SUM_FLOOR)) as f32)
        .collect();
    let audio = AudioBuffer::new(samples, input.sample_rate()).expect("finite convex combinations");
    Ok(StretchResult {
        achieved_ratio: n as f64 / out_len as f64,
        audio,
    })
}
