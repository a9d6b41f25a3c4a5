#![allow(dead_code)]

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempomatch::alignment::{default_silence_labels, PhonemeAlignment, PhonemeSegment};
use tempomatch::audio::write_wav;
use tempomatch::AudioBuffer;

pub const SR: u32 = 16000;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tone(freq: f64, seconds: f64, sr: u32, amp: f64) -> Vec<f32> {
    let n = (seconds * sr as f64).round() as usize;
    (0..n)
        .map(|i| (amp * (2.0 * PI * freq * i as f64 / sr as f64).sin()) as f32)
        .collect()
}

/// Adjacent entries land in well separated Mel bands.
pub const TONE_FREQS: [f64; 8] = [300.0, 2200.0, 650.0, 3600.0, 1100.0, 5200.0, 450.0, 1600.0];

pub fn tone_sequence(k: usize, seconds_each: f64, sr: u32) -> AudioBuffer {
    let samples = TONE_FREQS[..k]
        .iter()
        .flat_map(|&f| tone(f, seconds_each, sr, 0.5))
        .collect();
    AudioBuffer::new(samples, sr).unwrap()
}

pub fn white_noise(n: usize, amp: f64, rng: &mut impl Rng) -> Vec<f32> {
    (0..n)
        .map(|_| (amp * rng.gen_range(-1.0..1.0)) as f32)
        .collect()
}

/// `n_phonemes` phonemes of 20-400 ms with random silence gaps, some
/// labelled "sil" and some left bare.
pub fn random_alignment(rng: &mut impl Rng, n_phonemes: usize) -> PhonemeAlignment {
    let mut t = rng.gen_range(0.0..0.5);
    let mut segs = Vec::new();
    for i in 0..n_phonemes {
        if i > 0 && rng.gen_bool(0.15) {
            let gap = rng.gen_range(0.02..0.4);
            if rng.gen_bool(0.5) {
                segs.push(PhonemeSegment::new(t, t + gap, "sil").unwrap());
            }
            t += gap;
        }
        let d = rng.gen_range(0.020..0.400);
        segs.push(PhonemeSegment::new(t, t + d, format!("P{}", i % 40)).unwrap());
        t += d;
    }
    PhonemeAlignment::new(segs, default_silence_labels()).unwrap()
}

/// Consecutive (label, duration) segments from t = 0.
pub fn alignment_from(spec: &[(&str, f64)]) -> PhonemeAlignment {
    let mut t = 0.0;
    let segs = spec
        .iter()
        .map(|&(label, d)| {
            let s = PhonemeSegment::new(t, t + d, label).unwrap();
            t += d;
            s
        })
        .collect();
    PhonemeAlignment::new(segs, default_silence_labels()).unwrap()
}

/// `n` equal phonemes filling `seconds`, no silence.
pub fn uniform_alignment(n: usize, seconds: f64) -> PhonemeAlignment {
    let d = seconds / n as f64;
    let labels: Vec<String> = (0..n).map(|i| format!("P{i}")).collect();
    let spec: Vec<(&str, f64)> = labels.iter().map(|l| (l.as_str(), d)).collect();
    alignment_from(&spec)
}

pub fn alignment_tsv(a: &PhonemeAlignment) -> String {
    let mut out = String::new();
    for s in a.segments() {
        writeln!(out, "{:.6}\t{:.6}\t{}", s.start_s, s.end_s, s.label).unwrap();
    }
    out
}

/// Audio for an alignment: each phoneme a tone cycling through
/// [`TONE_FREQS`], silence as zeros. Segment edges are rounded to samples.
pub fn synthesize(a: &PhonemeAlignment, sr: u32) -> AudioBuffer {
    let end = a.segments().last().map_or(0.0, |s| s.end_s);
    let mut samples = vec![0.0f32; (end * sr as f64).round() as usize];
    for (i, seg) in a.phonemes().enumerate() {
        let start = (seg.start_s * sr as f64).round() as usize;
        let stop = ((seg.end_s * sr as f64).round() as usize).min(samples.len());
        let f = TONE_FREQS[i % TONE_FREQS.len()];
        for (k, s) in samples[start..stop].iter_mut().enumerate() {
            *s = (0.5 * (2.0 * PI * f * k as f64 / sr as f64).sin()) as f32;
        }
    }
    AudioBuffer::new(samples, sr).unwrap()
}

/// Writes `<stem>.wav` and `<stem>.tsv` into `dir`.
pub fn write_utterance(dir: &Path, stem: &str, a: &PhonemeAlignment) -> (PathBuf, PathBuf) {
    let wav = dir.join(format!("{stem}.wav"));
    let tsv = dir.join(format!("{stem}.tsv"));
    write_wav(&synthesize(a, SR), &wav).unwrap();
    std::fs::write(&tsv, alignment_tsv(a)).unwrap();
    (wav, tsv)
}

/// A sentence of `n` phonemes at nominal `rate`, each duration jittered
/// uniformly by up to `jitter` (relative).
pub fn jittered_sentence(rng: &mut impl Rng, n: usize, rate: f64, jitter: f64) -> PhonemeAlignment {
    let labels: Vec<String> = (0..n).map(|i| format!("P{i}")).collect();
    let spec: Vec<(&str, f64)> = labels
        .iter()
        .map(|l| (l.as_str(), (1.0 + rng.gen_range(-jitter..=jitter)) / rate))
        .collect();
    alignment_from(&spec)
}

/// Index of the largest-magnitude bin of a zero-padded FFT of `x`.
pub fn dominant_bin(x: &[f32], n_fft: usize) -> usize {
    use rustfft::{num_complex::Complex, FftPlanner};
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .take(n_fft)
        .map(|&v| Complex::new(v as f64, 0.0))
        .collect();
    buf.resize(n_fft, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    (1..n_fft / 2)
        .max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm()))
        .unwrap()
}
