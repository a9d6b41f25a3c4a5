#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempomatch::alignment::{default_silence_labels, PhonemeAlignment, PhonemeSegment};
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

/// Frequencies spread over the speech band, far enough apart that adjacent
/// tones land in different Mel bands.
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

/// Random alignment: `n_phonemes` phonemes of 20-400 ms with random silence
/// gaps (explicit "sil" segments or bare gaps) between some of them.
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

/// Alignment from consecutive (label, duration) pairs starting at 0.
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

/// Index of the largest magnitude bin of a zero-padded FFT of `x`.
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
