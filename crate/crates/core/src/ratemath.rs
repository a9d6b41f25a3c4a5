//! Phoneme-rate curves and the scalar metrics built on them.
//!
//! The instantaneous phoneme rate is a step function: inside phoneme `i` it
//! equals the reciprocal of that phoneme's duration, and it is zero during
//! silence. Its integral over the utterance is therefore exactly the phoneme
//! count. The local phoneme rate is the instantaneous rate smoothed with a
//! normalized Hann kernel.

use thiserror::Error;

use crate::alignment::{phoneme_count, PhonemeAlignment};
use crate::audio::hann_window;

/// Grid step used when none is given: 10 ms.
pub const DEFAULT_GRID_STEP_S: f64 = 0.010;
/// Smoothing window of the local phoneme rate: 625 ms.
pub const DEFAULT_WINDOW_S: f64 = 0.625;
/// Rates below this are treated as degenerate.
pub const MIN_RATE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RateError {
    #[error("alignment contains no phonemes")]
    EmptyAlignment,
    #[error("curve is empty")]
    EmptyCurve,
    #[error("invalid grid step {0}")]
    InvalidGridStep(f64),
    #[error("invalid window length {0}")]
    InvalidWindow(f64),
    #[error("rate must be positive and finite, got {0}")]
    NonPositiveRate(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two samples")]
    TooShort,
    #[error("zero variance")]
    ZeroVariance,
    #[error("true phoneme count must be at least 1")]
    ZeroCount,
    #[error("invalid curve value {0}")]
    InvalidValue(f64),
}

/// A rate signal in phonemes per second on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCurve {
    values: Vec<f64>,
    grid_step_s: f64,
    origin_s: f64,
}

impl RateCurve {
    pub fn new(values: Vec<f64>, grid_step_s: f64, origin_s: f64) -> Result<Self, RateError> {
        if !(grid_step_s > 0.0 && grid_step_s.is_finite()) {
            return Err(RateError::InvalidGridStep(grid_step_s));
        }
        if let Some(&bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(RateError::InvalidValue(bad));
        }
        Ok(Self {
            values,
            grid_step_s,
            origin_s,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid_step_s(&self) -> f64 {
        self.grid_step_s
    }

    pub fn origin_s(&self) -> f64 {
        self.origin_s
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.origin_s + index as f64 * self.grid_step_s
    }
}

/// Index of the first grid point at or after `t`. Times within 1e-9 steps of
/// a grid point snap to it so that decimal boundaries such as 0.1 s on a
/// 10 ms grid are not lost to rounding.
fn grid_index_at_or_after(t: f64, step: f64) -> usize {
    let x = t / step;
    let nearest = x.round();
    let idx = if (x - nearest).abs() < 1e-9 {
        nearest
    } else {
        x.ceil()
    };
    idx.max(0.0) as usize
}

/// Samples the instantaneous phoneme rate on a grid starting at t = 0.
///
/// Phoneme `i` owns the half-open interval `[start, end)`, so every grid
/// point belongs to at most one phoneme. Silence and gaps are 0.
pub fn instantaneous_rate(
    alignment: &PhonemeAlignment,
    grid_step_s: f64,
) -> Result<RateCurve, RateError> {
    if !(grid_step_s > 0.0 && grid_step_s.is_finite()) {
        return Err(RateError::InvalidGridStep(grid_step_s));
    }
    if phoneme_count(alignment) == 0 {
        return Err(RateError::EmptyAlignment);
    }
    let last_end = alignment.phonemes().map(|s| s.end_s).fold(0.0, f64::max);
    let mut values = vec![0.0; grid_index_at_or_after(last_end, grid_step_s)];
    for seg in alignment.phonemes() {
        let height = 1.0 / seg.duration_s();
        let lo = grid_index_at_or_after(seg.start_s, grid_step_s);
        let hi = grid_index_at_or_after(seg.end_s, grid_step_s).min(values.len());
        for v in &mut values[lo.min(hi)..hi] {
            *v = height;
        }
    }
    RateCurve::new(values, grid_step_s, 0.0)
}

/// Exact integral of the instantaneous rate: the sum of width times height of
/// every phoneme step.
pub fn analytic_integral(alignment: &PhonemeAlignment) -> f64 {
    alignment
        .phonemes()
        .map(|s| {
            let width = s.duration_s();
            width * (1.0 / width)
        })
        .sum()
}

/// Riemann sum `step * sum(values)`.
pub fn grid_integral(curve: &RateCurve) -> f64 {
    curve.grid_step_s * curve.values.iter().sum::<f64>()
}

/// Number of taps for a smoothing window: `round(window / step)`, bumped to
/// the next odd number so the kernel has a centre tap.
pub fn kernel_taps(window_s: f64, grid_step_s: f64) -> usize {
    let k = ((window_s / grid_step_s).round() as usize).max(1);
    if k % 2 == 0 {
        k + 1
    } else {
        k
    }
}

/// Local phoneme rate: the curve smoothed with a normalized symmetric Hann
/// kernel of `window_s`, treating everything outside the curve as zero.
/// The output lives on the same grid as the input.
pub fn local_rate(curve: &RateCurve, window_s: f64) -> Result<RateCurve, RateError> {
    if curve.is_empty() {
        return Err(RateError::EmptyCurve);
    }
    if !(window_s > 0.0 && window_s.is_finite()) {
        return Err(RateError::InvalidWindow(window_s));
    }
    let taps = kernel_taps(window_s, curve.grid_step_s);
    if taps == 1 {
        return Ok(curve.clone());
    }
    let window = hann_window(taps).expect("taps >= 1");
    let w = window.coefficients();
    let norm = window.sum();
    let half = (taps - 1) / 2;
    let input = &curve.values;
    let n = input.len();
    let values = (0..n)
        .map(|i| {
            // m ranges over taps whose input index i + m - half is in bounds.
            let m_lo = half.saturating_sub(i);
            let m_hi = (n + half - i).min(taps);
            let acc: f64 = (m_lo..m_hi).map(|m| input[i + m - half] * w[m]).sum();
            (acc / norm).max(0.0)
        })
        .collect();
    RateCurve::new(values, curve.grid_step_s, curve.origin_s)
}

/// Tempo factor that maps the source rate onto the target rate.
///
/// Values above 1 speed the source up (shorter output).
pub fn interpolation_factor(source_rate: f64, target_rate: f64) -> Result<f64, RateError> {
    for rate in [source_rate, target_rate] {
        if !(rate.is_finite() && rate >= MIN_RATE) {
            return Err(RateError::NonPositiveRate(rate));
        }
    }
    Ok(target_rate / source_rate)
}

/// Phoneme-count error of a rate predictor, optionally with the correlation
/// of its curve against the reference curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateErrorReport {
    pub e_cp: f64,
    pub rel_error: f64,
    pub pearson_r: Option<f64>,
}

pub fn rate_errors(predicted_count: f64, true_count: usize) -> Result<RateErrorReport, RateError> {
    if true_count == 0 {
        return Err(RateError::ZeroCount);
    }
    let e_cp = (predicted_count - true_count as f64).abs();
    Ok(RateErrorReport {
        e_cp,
        rel_error: e_cp / true_count as f64,
        pearson_r: None,
    })
}

/// Sample Pearson correlation of two equally long sequences.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, RateError> {
    if a.len() != b.len() {
        return Err(RateError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(RateError::TooShort);
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut cov, mut var_a, mut var_b) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(RateError::ZeroVariance);
    }
    Ok((cov / (var_a.sqrt() * var_b.sqrt())).clamp(-1.0, 1.0))
}

pub fn pearson_r(a: &RateCurve, b: &RateCurve) -> Result<f64, RateError> {
    pearson(&a.values, &b.values)
}

/// Something that predicts a local phoneme-rate curve for an utterance.
///
/// The reference curves produced by [`local_rate`] serve as its training
/// targets; [`evaluate_predictor`] scores its output.
pub trait LocalRatePredictor {
    type Error;

    fn predict(&self, audio: &crate::audio::AudioBuffer) -> Result<RateCurve, Self::Error>;
}

/// Scores a predicted local-rate curve against the reference curve: the
/// phoneme count is recovered by integration and compared with the true
/// count, and the curves are correlated sample by sample.
pub fn evaluate_predictor(
    predicted: &RateCurve,
    reference: &RateCurve,
    true_count: usize,
) -> Result<RateErrorReport, RateError> {
    let mut report = rate_errors(grid_integral(predicted), true_count)?;
    report.pearson_r = Some(pearson_r(predicted, reference)?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{default_silence_labels, PhonemeSegment};

    fn alignment(spec: &[(&str, f64)]) -> PhonemeAlignment {
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

    #[test]
    fn single_phoneme_steps() {
        let c = instantaneous_rate(&alignment(&[("AH", 0.1)]), 0.01).unwrap();
        assert_eq!(c.len(), 10);
        for v in c.values() {
            assert!((v - 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_phoneme_steps_and_gap() {
        let c = instantaneous_rate(&alignment(&[("AH", 0.1), ("T", 0.2)]), 0.01).unwrap();
        assert_eq!(c.len(), 30);
        assert!(c.values()[..10].iter().all(|v| (v - 10.0).abs() < 1e-12));
        assert!(c.values()[10..].iter().all(|v| (v - 5.0).abs() < 1e-12));

        let g =
            instantaneous_rate(&alignment(&[("AH", 0.1), ("sil", 0.3), ("T", 0.1)]), 0.01).unwrap();
        assert!(g.values()[10..40].iter().all(|&v| v == 0.0));
        assert!(g.values()[40..].iter().all(|v| (v - 10.0).abs() < 1e-12));
    }

    #[test]
    fn instantaneous_rate_rejects_empty() {
        assert_eq!(
            instantaneous_rate(&alignment(&[("sil", 0.1)]), 0.01),
            Err(RateError::EmptyAlignment)
        );
        assert!(matches!(
            instantaneous_rate(&alignment(&[("AH", 0.1)]), 0.0),
            Err(RateError::InvalidGridStep(_))
        ));
    }

    #[test]
    fn analytic_integral_counts() {
        let a = alignment(&[
            ("A", 0.013),
            ("B", 0.37),
            ("sil", 0.2),
            ("C", 0.05),
            ("D", 0.11),
            ("E", 0.07),
        ]);
        assert!((analytic_integral(&a) - 5.0).abs() < 1e-12);
        assert_eq!(analytic_integral(&PhonemeAlignment::default()), 0.0);
    }

    #[test]
    fn grid_integral_rectangle() {
        let c = RateCurve::new(vec![10.0; 100], 0.01, 0.0).unwrap();
        assert!((grid_integral(&c) - 10.0).abs() < 1e-12);
        let z = RateCurve::new(vec![0.0; 50], 0.01, 0.0).unwrap();
        assert_eq!(grid_integral(&z), 0.0);
    }

    #[test]
    fn kernel_taps_forced_odd() {
        assert_eq!(kernel_taps(0.625, 0.01), 63);
        assert_eq!(kernel_taps(0.05, 0.01), 5);
        assert_eq!(kernel_taps(0.04, 0.01), 5);
        assert_eq!(kernel_taps(0.01, 0.01), 1);
        assert_eq!(kernel_taps(0.001, 0.01), 1);
    }

    #[test]
    fn local_rate_single_tap_is_identity() {
        let c = RateCurve::new(vec![1.0, 3.0, 0.0, 7.5], 0.01, 0.2).unwrap();
        assert_eq!(local_rate(&c, 0.01).unwrap(), c);
    }

    #[test]
    fn local_rate_constant_interior_and_edges() {
        let c = RateCurve::new(vec![10.0; 200], 0.01, 0.0).unwrap();
        let r = local_rate(&c, 0.625).unwrap();
        for i in 31..169 {
            assert!((r.values()[i] - 10.0).abs() < 1e-9);
        }
        assert!(r.values()[0] < 10.0);
        assert!(r.values()[199] < 10.0);
    }

    #[test]
    fn local_rate_rejects_empty() {
        let c = RateCurve::new(vec![], 0.01, 0.0).unwrap();
        assert_eq!(local_rate(&c, 0.625), Err(RateError::EmptyCurve));
    }

    #[test]
    fn interpolation_factor_examples() {
        assert_eq!(interpolation_factor(12.0, 12.0).unwrap(), 1.0);
        assert_eq!(interpolation_factor(10.0, 12.5).unwrap(), 1.25);
        assert!(interpolation_factor(9.0, 11.0).unwrap() > 1.0);
        assert!(matches!(
            interpolation_factor(0.0, 12.0),
            Err(RateError::NonPositiveRate(_))
        ));
        assert!(matches!(
            interpolation_factor(10.0, 1e-7),
            Err(RateError::NonPositiveRate(_))
        ));
        assert!(interpolation_factor(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn rate_error_examples() {
        let r = rate_errors(52.0, 50).unwrap();
        assert_eq!(r.e_cp, 2.0);
        assert!((r.rel_error - 0.04).abs() < 1e-15);
        let z = rate_errors(50.0, 50).unwrap();
        assert_eq!((z.e_cp, z.rel_error), (0.0, 0.0));
        assert_eq!(rate_errors(3.0, 0), Err(RateError::ZeroCount));
    }

    #[test]
    fn pearson_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|x| 10.0 - x).collect();
        assert!((pearson(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        // cov = 6.5, var_a = 5, var_b = 8.75
        let expected = 6.5 / (5.0f64 * 8.75).sqrt();
        let r = pearson(&a, &[1.0, 2.0, 3.0, 5.0]).unwrap();
        assert!((r - expected).abs() < 1e-12);
        assert!((r - 0.9827).abs() < 5e-5);
    }

    #[test]
    fn pearson_errors() {
        assert_eq!(
            pearson(&[1.0, 2.0], &[1.0]),
            Err(RateError::LengthMismatch(2, 1))
        );
        assert_eq!(
            pearson(&[1.0, 2.0], &[3.0, 3.0]),
            Err(RateError::ZeroVariance)
        );
        assert_eq!(pearson(&[1.0], &[1.0]), Err(RateError::TooShort));
    }

    #[test]
    fn evaluate_predictor_reports_count_and_correlation() {
        let a = alignment(&[("A", 0.1), ("B", 0.2), ("C", 0.1), ("D", 0.15)]);
        let reference = local_rate(&instantaneous_rate(&a, 0.01).unwrap(), 0.625).unwrap();
        let report = evaluate_predictor(&reference, &reference, 4).unwrap();
        assert!((report.pearson_r.unwrap() - 1.0).abs() < 1e-12);
        // Mass is partly smoothed past the curve's end.
        assert!(report.e_cp < 4.0);
    }
}
