//! Evaluation report types and the duration metrics they carry.

use serde::{Deserialize, Serialize};
use tempomatch::{BoundaryMetrics, RateErrorReport};

/// Current version of every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Relative duration difference treated as imperceptible.
pub const DEFAULT_JND: f64 = 0.05;

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("target duration must be positive, got {0}")]
pub struct ZeroTargetDuration(pub f64);

/// `(converted - target) / target`, signed.
pub fn duration_difference(converted_s: f64, target_s: f64) -> Result<f64, ZeroTargetDuration> {
    if !(target_s > 0.0 && target_s.is_finite()) {
        return Err(ZeroTargetDuration(target_s));
    }
    Ok((converted_s - target_s) / target_s)
}

pub fn within_jnd(norm_duration_diff: f64, jnd_threshold: f64) -> bool {
    norm_duration_diff.abs() <= jnd_threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateErrors {
    pub e_cp: f64,
    pub rel_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pearson_r: Option<f64>,
}

impl From<RateErrorReport> for RateErrors {
    fn from(r: RateErrorReport) -> Self {
        Self {
            e_cp: r.e_cp,
            rel_error: r.rel_error,
            pearson_r: r.pearson_r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub r_value: f64,
    pub tolerance_s: f64,
}

impl From<BoundaryMetrics> for BoundaryScores {
    fn from(m: BoundaryMetrics) -> Self {
        Self {
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            r_value: m.r_value,
            tolerance_s: m.tolerance_s,
        }
    }
}

/// Outcome of one conversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub source_rate: f64,
    pub target_rate: f64,
    pub alpha: f64,
    pub source_duration_s: f64,
    pub output_duration_s: f64,
    /// Duration of the parallel target sentence, when one is known.
    #[serde(default)]
    pub target_duration_s: Option<f64>,
    #[serde(default)]
    pub norm_duration_diff: Option<f64>,
    #[serde(default)]
    pub within_jnd: Option<bool>,
    pub jnd_threshold: f64,
    #[serde(default)]
    pub rate_errors: Option<RateErrors>,
    #[serde(default)]
    pub boundary_metrics: Option<BoundaryScores>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EvalReport {
    /// Fills the duration comparison against a parallel target.
    pub fn set_target_duration(&mut self, target_s: f64) -> Result<(), ZeroTargetDuration> {
        let diff = duration_difference(self.output_duration_s, target_s)?;
        self.target_duration_s = Some(target_s);
        self.norm_duration_diff = Some(diff);
        self.within_jnd = Some(within_jnd(diff, self.jnd_threshold));
        Ok(())
    }
}

/// Wraps a document with the top-level `"schema"` field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema: u32,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Versioned<T> {
    pub fn new(body: T) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            body,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duration_difference_examples() {
        assert_eq!(duration_difference(3.2, 3.2).unwrap(), 0.0);
        let edge = duration_difference(3.36, 3.2).unwrap();
        assert!((edge - 0.05).abs() < 1e-12);
        let slow = duration_difference(2.88, 3.2).unwrap();
        assert!((slow + 0.10).abs() < 1e-12);
        assert!(!within_jnd(slow, DEFAULT_JND));
        assert!(within_jnd(0.0, DEFAULT_JND));
        assert_eq!(duration_difference(1.0, 0.0), Err(ZeroTargetDuration(0.0)));
    }

    #[test]
    fn within_jnd_is_the_plain_predicate() {
        assert!(within_jnd(0.05, 0.05));
        assert!(within_jnd(-0.05, 0.05));
        assert!(!within_jnd(0.050001, 0.05));
    }

    #[test]
    fn versioned_adds_schema_field() {
        let v = Versioned::new(serde_json::json!({"a": 1}));
        let text = serde_json::to_string(&v).unwrap();
        assert!(text.contains("\"schema\":1"), "{text}");
    }
}
