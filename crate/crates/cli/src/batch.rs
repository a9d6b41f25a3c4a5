//! Batch evaluation over a JSON-lines manifest of conversion jobs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{convert, ConversionJob, ConvertConfig, PipelineError};
use crate::report::{EvalReport, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("reading manifest {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("writing report: {0}")]
    Write(#[source] std::io::Error),
    #[error("serializing report: {0}")]
    Json(#[from] serde_json::Error),
}

/// Parses one job per non-blank line; relative paths are resolved against
/// `base_dir`.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Vec<ConversionJob>, BatchError> {
    let mut jobs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let manifest_err = |message: String| BatchError::Manifest {
            line: i + 1,
            message,
        };
        let mut job: ConversionJob =
            serde_json::from_str(line).map_err(|e| manifest_err(e.to_string()))?;
        job.validate().map_err(|e| manifest_err(e.to_string()))?;
        job.resolve_paths(base_dir);
        jobs.push(job);
    }
    Ok(jobs)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ConversionJob>, BatchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BatchError::Io(path.to_path_buf(), e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobOutcome {
    pub index: usize,
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub speaker: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub jobs: usize,
    pub succeeded: usize,
    pub failed: usize,
    /// Mean of `|norm_duration_diff|` over jobs with a parallel target.
    pub mean_abs_norm_duration_diff: Option<f64>,
    pub fraction_within_jnd: Option<f64>,
    pub mean_e_cp: Option<f64>,
    pub mean_rel_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tercile {
    Slow,
    Normal,
    Fast,
}

/// Mean source rate per speaker and the speaker's tercile among all
/// speakers, ranked by that mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerSummary {
    pub speaker: String,
    pub utterances: usize,
    pub mean_rate: f64,
    pub tercile: Tercile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub schema: u32,
    pub jobs: Vec<JobOutcome>,
    pub aggregate: Aggregate,
    pub speakers: Vec<SpeakerSummary>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn aggregate(outcomes: &[JobOutcome]) -> Aggregate {
    let reports: Vec<&EvalReport> = outcomes.iter().filter_map(|o| o.report.as_ref()).collect();
    let jnd: Vec<bool> = reports.iter().filter_map(|r| r.within_jnd).collect();
    Aggregate {
        jobs: outcomes.len(),
        succeeded: reports.len(),
        failed: outcomes.len() - reports.len(),
        mean_abs_norm_duration_diff: mean(
            reports
                .iter()
                .filter_map(|r| r.norm_duration_diff)
                .map(f64::abs),
        ),
        fraction_within_jnd: mean(jnd.iter().map(|&w| if w { 1.0 } else { 0.0 })),
        mean_e_cp: mean(reports.iter().filter_map(|r| r.rate_errors).map(|e| e.e_cp)),
        mean_rel_error: mean(
            reports
                .iter()
                .filter_map(|r| r.rate_errors)
                .map(|e| e.rel_error),
        ),
    }
}

pub fn speaker_summaries(outcomes: &[JobOutcome]) -> Vec<SpeakerSummary> {
    let mut by_speaker: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for o in outcomes {
        if let (Some(speaker), Some(report)) = (&o.speaker, &o.report) {
            by_speaker
                .entry(speaker)
                .or_default()
                .push(report.source_rate);
        }
    }
    let mut summaries: Vec<SpeakerSummary> = by_speaker
        .into_iter()
        .map(|(speaker, rates)| SpeakerSummary {
            speaker: speaker.to_string(),
            utterances: rates.len(),
            mean_rate: rates.iter().sum::<f64>() / rates.len() as f64,
            tercile: Tercile::Normal,
        })
        .collect();
    // Stable sort: equal rates keep speaker-name order.
    summaries.sort_by(|a, b| a.mean_rate.total_cmp(&b.mean_rate));
    let n = summaries.len();
    for (rank, s) in summaries.iter_mut().enumerate() {
        s.tercile = match 3 * rank / n {
            0 => Tercile::Slow,
            1 => Tercile::Normal,
            _ => Tercile::Fast,
        };
    }
    summaries
}

/// Runs every job in parallel; a failing job is recorded, not fatal.
pub fn run_batch(jobs: &[ConversionJob], cfg: &ConvertConfig) -> BatchReport {
    let outcomes: Vec<JobOutcome> = jobs
        .par_iter()
        .enumerate()
        .map(|(index, job)| {
            let result: Result<EvalReport, PipelineError> = convert(job, cfg);
            let (report, error) = match result {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            JobOutcome {
                index,
                id: job.id.clone(),
                speaker: job.speaker.clone(),
                report,
                error,
            }
        })
        .collect();
    BatchReport {
        schema: SCHEMA_VERSION,
        aggregate: aggregate(&outcomes),
        speakers: speaker_summaries(&outcomes),
        jobs: outcomes,
    }
}

pub fn write_report(report: &BatchReport, path: &Path) -> Result<(), BatchError> {
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text + "\n").map_err(BatchError::Write)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(speaker: &str, rate: f64) -> JobOutcome {
        JobOutcome {
            index: 0,
            id: None,
            speaker: Some(speaker.into()),
            report: Some(EvalReport {
                source_rate: rate,
                target_rate: rate,
                alpha: 1.0,
                source_duration_s: 1.0,
                output_duration_s: 1.0,
                target_duration_s: None,
                norm_duration_diff: None,
                within_jnd: None,
                jnd_threshold: 0.05,
                rate_errors: None,
                boundary_metrics: None,
                warnings: vec![],
            }),
            error: None,
        }
    }

    #[test]
    fn terciles_split_ranked_speakers() {
        let outcomes: Vec<_> = [
            ("a", 10.0),
            ("b", 12.0),
            ("c", 14.0),
            ("d", 11.0),
            ("e", 13.0),
            ("f", 9.0),
        ]
        .iter()
        .map(|&(s, r)| outcome(s, r))
        .collect();
        let s = speaker_summaries(&outcomes);
        let names: Vec<_> = s.iter().map(|x| (x.speaker.as_str(), x.tercile)).collect();
        assert_eq!(
            names,
            vec![
                ("f", Tercile::Slow),
                ("a", Tercile::Slow),
                ("d", Tercile::Normal),
                ("b", Tercile::Normal),
                ("e", Tercile::Fast),
                ("c", Tercile::Fast),
            ]
        );
    }

    #[test]
    fn manifest_errors_carry_line_numbers() {
        let text = "\n{\"source_wav\": \"a.wav\", \"output_wav\": \"o.wav\", \"target_rate\": 10, \"mode\": \"unsupervised\"}\nnot json\n";
        match parse_manifest(text, Path::new("/data")) {
            Err(BatchError::Manifest { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let jobs = parse_manifest(&text[..text.find("not").unwrap()], Path::new("/data")).unwrap();
        assert_eq!(jobs[0].source_wav, Path::new("/data/a.wav"));
    }
}
