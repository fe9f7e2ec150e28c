//! Metrics over archives and generation logs: candidate and
//! distinct-descriptor counts, best/percentile objective values, the
//! per-iteration mean/stddev series as CSV, and cross-archive comparisons.
//! Reports carry no timestamps, so identical inputs produce identical bytes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use lensopt::ldgea::GenerationRecord;

use crate::archive::{extended_f64_vec, ArchiveRecord};

/// One generation-log line: the outer loop's record with slot values made
/// JSON-safe. The distribution snapshot rides along for post-hoc analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenLine {
    pub iteration: usize,
    pub sampled: Vec<String>,
    #[serde(with = "extended_f64_vec")]
    pub values: Vec<f64>,
    pub selected: Vec<String>,
    pub slot_errors: Vec<(usize, String)>,
    pub kl_to_previous: Option<f64>,
    pub evaluations: usize,
    /// Telemetry only; differs between repeats of the same seed.
    pub wall_time_s: f64,
    pub merges: Vec<String>,
    pub distribution: lensopt::descriptor::DescriptorDistribution,
}

impl GenLine {
    pub fn from_record(g: &GenerationRecord) -> GenLine {
        GenLine {
            iteration: g.iteration,
            sampled: g.sampled.iter().map(|d| d.serialize()).collect(),
            values: g.values.clone(),
            selected: g.selected.iter().map(|d| d.serialize()).collect(),
            slot_errors: g.slot_errors.clone(),
            kl_to_previous: g.kl_to_previous,
            evaluations: g.evaluations,
            wall_time_s: g.wall_time_s,
            merges: g.merges.iter().map(|d| d.serialize()).collect(),
            distribution: g.distribution.clone(),
        }
    }
}

pub fn read_generations(path: &std::path::Path) -> crate::CliResult<Vec<GenLine>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| crate::CliError::config(format!("{}: {e}", path.display())))?;
    let mut lines = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let g: GenLine = serde_json::from_str(line).map_err(|e| {
            crate::CliError::config(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        lines.push(g);
    }
    Ok(lines)
}

/// One archive (or baseline archive) with its optional generation log.
pub struct Source {
    pub label: String,
    pub records: Vec<ArchiveRecord>,
    pub generations: Vec<GenLine>,
}

/// Headline numbers of one source. Only finite values are lenses; counts and
/// statistics say which population they cover.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SourceMetrics {
    pub label: String,
    pub records: usize,
    pub finite: usize,
    pub distinct_descriptors: usize,
    pub best: Option<f64>,
    pub worst: Option<f64>,
    /// Nearest-rank percentiles of the finite values: p10, p50, p90.
    pub percentiles: Option<[f64; 3]>,
}

pub fn analyze(label: &str, records: &[ArchiveRecord]) -> SourceMetrics {
    let mut finite: Vec<f64> = records.iter().map(|r| r.value).filter(|v| v.is_finite()).collect();
    finite.sort_by(f64::total_cmp);
    let distinct: BTreeSet<&str> = records
        .iter()
        .filter(|r| r.value.is_finite())
        .map(|r| r.descriptor.as_str())
        .collect();
    SourceMetrics {
        label: label.to_string(),
        records: records.len(),
        finite: finite.len(),
        distinct_descriptors: distinct.len(),
        best: finite.first().copied(),
        worst: finite.last().copied(),
        percentiles: if finite.is_empty() {
            None
        } else {
            Some([
                percentile(&finite, 10.0),
                percentile(&finite, 50.0),
                percentile(&finite, 90.0),
            ])
        },
    }
}

/// Nearest-rank percentile of an ascending-sorted, non-empty slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Count of `values` at least as good as (no larger than) `reference_worst`.
pub fn at_least_as_good(reference_worst: f64, values: &[f64]) -> usize {
    values.iter().filter(|v| v.is_finite() && **v <= reference_worst).count()
}

fn union_distinct(sources: &[Source]) -> usize {
    let mut set: BTreeSet<&str> = BTreeSet::new();
    for s in sources {
        set.extend(
            s.records.iter().filter(|r| r.value.is_finite()).map(|r| r.descriptor.as_str()),
        );
    }
    set.len()
}

fn stat(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "-".to_string(),
    }
}

/// Human-readable summary: per-source metrics, then comparisons against the
/// first source.
pub fn report_text(sources: &[Source]) -> String {
    let mut out = String::from("# lensopt report\n");
    let metrics: Vec<SourceMetrics> =
        sources.iter().map(|s| analyze(&s.label, &s.records)).collect();
    for m in &metrics {
        out.push_str(&format!("\n## source: {}\n", m.label));
        out.push_str(&format!("records:              {}\n", m.records));
        out.push_str(&format!("finite candidates:    {}\n", m.finite));
        out.push_str(&format!("distinct descriptors: {}\n", m.distinct_descriptors));
        out.push_str(&format!("best F:               {}\n", stat(m.best)));
        match m.percentiles {
            Some([p10, p50, p90]) => out.push_str(&format!(
                "p10 / p50 / p90 F:    {p10} / {p50} / {p90}\n"
            )),
            None => out.push_str("p10 / p50 / p90 F:    -\n"),
        }
        out.push_str(&format!("worst F:              {}\n", stat(m.worst)));
    }
    if sources.len() > 1 {
        let reference = &metrics[0];
        out.push_str(&format!("\n## comparisons (reference: {})\n", reference.label));
        if let Some(worst) = reference.worst {
            for s in &sources[1..] {
                let values: Vec<f64> = s.records.iter().map(|r| r.value).collect();
                let k = at_least_as_good(worst, &values);
                out.push_str(&format!(
                    "{}: candidates at least as good as the reference's worst: {k} of {}\n",
                    s.label,
                    values.len()
                ));
            }
        } else {
            out.push_str("reference has no finite candidates; no quality comparison\n");
        }
        for m in &metrics[1..] {
            let ratio = if metrics[0].distinct_descriptors > 0 {
                m.distinct_descriptors as f64 / metrics[0].distinct_descriptors as f64
            } else {
                f64::NAN
            };
            out.push_str(&format!(
                "{}: distinct descriptors vs reference: {} / {} ({})\n",
                m.label,
                m.distinct_descriptors,
                metrics[0].distinct_descriptors,
                if ratio.is_nan() { "-".to_string() } else { format!("{ratio:.3}") }
            ));
        }
        out.push_str(&format!("union distinct descriptors: {}\n", union_distinct(sources)));
    }
    out
}

/// Per-iteration series over the generation logs: mean and standard
/// deviation (population) of the finite slot values, the iteration best, and
/// the evaluations spent.
pub fn series_csv(sources: &[Source]) -> String {
    let mut out = String::from("label,iteration,finite,mean,stddev,best,evaluations\n");
    for s in sources {
        for g in &s.generations {
            let finite: Vec<f64> = g.values.iter().copied().filter(|v| v.is_finite()).collect();
            let n = finite.len();
            let (mean, stddev, best) = if n == 0 {
                ("-".to_string(), "-".to_string(), "-".to_string())
            } else {
                let mean = finite.iter().sum::<f64>() / n as f64;
                let var = finite.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                let best = finite.iter().copied().fold(f64::INFINITY, f64::min);
                (format!("{mean}"), format!("{}", var.sqrt()), format!("{best}"))
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.label, g.iteration, n, mean, stddev, best, g.evaluations
            ));
        }
    }
    out
}
