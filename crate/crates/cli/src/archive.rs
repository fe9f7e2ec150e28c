//! Newline-delimited archive files. One JSON record per archived candidate:
//! run id, seed, iteration tag, descriptor string, quality window, full
//! parameter vector (continuous block, then glass indices), objective value,
//! merit breakdown, and a timestamp. Files are append-only while a run is in
//! flight and reload into exactly the archives the run produced; only the
//! timestamps differ between two runs of the same seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lensopt::descriptor::Descriptor;
use lensopt::glass::Catalog;
use lensopt::hvea::{archive_insert, NicheArchive};
use lensopt::ldgea::RunResult;
use lensopt::merit::{objective, MeritBreakdown, MeritConfig};
use lensopt::optics::{ImageDistance, LensDesign};
use lensopt::preset::LensPreset;

use crate::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub run_id: String,
    pub seed: u64,
    /// Outer iteration count at write time for pooled archives; restart
    /// index for baseline points; rank for refined candidates.
    pub iteration: usize,
    pub descriptor: String,
    /// Quality window of the niche the record belongs to.
    pub window: f64,
    /// Continuous parameters in template layout order; a refined record
    /// carries one extra trailing value, its pinned image distance.
    pub params: Vec<f64>,
    pub materials: Vec<usize>,
    #[serde(with = "extended_f64")]
    pub value: f64,
    /// Absent when the value is not finite (nothing to break down).
    pub breakdown: Option<MeritBreakdown>,
    /// Seconds since the Unix epoch; excluded from reproducibility
    /// comparisons.
    pub ts: f64,
}

/// JSON has no literal for infinities, so the objective value serializes as
/// a number when finite and as the strings `"inf"` / `"-inf"` otherwise.
pub mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            Err(serde::ser::Error::custom("archive values must not be NaN"))
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    pub(super) enum Raw {
        Num(f64),
        Tag(String),
    }

    pub(super) fn from_raw<E: serde::de::Error>(raw: Raw) -> Result<f64, E> {
        match raw {
            Raw::Num(v) => Ok(v),
            Raw::Tag(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(E::custom(format!("bad value tag '{other}'"))),
            },
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_raw(Raw::deserialize(d)?)
    }
}

/// [`extended_f64`], element-wise over a vector (slot values may be `+inf`
/// when a descriptor's subspace search found nothing finite).
pub mod extended_f64_vec {
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            if x.is_finite() {
                seq.serialize_element(x)?;
            } else if x.is_nan() {
                return Err(serde::ser::Error::custom("slot values must not be NaN"));
            } else if *x > 0.0 {
                seq.serialize_element("inf")?;
            } else {
                seq.serialize_element("-inf")?;
            }
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raws = Vec::<super::extended_f64::Raw>::deserialize(d)?;
        raws.into_iter().map(super::extended_f64::from_raw).collect()
    }
}

pub fn now_ts() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Owns a newline-delimited JSON file while a run appends to it.
pub struct JsonlWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> CliResult<JsonlWriter> {
        let file = File::create(path)
            .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        Ok(JsonlWriter { out: BufWriter::new(file), path: path.to_path_buf() })
    }

    pub fn append<T: serde::Serialize>(&mut self, record: &T) -> CliResult<()> {
        let line = serde_json::to_string(record)
            .map_err(|e| CliError::runtime(format!("serializing record: {e}")))?;
        self.out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.write_all(b"\n"))
            .map_err(|e| CliError::runtime(format!("{}: {e}", self.path.display())))
    }

    pub fn flush(&mut self) -> CliResult<()> {
        self.out
            .flush()
            .map_err(|e| CliError::runtime(format!("{}: {e}", self.path.display())))
    }
}

pub fn write_records(path: &Path, records: &[ArchiveRecord]) -> CliResult<()> {
    let mut w = JsonlWriter::create(path)?;
    for r in records {
        w.append(r)?;
    }
    w.flush()
}

pub fn read_archive(path: &Path) -> CliResult<Vec<ArchiveRecord>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ArchiveRecord = serde_json::from_str(line)
            .map_err(|e| CliError::config(format!("{} line {}: {e}", path.display(), i + 1)))?;
        records.push(rec);
    }
    Ok(records)
}

/// The file's lines with every timestamp zeroed — the bytes two runs of the
/// same seed must agree on.
pub fn canonical_text(records: &[ArchiveRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let mut r = r.clone();
        r.ts = 0.0;
        out.push_str(&serde_json::to_string(&r).expect("re-serializing a parsed record"));
        out.push('\n');
    }
    out
}

/// Flatten a run's global pool into records, archive order (descriptors
/// sorted by serialization, entries ascending by value). The breakdown is
/// re-derived from the stored design; every pooled candidate evaluated
/// finitely during the run, so this cannot fail for honest archives.
pub fn records_from_pool(
    result: &RunResult,
    catalog: &Catalog,
    merit: &MeritConfig,
    run_id: &str,
    seed: u64,
) -> Vec<ArchiveRecord> {
    let iteration = result.generations.len();
    let mut records = Vec::with_capacity(result.candidates);
    for niche in &result.archives {
        for entry in niche.entries() {
            let breakdown = objective(&entry.design, catalog, merit).ok();
            records.push(ArchiveRecord {
                run_id: run_id.to_string(),
                seed,
                iteration,
                descriptor: niche.descriptor.serialize(),
                window: niche.window,
                params: entry.design.continuous_params(),
                materials: entry.design.materials(),
                value: entry.value,
                breakdown,
                ts: now_ts(),
            });
        }
    }
    records
}

/// Rebuild the design a record describes. Pooled records carry exactly the
/// template's parameters; refined records carry one extra trailing value,
/// the pinned image distance.
pub fn record_design(preset: &LensPreset, record: &ArchiveRecord) -> CliResult<LensDesign> {
    let dim = preset.continuous_dim();
    if record.params.len() == dim {
        preset.build_design(&record.params, &record.materials).map_err(CliError::from)
    } else if record.params.len() == dim + 1 {
        let mut design = preset
            .build_design(&record.params[..dim], &record.materials)
            .map_err(CliError::from)?;
        design.image_distance = ImageDistance::Fixed(record.params[dim]);
        Ok(design)
    } else {
        Err(CliError::config(format!(
            "record has {} parameters, preset '{}' takes {} (or {} when refined)",
            record.params.len(),
            preset.name,
            dim,
            dim + 1
        )))
    }
}

/// Reassemble niche archives from a file's records: group by descriptor,
/// re-insert in file order. Writing an archive and loading it back yields
/// archives equal to the originals.
pub fn records_to_niches(
    records: &[ArchiveRecord],
    preset: &LensPreset,
) -> CliResult<Vec<NicheArchive>> {
    let mut by_key: std::collections::BTreeMap<String, NicheArchive> =
        std::collections::BTreeMap::new();
    for record in records {
        let descriptor: Descriptor = record
            .descriptor
            .parse()
            .map_err(|e: lensopt::Error| CliError::config(e.to_string()))?;
        let design = record_design(preset, record)?;
        let niche = by_key
            .entry(record.descriptor.clone())
            .or_insert_with(|| NicheArchive::new(descriptor, record.window));
        archive_insert(niche, design, record.value).map_err(CliError::from)?;
    }
    Ok(by_key.into_values().collect())
}
