//! On-disk dataset snapshot.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "GCSNAP\0\0"
//! schema    u32
//! meta_len  u64
//! meta      meta_len bytes of JSON (calendar, regions, series index)
//! columns   one u64 column of n_days values per indexed series, in order
//! ```
//!
//! Encoding is deterministic, so the SHA-256 of the bytes doubles as the
//! dataset version.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{Dataset, IngestError, IngestReport};
use crate::model::{Calendar, DailySeries, Region, RegionId, VariableKind};

pub const SNAPSHOT_FILE: &str = "snapshot.gcs";
pub const REPORT_FILE: &str = "ingest_report.json";
pub const SCHEMA_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"GCSNAP\0\0";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("no snapshot at {0} (run `geocircle ingest` first)")]
    Missing(PathBuf),
    #[error("snapshot schema {found} is newer than supported {SCHEMA_VERSION}")]
    NewerSchema { found: u32 },
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Dataset(#[from] IngestError),
}

#[derive(Serialize, Deserialize)]
struct Meta {
    calendar: Calendar,
    regions: Vec<Region>,
    series: Vec<SeriesIndex>,
}

#[derive(Serialize, Deserialize)]
struct SeriesIndex {
    region: RegionId,
    variable: VariableKind,
    synthesized: bool,
}

pub fn encode(dataset: &Dataset) -> Vec<u8> {
    let series: Vec<&DailySeries> = dataset.all_series().collect();
    let meta = Meta {
        calendar: dataset.calendar(),
        regions: dataset.regions().cloned().collect(),
        series: series
            .iter()
            .map(|s| SeriesIndex {
                region: s.region.clone(),
                variable: s.variable,
                synthesized: dataset.is_synthesized(&s.region, s.variable),
            })
            .collect(),
    };
    let meta = serde_json::to_vec(&meta).expect("snapshot metadata serializes");
    let n_days = dataset.calendar().n_days as usize;
    let mut out = Vec::with_capacity(20 + meta.len() + series.len() * n_days * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SCHEMA_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    for s in series {
        for v in &s.cumulative {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Dataset, SnapshotError> {
    let corrupt = |m: &str| SnapshotError::Corrupt(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let schema = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if schema > SCHEMA_VERSION {
        return Err(SnapshotError::NewerSchema { found: schema });
    }
    let meta_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let meta_end = 20usize.checked_add(meta_len).filter(|&e| e <= bytes.len()).ok_or_else(|| corrupt("truncated metadata"))?;
    let meta: Meta = serde_json::from_slice(&bytes[20..meta_end]).map_err(|e| SnapshotError::Corrupt(e.to_string()))?;
    let n_days = meta.calendar.n_days as usize;
    let columns = &bytes[meta_end..];
    if columns.len() != meta.series.len() * n_days * 8 {
        return Err(corrupt("column block has the wrong size"));
    }
    let mut synthesized = BTreeSet::new();
    let series: Vec<DailySeries> = meta
        .series
        .into_iter()
        .enumerate()
        .map(|(i, idx)| {
            let col = &columns[i * n_days * 8..(i + 1) * n_days * 8];
            let cumulative = col.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            if idx.synthesized {
                synthesized.insert((idx.region.clone(), idx.variable));
            }
            DailySeries {
                region: idx.region,
                variable: idx.variable,
                cumulative,
            }
        })
        .collect();
    Ok(Dataset::from_parts(meta.calendar, meta.regions, series, synthesized)?)
}

/// Hex SHA-256 of snapshot bytes.
pub fn content_version(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_dir(dir: &Path, dataset: &Dataset, report: &IngestReport) -> Result<(), SnapshotError> {
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
    fs::write(&tmp, encode(dataset))?;
    fs::rename(&tmp, dir.join(SNAPSHOT_FILE))?;
    let mut report_json = serde_json::to_vec_pretty(report).expect("report serializes");
    report_json.push(b'\n');
    fs::write(dir.join(REPORT_FILE), report_json)?;
    Ok(())
}

/// Raw snapshot bytes from a snapshot directory.
pub fn read_dir(dir: &Path) -> Result<Vec<u8>, SnapshotError> {
    let path = dir.join(SNAPSHOT_FILE);
    if !path.is_file() {
        return Err(SnapshotError::Missing(dir.to_path_buf()));
    }
    Ok(fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LatLon;
    use chrono::NaiveDate;

    fn dataset() -> Dataset {
        let id = RegionId::country("a").unwrap();
        let mut region = Region::new(id.clone(), "A", Some(LatLon { lat: 1.0, lon: 2.0 }));
        region.population = Some(7);
        Dataset::from_parts(
            Calendar::new(NaiveDate::from_ymd_opt(2020, 1, 22).unwrap(), 3),
            [region],
            [DailySeries {
                region: id.clone(),
                variable: VariableKind::Confirmed,
                cumulative: vec![1, 2, u64::MAX],
            }],
            [(id, VariableKind::Confirmed)].into_iter().collect(),
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let ds = dataset();
        let bytes = encode(&ds);
        assert_eq!(decode(&bytes).unwrap(), ds);
        assert_eq!(encode(&decode(&bytes).unwrap()), bytes);
        assert_eq!(content_version(&bytes).len(), 64);
    }

    #[test]
    fn refuses_newer_schema_and_garbage() {
        let mut bytes = encode(&dataset());
        bytes[8..12].copy_from_slice(&(SCHEMA_VERSION + 1).to_le_bytes());
        assert!(matches!(decode(&bytes), Err(SnapshotError::NewerSchema { .. })));
        assert!(matches!(decode(b"nope"), Err(SnapshotError::Corrupt(_))));
        let mut truncated = encode(&dataset());
        truncated.pop();
        assert!(matches!(decode(&truncated), Err(SnapshotError::Corrupt(_))));
    }
}
