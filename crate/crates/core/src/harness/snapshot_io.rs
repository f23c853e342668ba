//! Snapshot files: one JSON header line followed by one JSON record per line.
//!
//! The header pins the ensemble and master seed so that every record can be
//! replayed into its snapshot. Outcomes are stored as hex bit strings.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dense::circuit::{Ensemble, EnsembleSpec};
use crate::error::{Error, Result};
use crate::estimators::ShadowRecord;

pub const FORMAT: &str = "ls-shadows-snapshots";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub format: String,
    pub version: u32,
    pub n_sites: usize,
    pub ensemble: EnsembleSpec,
    pub master_seed: u64,
    pub hash: String,
}

impl SnapshotHeader {
    pub fn for_ensemble(ensemble: &Ensemble) -> Self {
        let mut h = Self {
            format: FORMAT.into(),
            version: VERSION,
            n_sites: ensemble.n_sites(),
            ensemble: ensemble.spec().clone(),
            master_seed: ensemble.master_seed(),
            hash: String::new(),
        };
        h.hash = h.expected_hash();
        h
    }

    fn expected_hash(&self) -> String {
        let text = format!("{}\n{}\n{}\n{}", self.version, self.n_sites, self.ensemble.canonical_json(), self.master_seed);
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    fn check(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::Format(format!("not a snapshot file (format {:?})", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::Format(format!("snapshot format version {} is not supported (expected {VERSION})", self.version)));
        }
        if self.n_sites != self.ensemble.n_sites {
            return Err(Error::Format("header site count disagrees with its ensemble".into()));
        }
        if self.hash != self.expected_hash() {
            return Err(Error::Format("header hash mismatch; the file was edited or corrupted".into()));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Line {
    index: u64,
    member_seed: u64,
    outcome: String,
}

pub fn write_snapshots<W: Write>(out: W, ensemble: &Ensemble, records: &[ShadowRecord]) -> Result<()> {
    let mut w = BufWriter::new(out);
    serde_json::to_writer(&mut w, &SnapshotHeader::for_ensemble(ensemble))?;
    w.write_all(b"\n")?;
    let width = ensemble.n_sites().div_ceil(4).max(1);
    for r in records {
        let line = Line { index: r.index, member_seed: r.member_seed, outcome: format!("{:0width$x}", r.outcome) };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot file, refusing a bad header.
pub fn read_snapshots<R: std::io::Read>(input: R) -> Result<(SnapshotHeader, Vec<ShadowRecord>)> {
    let mut lines = BufReader::new(input).lines();
    let first = lines.next().ok_or_else(|| Error::Format("empty snapshot file".into()))??;
    let header: SnapshotHeader = serde_json::from_str(&first).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    header.check()?;
    let limit = 1u64 << header.n_sites;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let l: Line = serde_json::from_str(&line).map_err(|e| Error::Format(format!("record {i}: {e}")))?;
        let outcome = u64::from_str_radix(&l.outcome, 16).map_err(|e| Error::Format(format!("record {i}: outcome {e}")))?;
        if outcome >= limit {
            return Err(Error::Format(format!("record {i}: outcome {outcome:#x} has more than {} bits", header.n_sites)));
        }
        records.push(ShadowRecord { index: l.index, member_seed: l.member_seed, outcome });
    }
    Ok((header, records))
}

/// Writes atomically through a sibling temporary file.
pub fn save_snapshots(path: &Path, ensemble: &Ensemble, records: &[ShadowRecord]) -> Result<()> {
    crate::harness::output::write_atomic(path, |w| write_snapshots(w, ensemble, records))
}

/// Loads a file and rebuilds the ensemble it was recorded with.
pub fn load_snapshots(path: &Path) -> Result<(Ensemble, Vec<ShadowRecord>)> {
    let (h, records) = read_snapshots(File::open(path)?)?;
    Ok((Ensemble::new(h.ensemble, h.master_seed)?, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::prepare::{prepare_state, StateSpec};
    use crate::estimators::{collect_shadows, map_records, map_shots, Snapshot};

    fn setup() -> (Ensemble, Vec<ShadowRecord>) {
        let e = Ensemble::new(EnsembleSpec::brickwall(4, 2), 21).unwrap();
        let st = prepare_state(&StateSpec::Ghz, 4).unwrap();
        let recs = collect_shadows(&e, &st, 1000).unwrap();
        (e, recs)
    }

    #[test]
    fn round_trip() {
        let (e, recs) = setup();
        let mut buf = Vec::new();
        write_snapshots(&mut buf, &e, &recs).unwrap();
        let (h, back) = read_snapshots(buf.as_slice()).unwrap();
        assert_eq!(back, recs);
        assert_eq!(h.master_seed, 21);
        assert_eq!(&h.ensemble, e.spec());
    }

    #[test]
    fn corrupted_header_is_refused() {
        let (e, recs) = setup();
        let mut buf = Vec::new();
        write_snapshots(&mut buf, &e, &recs[..3]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let tampered = text.replacen("\"master_seed\":21", "\"master_seed\":22", 1);
        assert!(matches!(read_snapshots(tampered.as_bytes()), Err(Error::Format(_))));
        let old = text.replacen("\"version\":1", "\"version\":0", 1);
        let err = read_snapshots(old.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
    }

    #[test]
    fn replay_matches_fresh_snapshots() {
        let (e, recs) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shots.ndjson");
        save_snapshots(&path, &e, &recs).unwrap();
        let (e2, back) = load_snapshots(&path).unwrap();
        let st = prepare_state(&StateSpec::Ghz, 4).unwrap();
        let amps = |s: &Snapshot| Ok(s.to_state()?.into_amplitudes());
        let fresh = map_shots(&e, &st, 50, amps).unwrap();
        let replayed = map_records(&e2, &back[..50], amps).unwrap();
        assert_eq!(fresh, replayed);
    }
}
