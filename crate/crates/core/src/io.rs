//! CSV readers and writers for reports, snapshots, truth traces and the
//! harness outputs. Floats other than report PDRs are written in Rust's
//! shortest round-trip form, so files read back bit-exactly.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use thiserror::Error;

use crate::engine::DeductionSnapshot;
use crate::error_model::Interval;
use crate::model::{GroundTruth, NodeId, PdrReport};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("expected header `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("record {record}: {msg}")]
    Format { record: u64, msg: String },
}

pub const REPORT_HEADER: [&str; 4] = ["seq", "pdr", "packets", "transit"];
pub const SNAPSHOT_HEADER: [&str; 8] = [
    "report_seq",
    "node",
    "d",
    "e",
    "lo",
    "hi",
    "coverage",
    "removals_so_far",
];
pub const TRUTH_HEADER: [&str; 3] = ["session_seq", "node", "g"];
pub const SURFACE_HEADER: [&str; 4] = ["tau", "penalty", "history", "avg_abs_acc"];
pub const TIMESERIES_HEADER: [&str; 6] = [
    "variant",
    "report_seq",
    "avg_abs_acc",
    "max_abs_acc",
    "avg_e",
    "removals",
];

pub(crate) fn writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>, IoError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(header)?;
    Ok(out)
}

fn reader<R: Read>(r: R, header: &[&str]) -> Result<csv::Reader<R>, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let found = rdr.headers()?;
    if found.iter().ne(header.iter().copied()) {
        return Err(IoError::Header {
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(rdr)
}

fn field<F: std::str::FromStr>(
    rec: &csv::StringRecord,
    i: usize,
    name: &str,
) -> Result<F, IoError> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(i).ok_or_else(|| IoError::Format {
        record: line,
        msg: format!("missing field `{name}`"),
    })?;
    raw.parse().map_err(|_| IoError::Format {
        record: line,
        msg: format!("bad {name} `{raw}`"),
    })
}

fn format_transit(transit: &BTreeSet<NodeId>) -> String {
    transit
        .iter()
        .map(|n| n.0.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

pub fn write_reports<'a, W: Write>(
    w: W,
    reports: impl IntoIterator<Item = &'a PdrReport<f64>>,
) -> Result<(), IoError> {
    let mut out = writer(w, &REPORT_HEADER)?;
    for r in reports {
        out.write_record([
            r.seq.to_string(),
            format!("{:.6}", r.pdr),
            r.packets_sent.to_string(),
            format_transit(&r.transit),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a report file. Reports are validated individually; sequence
/// ordering is left to the ledger.
pub fn read_reports<R: Read>(r: R) -> Result<Vec<PdrReport<f64>>, IoError> {
    let mut rdr = reader(r, &REPORT_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let transit_raw = rec.get(3).unwrap_or("");
        let mut transit = Vec::new();
        for tok in transit_raw
            .split(';')
            .map(str::trim)
            .filter(|t| !t.is_empty())
        {
            let id: usize = tok.parse().map_err(|_| IoError::Format {
                record: line,
                msg: format!("bad node id `{tok}`"),
            })?;
            transit.push(NodeId(id));
        }
        let report = PdrReport::new(
            field(&rec, 0, "seq")?,
            transit,
            field(&rec, 1, "pdr")?,
            field(&rec, 2, "packets")?,
        )
        .map_err(|e| IoError::Format {
            record: line,
            msg: e.to_string(),
        })?;
        out.push(report);
    }
    Ok(out)
}

/// Streams snapshot rows, one per node per report.
pub struct SnapshotWriter<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> SnapshotWriter<W> {
    pub fn new(w: W) -> Result<Self, IoError> {
        Ok(SnapshotWriter {
            out: writer(w, &SNAPSHOT_HEADER)?,
        })
    }

    pub fn write(&mut self, s: &DeductionSnapshot<f64>) -> Result<(), IoError> {
        for node in 0..s.node_count() {
            self.out.write_record([
                s.report_seq.to_string(),
                node.to_string(),
                s.d[node].to_string(),
                s.e[node].to_string(),
                s.interval[node].lo.to_string(),
                s.interval[node].hi.to_string(),
                s.coverage[node].to_string(),
                s.removals_so_far.to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), IoError> {
        self.out.flush()?;
        Ok(())
    }
}

/// Reads snapshot rows back, grouping consecutive rows with the same
/// `report_seq`. Nodes must appear as `0..n` within each group.
pub fn read_snapshots<R: Read>(r: R) -> Result<Vec<DeductionSnapshot<f64>>, IoError> {
    let mut rdr = reader(r, &SNAPSHOT_HEADER)?;
    let mut out: Vec<DeductionSnapshot<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let seq: u64 = field(&rec, 0, "report_seq")?;
        let node: usize = field(&rec, 1, "node")?;
        if out.last().is_none_or(|s| s.report_seq != seq) {
            out.push(DeductionSnapshot {
                report_seq: seq,
                d: Vec::new(),
                e: Vec::new(),
                interval: Vec::new(),
                coverage: Vec::new(),
                removals_so_far: field(&rec, 7, "removals_so_far")?,
            });
        }
        let snap = out.last_mut().expect("pushed above");
        if node != snap.d.len() {
            return Err(IoError::Format {
                record: line,
                msg: format!("expected node {}, found {node}", snap.d.len()),
            });
        }
        snap.d.push(field(&rec, 2, "d")?);
        snap.e.push(field(&rec, 3, "e")?);
        snap.interval.push(Interval {
            lo: field(&rec, 4, "lo")?,
            hi: field(&rec, 5, "hi")?,
        });
        snap.coverage.push(field(&rec, 6, "coverage")?);
    }
    Ok(out)
}

/// Writes the truth in force for each report, keyed by report sequence.
pub fn write_truth<'a, W: Write>(
    w: W,
    rows: impl IntoIterator<Item = (u64, &'a GroundTruth<f64>)>,
) -> Result<(), IoError> {
    let mut out = writer(w, &TRUTH_HEADER)?;
    for (seq, truth) in rows {
        for (node, g) in truth.as_slice().iter().enumerate() {
            out.write_record([seq.to_string(), node.to_string(), g.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_truth<R: Read>(r: R) -> Result<Vec<(u64, GroundTruth<f64>)>, IoError> {
    let mut rdr = reader(r, &TRUTH_HEADER)?;
    let mut out: Vec<(u64, Vec<f64>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let seq: u64 = field(&rec, 0, "session_seq")?;
        let node: usize = field(&rec, 1, "node")?;
        let g: f64 = field(&rec, 2, "g")?;
        if out.last().is_none_or(|(s, _)| *s != seq) {
            out.push((seq, Vec::new()));
        }
        let values = &mut out.last_mut().expect("pushed above").1;
        if node != values.len() {
            return Err(IoError::Format {
                record: line,
                msg: format!("expected node {}, found {node}", values.len()),
            });
        }
        values.push(g);
    }
    Ok(out
        .into_iter()
        .map(|(s, g)| (s, GroundTruth::new(g)))
        .collect())
}
