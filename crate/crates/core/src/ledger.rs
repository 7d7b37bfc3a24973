//! Bounded, seq-ordered store of retained reports.

use std::collections::VecDeque;

use thiserror::Error;

use crate::model::{NodeId, PdrReport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("report seq {seq} is not greater than last accepted seq {last}")]
    NonMonotonicSeq { seq: u64, last: u64 },
    #[error("ledger capacity must be at least 1")]
    ZeroCapacity,
}

#[derive(Debug, Clone)]
pub struct ReportLedger<T> {
    reports: VecDeque<PdrReport<T>>,
    capacity: usize,
    /// Highest seq ever accepted, including reports since evicted or removed.
    last_seq: Option<u64>,
}

impl<T> ReportLedger<T> {
    pub fn new(capacity: usize) -> Result<Self, LedgerError> {
        if capacity == 0 {
            return Err(LedgerError::ZeroCapacity);
        }
        Ok(ReportLedger {
            reports: VecDeque::new(),
            capacity,
            last_seq: None,
        })
    }

    pub fn unbounded() -> Self {
        ReportLedger {
            reports: VecDeque::new(),
            capacity: usize::MAX,
            last_seq: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PdrReport<T>> + '_ {
        self.reports.iter()
    }

    pub fn last_seq(&self) -> Option<u64> {
        self.last_seq
    }

    /// Fails if `seq` could not be appended next.
    pub fn check_seq(&self, seq: u64) -> Result<(), LedgerError> {
        match self.last_seq {
            Some(last) if seq <= last => Err(LedgerError::NonMonotonicSeq { seq, last }),
            _ => Ok(()),
        }
    }

    /// Appends a report and evicts the oldest reports beyond capacity.
    /// Returns the evicted reports, oldest first.
    pub fn append(&mut self, report: PdrReport<T>) -> Result<Vec<PdrReport<T>>, LedgerError> {
        self.check_seq(report.seq)?;
        self.last_seq = Some(report.seq);
        self.reports.push_back(report);
        let excess = self.reports.len().saturating_sub(self.capacity);
        Ok(self.reports.drain(..excess).collect())
    }

    /// Removes every report whose transit set contains `node`, keeping the
    /// order of the survivors.
    pub fn remove_containing(&mut self, node: NodeId) -> Vec<PdrReport<T>> {
        let (removed, kept): (Vec<_>, Vec<_>) =
            self.reports.drain(..).partition(|r| r.contains(node));
        self.reports = kept.into();
        removed
    }

    /// Number of retained reports whose path traverses `node`.
    pub fn coverage(&self, node: NodeId) -> usize {
        self.reports.iter().filter(|r| r.contains(node)).count()
    }
}
