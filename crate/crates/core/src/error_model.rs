//! Per-node deduction error: the worst delivery-ratio residual over the
//! reports that traverse the node, or a fixed penalty when too few do.

use crate::model::{NodeId, PdrReport};
use crate::scalar::Scalar;

/// A node needs strictly more reports than this before its residuals are
/// trusted.
pub const COVERAGE_THRESHOLD: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorBranch {
    MaxResidual,
    Penalty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEstimate<T> {
    pub e: T,
    pub branch: ErrorBranch,
    pub coverage: usize,
}

/// Delivery ratio predicted by behavior levels `d` for a transit set.
pub fn predicted_pdr<'a, T: Scalar>(transit: impl IntoIterator<Item = &'a NodeId>, d: &[T]) -> T {
    transit.into_iter().fold(T::one(), |acc, n| acc * d[n.0])
}

fn residual<T: Scalar>(report: &PdrReport<T>, d: &[T], pdr_floor: T) -> T {
    (report.pdr.max(pdr_floor) - predicted_pdr(&report.transit, d)).abs()
}

fn finish<T: Scalar>(worst: T, coverage: usize, penalty: T) -> ErrorEstimate<T> {
    if coverage > COVERAGE_THRESHOLD {
        ErrorEstimate {
            e: worst,
            branch: ErrorBranch::MaxResidual,
            coverage,
        }
    } else {
        ErrorEstimate {
            e: penalty,
            branch: ErrorBranch::Penalty,
            coverage,
        }
    }
}

/// Error estimate for one node. Observed ratios are clamped to `pdr_floor`
/// the same way the solver sees them.
pub fn estimate_error<T: Scalar>(
    node: NodeId,
    reports: &[&PdrReport<T>],
    d: &[T],
    penalty: T,
    pdr_floor: T,
) -> ErrorEstimate<T> {
    let (worst, coverage) = reports
        .iter()
        .filter(|r| r.contains(node))
        .fold((T::zero(), 0), |(w, c), r| {
            (w.max(residual(r, d, pdr_floor)), c + 1)
        });
    finish(worst, coverage, penalty)
}

/// Error estimates for every node in `0..d.len()`, computing each report's
/// residual once.
pub fn estimate_errors<T: Scalar>(
    reports: &[&PdrReport<T>],
    d: &[T],
    penalty: T,
    pdr_floor: T,
) -> Vec<ErrorEstimate<T>> {
    let n = d.len();
    let mut worst = vec![T::zero(); n];
    let mut coverage = vec![0usize; n];
    for r in reports {
        let res = residual(r, d, pdr_floor);
        for node in &r.transit {
            worst[node.0] = worst[node.0].max(res);
            coverage[node.0] += 1;
        }
    }
    worst
        .into_iter()
        .zip(coverage)
        .map(|(w, c)| finish(w, c, penalty))
        .collect()
}

/// Sum of per-node errors over the whole node set.
pub fn total_error<T: Scalar>(reports: &[&PdrReport<T>], d: &[T], penalty: T, pdr_floor: T) -> T {
    estimate_errors(reports, d, penalty, pdr_floor)
        .iter()
        .map(|est| est.e)
        .sum()
}

/// Closed interval in which the true forwarding probability should lie.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

pub fn confidence_interval<T: Scalar>(d: T, e: T) -> Interval<T> {
    Interval {
        lo: (d - e).max(T::zero()),
        hi: (d + e).min(T::one()),
    }
}
