//! Shared domain types and the multiplicative path model.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::scalar::Scalar;

/// Dense index of a node in the fixed node set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for NodeId {
    fn from(v: usize) -> Self {
        NodeId(v)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("report {seq}: pdr {pdr} outside [0, 1]")]
    PdrOutOfRange { seq: u64, pdr: f64 },
    #[error("report {seq}: node {node} outside node set of size {node_count}")]
    UnknownNode {
        seq: u64,
        node: NodeId,
        node_count: usize,
    },
    #[error("report {seq}: packets_sent must be positive")]
    NoPackets { seq: u64 },
}

/// One end-to-end delivery report for a completed session.
///
/// `transit` holds only the intermediate nodes of the path; the source and
/// destination never appear in it.
#[derive(Debug, Clone, PartialEq)]
pub struct PdrReport<T> {
    pub seq: u64,
    pub transit: BTreeSet<NodeId>,
    pub pdr: T,
    pub packets_sent: u32,
}

impl<T> PdrReport<T> {
    pub fn contains(&self, node: NodeId) -> bool {
        self.transit.contains(&node)
    }
}

impl<T: Scalar> PdrReport<T> {
    pub fn new(
        seq: u64,
        transit: impl IntoIterator<Item = NodeId>,
        pdr: T,
        packets_sent: u32,
    ) -> Result<Self, ReportError> {
        let report = PdrReport {
            seq,
            transit: transit.into_iter().collect(),
            pdr,
            packets_sent,
        };
        report.check_values()?;
        Ok(report)
    }

    fn check_values(&self) -> Result<(), ReportError> {
        if !(self.pdr >= T::zero() && self.pdr <= T::one()) {
            return Err(ReportError::PdrOutOfRange {
                seq: self.seq,
                pdr: self.pdr.to_f64().unwrap_or(f64::NAN),
            });
        }
        if self.packets_sent == 0 {
            return Err(ReportError::NoPackets { seq: self.seq });
        }
        Ok(())
    }

    /// Checks value ranges and that every transit node belongs to `0..node_count`.
    pub fn validate(&self, node_count: usize) -> Result<(), ReportError> {
        self.check_values()?;
        if let Some(&node) = self.transit.iter().find(|n| n.0 >= node_count) {
            return Err(ReportError::UnknownNode {
                seq: self.seq,
                node,
                node_count,
            });
        }
        Ok(())
    }

    /// Converts the report to another scalar type.
    pub fn cast<U: Scalar>(&self) -> PdrReport<U> {
        PdrReport {
            seq: self.seq,
            transit: self.transit.clone(),
            pdr: U::from(self.pdr).expect("pdr representable"),
            packets_sent: self.packets_sent,
        }
    }
}

/// Per-node intrinsic forwarding probabilities. Only the simulator and
/// metrics code ever see these.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T> {
    g: Vec<T>,
}

impl<T: Scalar> GroundTruth<T> {
    pub fn new(g: Vec<T>) -> Self {
        debug_assert!(g.iter().all(|&v| v >= T::zero() && v <= T::one()));
        GroundTruth { g }
    }

    pub fn node_count(&self) -> usize {
        self.g.len()
    }

    pub fn get(&self, node: NodeId) -> T {
        self.g[node.0]
    }

    pub fn set(&mut self, node: NodeId, value: T) {
        debug_assert!(value >= T::zero() && value <= T::one());
        self.g[node.0] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.g
    }
}

/// Delivery probability of a path under the product model: the product of
/// the transit nodes' forwarding probabilities, or 1 for an empty set.
pub fn expected_pdr<'a, T: Scalar>(
    transit: impl IntoIterator<Item = &'a NodeId>,
    truth: &GroundTruth<T>,
) -> T {
    transit
        .into_iter()
        .fold(T::one(), |acc, &node| acc * truth.get(node))
}
