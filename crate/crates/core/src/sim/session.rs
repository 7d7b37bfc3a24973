use std::collections::BTreeSet;

use rand::Rng;
use thiserror::Error;

use crate::model::{GroundTruth, NodeId, PdrReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProcessError {
    #[error("tau must be positive, got {0}")]
    Tau(f64),
    #[error("behavior range [{0}, {1}] must satisfy 0 <= lo <= hi <= 1")]
    BehaviorRange(f64, f64),
    #[error("loss process needs 0 <= baseline_max <= spike_max < 1 and spike_prob in [0, 1]")]
    Loss,
}

/// Forwarding-probability change process. Each time a node is picked as
/// transit for a new session while idle elsewhere, it redraws its
/// probability with chance `1 / (tau * |N|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangeModel {
    /// `None` means no changes ever happen.
    pub tau: Option<f64>,
    pub behavior_lo: f64,
    pub behavior_hi: f64,
}

impl ChangeModel {
    pub fn new(tau: Option<f64>, behavior_lo: f64, behavior_hi: f64) -> Result<Self, ProcessError> {
        if let Some(t) = tau {
            if !(t > 0.0) {
                return Err(ProcessError::Tau(t));
            }
        }
        if !(0.0 <= behavior_lo && behavior_lo <= behavior_hi && behavior_hi <= 1.0) {
            return Err(ProcessError::BehaviorRange(behavior_lo, behavior_hi));
        }
        Ok(ChangeModel {
            tau,
            behavior_lo,
            behavior_hi,
        })
    }

    pub fn stable() -> Self {
        ChangeModel {
            tau: None,
            behavior_lo: 0.5,
            behavior_hi: 1.0,
        }
    }

    pub fn change_prob(&self, node_count: usize) -> f64 {
        match self.tau {
            Some(t) if t.is_finite() => 1.0 / (t * node_count as f64),
            _ => 0.0,
        }
    }

    pub fn draw_behavior<R: Rng>(&self, rng: &mut R) -> f64 {
        self.behavior_lo + (self.behavior_hi - self.behavior_lo) * rng.gen::<f64>()
    }
}

/// Decides whether `node`, newly chosen as transit, changes behavior.
/// Nodes already forwarding for another active session never change; for
/// eligible nodes one uniform draw is always consumed so the random stream
/// does not depend on `tau`.
pub fn maybe_change_ift<R: Rng>(
    node: NodeId,
    model: &ChangeModel,
    node_count: usize,
    active_transit: &BTreeSet<NodeId>,
    rng: &mut R,
) -> Option<f64> {
    if active_transit.contains(&node) {
        return None;
    }
    let fire = rng.gen::<f64>() < model.change_prob(node_count);
    fire.then(|| model.draw_behavior(rng))
}

/// Per-session exogenous loss ratio: mostly a low baseline with occasional
/// spikes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossProcess {
    pub baseline_max: f64,
    pub spike_max: f64,
    pub spike_prob: f64,
}

impl LossProcess {
    pub fn new(baseline_max: f64, spike_max: f64, spike_prob: f64) -> Result<Self, ProcessError> {
        let ok = 0.0 <= baseline_max
            && baseline_max <= spike_max
            && spike_max < 1.0
            && (0.0..=1.0).contains(&spike_prob);
        if !ok {
            return Err(ProcessError::Loss);
        }
        Ok(LossProcess {
            baseline_max,
            spike_max,
            spike_prob,
        })
    }

    pub fn none() -> Self {
        LossProcess {
            baseline_max: 0.0,
            spike_max: 0.0,
            spike_prob: 0.0,
        }
    }

    /// Loss ratio for one session; always consumes two draws.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let spike = rng.gen::<f64>() < self.spike_prob;
        let u = rng.gen::<f64>();
        if spike {
            self.baseline_max + (self.spike_max - self.baseline_max) * u
        } else {
            self.baseline_max * u
        }
    }

    pub fn mean(&self) -> f64 {
        (1.0 - self.spike_prob) * self.baseline_max / 2.0
            + self.spike_prob * (self.baseline_max + self.spike_max) / 2.0
    }
}

impl Default for LossProcess {
    fn default() -> Self {
        LossProcess {
            baseline_max: 0.05,
            spike_max: 0.12,
            spike_prob: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSpec {
    pub seq: u64,
    pub source: NodeId,
    pub dest: NodeId,
    /// Full path including source and destination.
    pub path: Vec<NodeId>,
    pub packets: u32,
    pub net_loss: f64,
}

impl SessionSpec {
    pub fn transit(&self) -> BTreeSet<NodeId> {
        match self.path.len() {
            0..=2 => BTreeSet::new(),
            len => self.path[1..len - 1].iter().copied().collect(),
        }
    }
}

/// Sends `packets` packets: each is delivered iff every transit node
/// forwards it and the exogenous loss does not hit it.
pub fn run_session<R: Rng>(
    spec: &SessionSpec,
    truth: &GroundTruth<f64>,
    rng: &mut R,
) -> PdrReport<f64> {
    assert!(spec.packets >= 1, "session needs at least one packet");
    let transit = spec.transit();
    let mut delivered = 0u32;
    for _ in 0..spec.packets {
        let forwarded = transit.iter().all(|&x| rng.gen::<f64>() < truth.get(x));
        if forwarded && rng.gen::<f64>() >= spec.net_loss {
            delivered += 1;
        }
    }
    PdrReport {
        seq: spec.seq,
        transit,
        pdr: delivered as f64 / spec.packets as f64,
        packets_sent: spec.packets,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn session(path: &[usize], packets: u32, net_loss: f64) -> SessionSpec {
        SessionSpec {
            seq: 1,
            source: NodeId(path[0]),
            dest: NodeId(*path.last().unwrap()),
            path: path.iter().copied().map(NodeId).collect(),
            packets,
            net_loss,
        }
    }

    #[test]
    fn perfect_nodes_deliver_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = GroundTruth::new(vec![1.0; 4]);
        let r = run_session(&session(&[0, 1, 2, 3], 200, 0.0), &truth, &mut rng);
        assert_eq!(r.pdr, 1.0);
        assert_eq!(r.transit.len(), 2);
    }

    #[test]
    fn two_hop_binomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let truth = GroundTruth::new(vec![1.0, 0.8, 0.9, 1.0]);
        let packets = 100_000;
        let r = run_session(&session(&[0, 1, 2, 3], packets, 0.0), &truth, &mut rng);
        let sigma = (0.72f64 * 0.28 / packets as f64).sqrt();
        assert!((r.pdr - 0.72).abs() < 3.0 * sigma, "{}", r.pdr);
    }

    #[test]
    fn direct_link_sees_only_exogenous_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let truth = GroundTruth::new(vec![0.5, 0.5]);
        let packets = 100_000;
        let r = run_session(&session(&[0, 1], packets, 0.05), &truth, &mut rng);
        assert!(r.transit.is_empty());
        let sigma = (0.95f64 * 0.05 / packets as f64).sqrt();
        assert!((r.pdr - 0.95).abs() < 3.0 * sigma, "{}", r.pdr);
    }

    #[test]
    fn change_probability_follows_tau() {
        let m = ChangeModel::new(Some(100.0), 0.5, 1.0).unwrap();
        assert!((m.change_prob(15) - 1.0 / 1500.0).abs() < 1e-18);
        assert_eq!(ChangeModel::stable().change_prob(15), 0.0);
        assert!(ChangeModel::new(Some(0.0), 0.5, 1.0).is_err());
        assert!(ChangeModel::new(None, 0.7, 0.6).is_err());
    }

    #[test]
    fn infinite_tau_never_changes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = ChangeModel::stable();
        let idle = BTreeSet::new();
        assert!((0..10_000).all(|_| maybe_change_ift(NodeId(0), &m, 15, &idle, &mut rng).is_none()));
    }

    #[test]
    fn busy_nodes_never_change() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // certain change for idle nodes
        let m = ChangeModel::new(Some(1.0 / 15.0), 0.5, 1.0).unwrap();
        let busy: BTreeSet<_> = [NodeId(2)].into();
        assert!((0..1000).all(|_| maybe_change_ift(NodeId(2), &m, 15, &busy, &mut rng).is_none()));
        let g = maybe_change_ift(NodeId(1), &m, 15, &busy, &mut rng).unwrap();
        assert!((0.5..=1.0).contains(&g));
    }

    #[test]
    fn loss_process_mean() {
        let p = LossProcess::new(0.03, 0.11, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let mean = (0..n).map(|_| p.draw(&mut rng)).sum::<f64>() / n as f64;
        assert!(mean < 0.05);
        assert!((mean - p.mean()).abs() < 1e-3);
        assert!(LossProcess::new(0.2, 0.1, 0.1).is_err());
        assert!(LossProcess::new(0.0, 0.1, 1.5).is_err());
    }
}
