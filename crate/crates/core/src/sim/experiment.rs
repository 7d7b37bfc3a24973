use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::session::{
    maybe_change_ift, run_session, ChangeModel, LossProcess, ProcessError, SessionSpec,
};
use super::topology::{build_topology, select_path, Topology, TopologyError, TopologySpec};
use crate::model::{GroundTruth, NodeId, PdrReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error("concurrency must be between 1 and 4, got {0}")]
    Concurrency(usize),
    #[error("packets per session must be positive")]
    Packets,
    #[error("topology has {topology} nodes but config says {config}")]
    NodeCount { topology: usize, config: usize },
}

/// Where the experiment's topology comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum TopologySource {
    /// Random geometric graph with about this mean degree, seeded by
    /// `ExperimentConfig::topology_seed`.
    Random {
        mean_degree: f64,
    },
    Fixed(Topology),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub nodes: usize,
    pub change: ChangeModel,
    pub sessions: usize,
    pub packets: u32,
    pub concurrency: usize,
    /// Drives traffic, initial behaviors, losses and changes.
    pub seed: u64,
    /// Drives node placement; held fixed across runs of one study.
    pub topology_seed: u64,
    pub loss: LossProcess,
    pub topology: TopologySource,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            nodes: 15,
            change: ChangeModel {
                tau: Some(100.0),
                behavior_lo: 0.5,
                behavior_hi: 1.0,
            },
            sessions: 2000,
            packets: 500,
            concurrency: 2,
            seed: 1,
            topology_seed: 1,
            loss: LossProcess::default(),
            topology: TopologySource::Random { mean_degree: 4.0 },
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(1..=4).contains(&self.concurrency) {
            return Err(SimError::Concurrency(self.concurrency));
        }
        if self.packets == 0 {
            return Err(SimError::Packets);
        }
        ChangeModel::new(
            self.change.tau,
            self.change.behavior_lo,
            self.change.behavior_hi,
        )?;
        LossProcess::new(
            self.loss.baseline_max,
            self.loss.spike_max,
            self.loss.spike_prob,
        )?;
        if let TopologySource::Fixed(t) = &self.topology {
            if t.node_count() != self.nodes {
                return Err(SimError::NodeCount {
                    topology: t.node_count(),
                    config: self.nodes,
                });
            }
        }
        Ok(())
    }

    pub fn topology_spec(&self) -> TopologySpec {
        match &self.topology {
            TopologySource::Fixed(t) => TopologySpec::Fixed(t.clone()),
            TopologySource::Random { mean_degree } => {
                TopologySpec::random(self.nodes, *mean_degree, self.topology_seed)
            }
        }
    }
}

/// A completed session's report and the behaviors in force when it ended.
/// Transit nodes of a session cannot change while it runs, so for them
/// this is also the truth during the session.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Index of the session, in start order.
    pub session: usize,
    pub report: PdrReport<f64>,
    pub truth: GroundTruth<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangeEvent {
    /// Index of the session whose start triggered the change.
    pub session: usize,
    /// Number of reports emitted before the change.
    pub reports_before: usize,
    pub node: NodeId,
    pub old: f64,
    pub new: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChangeStats {
    /// Transit selections of nodes idle elsewhere.
    pub opportunities: u64,
    pub changes: u64,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub topology: Topology,
    pub initial_truth: GroundTruth<f64>,
    pub observations: Vec<Observation>,
    pub changes: Vec<ChangeEvent>,
    pub stats: ChangeStats,
    pub net_losses: Vec<f64>,
}

struct Active {
    session: usize,
    report: PdrReport<f64>,
}

/// Runs `config.sessions` sessions between uniformly drawn distinct
/// source/destination pairs, with up to `config.concurrency` sessions in
/// flight. When the cap is reached a uniformly chosen active session
/// completes and emits its report.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment, SimError> {
    config.validate()?;
    let topology = build_topology(&config.topology_spec())?;
    let n = topology.node_count();
    let paths = PathTable::new(&topology);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut truth = GroundTruth::new(
        (0..n)
            .map(|_| config.change.draw_behavior(&mut rng))
            .collect(),
    );
    let initial_truth = truth.clone();

    let mut active: Vec<Active> = Vec::with_capacity(config.concurrency);
    let mut observations = Vec::with_capacity(config.sessions);
    let mut changes = Vec::new();
    let mut stats = ChangeStats::default();
    let mut net_losses = Vec::with_capacity(config.sessions);

    let emit = |active: &mut Vec<Active>,
                idx: usize,
                observations: &mut Vec<Observation>,
                truth: &GroundTruth<f64>| {
        let mut done = active.swap_remove(idx);
        done.report.seq = observations.len() as u64 + 1;
        observations.push(Observation {
            session: done.session,
            report: done.report,
            truth: truth.clone(),
        });
    };

    for session in 0..config.sessions {
        let source = rng.gen_range(0..n);
        let mut dest = rng.gen_range(0..n - 1);
        if dest >= source {
            dest += 1;
        }
        let path = paths.get(source, dest).to_vec();
        let busy: BTreeSet<NodeId> = active
            .iter()
            .flat_map(|a| a.report.transit.iter().copied())
            .collect();

        let mut spec = SessionSpec {
            seq: 0,
            source: NodeId(source),
            dest: NodeId(dest),
            path,
            packets: config.packets,
            net_loss: 0.0,
        };
        for node in spec.transit() {
            if busy.contains(&node) {
                continue;
            }
            stats.opportunities += 1;
            if let Some(g) = maybe_change_ift(node, &config.change, n, &busy, &mut rng) {
                stats.changes += 1;
                changes.push(ChangeEvent {
                    session,
                    reports_before: observations.len(),
                    node,
                    old: truth.get(node),
                    new: g,
                });
                truth.set(node, g);
            }
        }
        spec.net_loss = config.loss.draw(&mut rng);
        net_losses.push(spec.net_loss);
        // Transit behaviors are frozen for the session's lifetime, so the
        // packets can be played out now.
        let report = run_session(&spec, &truth, &mut rng);
        active.push(Active { session, report });

        if active.len() >= config.concurrency {
            let idx = rng.gen_range(0..active.len());
            emit(&mut active, idx, &mut observations, &truth);
        }
    }
    while !active.is_empty() {
        let idx = rng.gen_range(0..active.len());
        emit(&mut active, idx, &mut observations, &truth);
    }

    Ok(Experiment {
        topology,
        initial_truth,
        observations,
        changes,
        stats,
        net_losses,
    })
}

/// Precomputed routes for every ordered pair.
pub struct PathTable {
    n: usize,
    paths: Vec<Vec<NodeId>>,
}

impl PathTable {
    pub fn new(topology: &Topology) -> Self {
        let n = topology.node_count();
        let mut paths = Vec::with_capacity(n * n);
        for s in 0..n {
            for d in 0..n {
                paths.push(if s == d {
                    Vec::new()
                } else {
                    select_path(topology, NodeId(s), NodeId(d))
                });
            }
        }
        PathTable { n, paths }
    }

    pub fn get(&self, source: usize, dest: usize) -> &[NodeId] {
        &self.paths[source * self.n + dest]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::expected_pdr;

    fn quiet(seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            change: ChangeModel::stable(),
            loss: LossProcess::none(),
            sessions: 300,
            concurrency: 1,
            seed,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let cfg = ExperimentConfig {
            sessions: 200,
            ..ExperimentConfig::default()
        };
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.observations, b.observations);
        let c = run_experiment(&ExperimentConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a.observations, c.observations);
    }

    #[test]
    fn seqs_increase_and_every_session_reports() {
        let cfg = ExperimentConfig {
            sessions: 150,
            concurrency: 4,
            ..ExperimentConfig::default()
        };
        let exp = run_experiment(&cfg).unwrap();
        assert_eq!(exp.observations.len(), 150);
        for (i, o) in exp.observations.iter().enumerate() {
            assert_eq!(o.report.seq, i as u64 + 1);
        }
    }

    #[test]
    fn stable_noise_free_reports_track_path_model() {
        let exp = run_experiment(&quiet(5)).unwrap();
        let mut z_sum = 0.0;
        let mut count = 0.0;
        for o in &exp.observations {
            assert_eq!(o.truth, exp.initial_truth);
            let p = expected_pdr(&o.report.transit, &o.truth);
            if o.report.transit.is_empty() {
                assert_eq!(o.report.pdr, 1.0);
                continue;
            }
            let sigma = (p * (1.0 - p) / o.report.packets_sent as f64).sqrt();
            z_sum += (o.report.pdr - p) / sigma;
            count += 1.0;
            assert!((o.report.pdr - p).abs() < 5.0 * sigma);
        }
        // mean z-score of independent sessions is ~N(0, 1/count)
        assert!((z_sum / count).abs() < 3.0 / count.sqrt());
    }

    #[test]
    fn transit_behavior_frozen_while_active() {
        let cfg = ExperimentConfig {
            change: ChangeModel::new(Some(0.5), 0.5, 1.0).unwrap(),
            sessions: 400,
            concurrency: 4,
            ..ExperimentConfig::default()
        };
        let exp = run_experiment(&cfg).unwrap();
        assert!(!exp.changes.is_empty());
        assert_eq!(exp.stats.changes as usize, exp.changes.len());
        let mut overlapping = 0;
        for (i, o) in exp.observations.iter().enumerate() {
            for c in &exp.changes {
                let while_active = c.session > o.session && c.reports_before <= i;
                if while_active {
                    overlapping += 1;
                    assert!(
                        !o.report.contains(c.node),
                        "{c:?} hit active session {}",
                        o.session
                    );
                }
            }
        }
        assert!(overlapping > 0);
    }

    #[test]
    fn config_validation() {
        let bad = ExperimentConfig {
            concurrency: 5,
            ..ExperimentConfig::default()
        };
        assert_eq!(run_experiment(&bad).unwrap_err(), SimError::Concurrency(5));
        let bad = ExperimentConfig {
            packets: 0,
            ..ExperimentConfig::default()
        };
        assert_eq!(run_experiment(&bad).unwrap_err(), SimError::Packets);
    }
}
