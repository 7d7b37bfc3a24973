//! Accuracy metrics, parameter sweeps and variant comparisons over
//! simulated report streams.

use std::collections::BTreeSet;
use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{DeductionSnapshot, Engine, EngineConfig, EngineError, Variant};
use crate::io::{writer, IoError, SURFACE_HEADER, TIMESERIES_HEADER};
use crate::model::{GroundTruth, NodeId};
use crate::sim::{run_experiment, Experiment, ExperimentConfig, Observation, SimError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("sweep grid needs at least one penalty and one history")]
    EmptyGrid,
    #[error("runs per cell must be positive")]
    NoRuns,
}

/// Deduction accuracy after one report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyRecord {
    pub report_seq: u64,
    /// Mean of `|g - d|` over the scored nodes.
    pub avg_abs_acc: f64,
    pub max_abs_acc: f64,
    /// Mean reported error over the scored nodes.
    pub avg_e: f64,
    pub removals: usize,
}

/// Nodes that appear as transit in at least one report. Other nodes never
/// influence a report, so their deduced level carries no information and
/// they are left out of the accuracy averages.
pub fn observed_nodes<'a>(observations: impl IntoIterator<Item = &'a Observation>) -> Vec<NodeId> {
    let set: BTreeSet<NodeId> = observations
        .into_iter()
        .flat_map(|o| o.report.transit.iter().copied())
        .collect();
    set.into_iter().collect()
}

pub fn accuracy(
    snapshot: &DeductionSnapshot<f64>,
    truth: &GroundTruth<f64>,
    scope: &[NodeId],
) -> AccuracyRecord {
    let mut sum = 0.0;
    let mut max = 0.0f64;
    let mut e_sum = 0.0;
    for &node in scope {
        let diff = (truth.get(node) - snapshot.d[node.0]).abs();
        sum += diff;
        max = max.max(diff);
        e_sum += snapshot.e[node.0];
    }
    let count = scope.len().max(1) as f64;
    AccuracyRecord {
        report_seq: snapshot.report_seq,
        avg_abs_acc: sum / count,
        max_abs_acc: max,
        avg_e: e_sum / count,
        removals: snapshot.removals_so_far,
    }
}

/// Feeds every report to a fresh engine and collects the snapshots.
pub fn replay(
    observations: &[Observation],
    config: &EngineConfig<f64>,
    variant: Variant,
    node_count: usize,
) -> Result<Vec<DeductionSnapshot<f64>>, EngineError> {
    let mut engine = Engine::new(variant, *config, node_count);
    observations
        .iter()
        .map(|o| engine.process(o.report.clone()).cloned())
        .collect()
}

/// One accuracy record per report, scored over [`observed_nodes`].
pub fn evaluate_run(
    observations: &[Observation],
    config: &EngineConfig<f64>,
    variant: Variant,
    node_count: usize,
) -> Result<Vec<AccuracyRecord>, EngineError> {
    let scope = observed_nodes(observations);
    let snaps = replay(observations, config, variant, node_count)?;
    Ok(snaps
        .iter()
        .zip(observations)
        .map(|(s, o)| accuracy(s, &o.truth, &scope))
        .collect())
}

/// Mean `avg_abs_acc` over the last half of a run.
pub fn steady_state_mean(records: &[AccuracyRecord]) -> f64 {
    let tail = &records[records.len() / 2..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().map(|r| r.avg_abs_acc).sum::<f64>() / tail.len() as f64
}

pub fn run_mean(records: &[AccuracyRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(|r| r.avg_abs_acc).sum::<f64>() / records.len() as f64
}

/// Traffic seed for run `run` of a study seeded with `master`.
pub fn run_seed(master: u64, run: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(run);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub penalties: Vec<f64>,
    pub histories: Vec<usize>,
}

impl SweepGrid {
    /// Penalties 0, 0.05, ..., 1 and histories 1, 25, 50, ..., 550.
    pub fn full() -> Self {
        SweepGrid {
            penalties: (0..=20).map(|i| i as f64 / 20.0).collect(),
            histories: std::iter::once(1).chain((1..=22).map(|i| 25 * i)).collect(),
        }
    }

    /// 5 x 5 subset of the full grid.
    pub fn reduced() -> Self {
        SweepGrid {
            penalties: vec![0.05, 0.25, 0.45, 0.65, 0.85],
            histories: vec![25, 125, 225, 325, 425],
        }
    }

    pub fn len(&self) -> usize {
        self.penalties.len() * self.histories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub penalty: f64,
    pub history: usize,
    /// Run-averaged steady-state `avg_abs_acc`.
    pub avg_abs_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub tau: Option<f64>,
    /// Penalty-major order.
    pub cells: Vec<SweepCell>,
}

impl Surface {
    pub fn get(&self, penalty: f64, history: usize) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.penalty == penalty && c.history == history)
    }

    /// Lowest-error cell; the first one wins ties.
    pub fn best(&self) -> Option<&SweepCell> {
        self.cells
            .iter()
            .fold(None, |b: Option<&SweepCell>, c| match b {
                Some(b) if b.avg_abs_acc <= c.avg_abs_acc => Some(b),
                _ => Some(c),
            })
    }
}

/// Runs every grid cell through the reactive engine. Run `r` of every cell
/// replays the same simulated stream, seeded by `run_seed(sim.seed, r)`,
/// so cells differ only in their engine settings.
pub fn sweep(
    sim: &ExperimentConfig,
    grid: &SweepGrid,
    runs_per_cell: usize,
    base: &EngineConfig<f64>,
) -> Result<Surface, HarnessError> {
    if grid.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    if runs_per_cell == 0 {
        return Err(HarnessError::NoRuns);
    }
    let configs = grid
        .penalties
        .iter()
        .flat_map(|&p| grid.histories.iter().map(move |&h| (p, h)))
        .map(|(p, h)| EngineConfig::new(p, h, base.scale))
        .collect::<Result<Vec<_>, _>>()?;

    let runs: Vec<Experiment> = (0..runs_per_cell as u64)
        .into_par_iter()
        .map(|r| {
            run_experiment(&ExperimentConfig {
                seed: run_seed(sim.seed, r),
                ..sim.clone()
            })
        })
        .collect::<Result<_, _>>()?;

    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..runs_per_cell).map(move |r| (c, r)))
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let exp = &runs[r];
            let records = evaluate_run(
                &exp.observations,
                &configs[c],
                Variant::Reactive,
                exp.topology.node_count(),
            )?;
            Ok(steady_state_mean(&records))
        })
        .collect::<Result<_, EngineError>>()?;

    let cells = configs
        .iter()
        .zip(scores.chunks(runs_per_cell))
        .map(|(cfg, s)| SweepCell {
            penalty: cfg.decision_penalty,
            history: cfg.history,
            avg_abs_acc: s.iter().sum::<f64>() / s.len() as f64,
        })
        .collect();
    Ok(Surface {
        tau: sim.change.tau,
        cells,
    })
}

/// Both variants driven by the same simulated stream.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub experiment: Experiment,
    pub reactive: Vec<AccuracyRecord>,
    pub plain: Vec<AccuracyRecord>,
}

/// The plain variant keeps every report; the reactive one is bounded by
/// `config.history`.
pub fn compare_variants(
    sim: &ExperimentConfig,
    config: &EngineConfig<f64>,
) -> Result<Comparison, HarnessError> {
    let experiment = run_experiment(sim)?;
    let n = experiment.topology.node_count();
    let (reactive, plain) = rayon::join(
        || evaluate_run(&experiment.observations, config, Variant::Reactive, n),
        || evaluate_run(&experiment.observations, config, Variant::Plain, n),
    );
    Ok(Comparison {
        reactive: reactive?,
        plain: plain?,
        experiment,
    })
}

pub fn format_tau(tau: Option<f64>) -> String {
    tau.map_or_else(|| "inf".to_string(), |t| t.to_string())
}

pub fn write_surface<W: Write>(w: W, surface: &Surface) -> Result<(), IoError> {
    let mut out = writer(w, &SURFACE_HEADER)?;
    let tau = format_tau(surface.tau);
    for c in &surface.cells {
        out.write_record([
            tau.clone(),
            c.penalty.to_string(),
            c.history.to_string(),
            c.avg_abs_acc.to_string(),
        ])?;
    }
    out.flush().map_err(IoError::from)
}

pub fn write_timeseries<'a, W: Write>(
    w: W,
    series: impl IntoIterator<Item = (Variant, &'a [AccuracyRecord])>,
) -> Result<(), IoError> {
    let mut out = writer(w, &TIMESERIES_HEADER)?;
    for (variant, records) in series {
        for r in records {
            out.write_record([
                variant.name().to_string(),
                r.report_seq.to_string(),
                r.avg_abs_acc.to_string(),
                r.max_abs_acc.to_string(),
                r.avg_e.to_string(),
                r.removals.to_string(),
            ])?;
        }
    }
    out.flush().map_err(IoError::from)
}
