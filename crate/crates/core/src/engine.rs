//! Report-driven deduction loop.
//!
//! On every report the reactive engine solves over the retained reports
//! plus the new one, then tries dropping, for each transit node of the new
//! report, every retained report that traverses that node. If the best such
//! trim strictly lowers the summed per-node error (scored with the decision
//! penalty) it is applied and the search repeats; otherwise the report is
//! accepted, the oldest reports beyond the history bound are evicted, and a
//! snapshot scored with penalty 1 is returned.

use std::iter::once;

use thiserror::Error;

use crate::error_model::{confidence_interval, estimate_errors, total_error, Interval};
use crate::ledger::{LedgerError, ReportLedger};
use crate::model::{NodeId, PdrReport, ReportError};
use crate::scalar::Scalar;
use crate::solver::{deduce, LogScale, SolverError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Scale(#[from] SolverError),
    #[error("decision penalty {0} outside [0, 1]")]
    Penalty(f64),
    #[error("history must be at least 1")]
    History,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig<T> {
    /// Error charged to under-covered nodes when deciding on removals.
    pub decision_penalty: T,
    /// Maximum number of retained reports.
    pub history: usize,
    pub scale: LogScale<T>,
}

impl<T: Scalar> EngineConfig<T> {
    pub fn new(
        decision_penalty: T,
        history: usize,
        scale: LogScale<T>,
    ) -> Result<Self, EngineError> {
        if !(decision_penalty >= T::zero() && decision_penalty <= T::one()) {
            return Err(EngineError::Penalty(
                decision_penalty.to_f64().unwrap_or(f64::NAN),
            ));
        }
        if history == 0 {
            return Err(EngineError::History);
        }
        Ok(EngineConfig {
            decision_penalty,
            history,
            scale,
        })
    }
}

impl<T: Scalar> Default for EngineConfig<T> {
    fn default() -> Self {
        EngineConfig {
            decision_penalty: T::lit(0.85),
            history: 325,
            scale: LogScale::default(),
        }
    }
}

/// Which deduction loop to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Error-driven report removal plus the history bound.
    Reactive,
    /// Plain least squares over every retained report.
    Plain,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Reactive => "reactive",
            Variant::Plain => "plain",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reactive" | "enhanced" => Ok(Variant::Reactive),
            "plain" | "simple" => Ok(Variant::Plain),
            other => Err(format!("unknown variant `{other}`")),
        }
    }
}

/// Per-node deduced levels after one report.
#[derive(Debug, Clone, PartialEq)]
pub struct DeductionSnapshot<T> {
    pub report_seq: u64,
    pub d: Vec<T>,
    pub e: Vec<T>,
    pub interval: Vec<Interval<T>>,
    pub coverage: Vec<usize>,
    pub removals_so_far: usize,
}

impl<T: Scalar> DeductionSnapshot<T> {
    pub fn node_count(&self) -> usize {
        self.d.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Removal {
    pub trigger_seq: u64,
    pub node: NodeId,
    pub removed: usize,
}

#[derive(Debug, Clone)]
pub struct EngineState<T> {
    node_count: usize,
    ledger: ReportLedger<T>,
    last_snapshot: Option<DeductionSnapshot<T>>,
    removals: Vec<Removal>,
}

impl<T: Scalar> EngineState<T> {
    pub fn new(node_count: usize, ledger: ReportLedger<T>) -> Self {
        EngineState {
            node_count,
            ledger,
            last_snapshot: None,
            removals: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn ledger(&self) -> &ReportLedger<T> {
        &self.ledger
    }

    pub fn last_snapshot(&self) -> Option<&DeductionSnapshot<T>> {
        self.last_snapshot.as_ref()
    }

    pub fn removals(&self) -> &[Removal] {
        &self.removals
    }

    fn admit(&self, report: &PdrReport<T>) -> Result<(), EngineError> {
        report.validate(self.node_count)?;
        self.ledger.check_seq(report.seq)?;
        Ok(())
    }

    fn snapshot(
        &self,
        seq: u64,
        reports: &[&PdrReport<T>],
        d: Vec<T>,
        floor: T,
    ) -> DeductionSnapshot<T> {
        let est = estimate_errors(reports, &d, T::one(), floor);
        let e: Vec<T> = est.iter().map(|x| x.e).collect();
        DeductionSnapshot {
            report_seq: seq,
            interval: d
                .iter()
                .zip(&e)
                .map(|(&d, &e)| confidence_interval(d, e))
                .collect(),
            coverage: est.iter().map(|x| x.coverage).collect(),
            d,
            e,
            removals_so_far: self.removals.len(),
        }
    }

    /// Stores the snapshot, appends the report and evicts beyond capacity.
    fn accept(
        &mut self,
        report: PdrReport<T>,
        snapshot: DeductionSnapshot<T>,
    ) -> Result<&DeductionSnapshot<T>, EngineError> {
        self.ledger.append(report)?;
        Ok(self.last_snapshot.insert(snapshot))
    }
}

/// Smallest decrease in total error that counts as an improvement. Keeps
/// round-off in zero-residual systems from triggering removals.
fn improvement_tolerance<T: Scalar>() -> T {
    T::epsilon().sqrt()
}

/// Runs the reactive loop for one report. The report always ends up in the
/// ledger.
pub fn process_report<'s, T: Scalar>(
    state: &'s mut EngineState<T>,
    report: PdrReport<T>,
    config: &EngineConfig<T>,
) -> Result<&'s DeductionSnapshot<T>, EngineError> {
    state.admit(&report)?;
    let n = state.node_count;
    let scale = config.scale;
    let penalty = config.decision_penalty;
    let tol = improvement_tolerance::<T>();

    loop {
        let active: Vec<&PdrReport<T>> = state.ledger.iter().chain(once(&report)).collect();
        let d = deduce(active.iter().copied(), n, scale);
        let orig_total = total_error(&active, &d, penalty, scale.pdr_floor);

        // Ascending node order, strict comparison: ties go to the lowest id.
        let mut best: Option<(NodeId, T)> = None;
        for &node in &report.transit {
            if state.ledger.coverage(node) == 0 {
                continue;
            }
            let trimmed: Vec<&PdrReport<T>> = state
                .ledger
                .iter()
                .filter(|r| !r.contains(node))
                .chain(once(&report))
                .collect();
            let d_trim = deduce(trimmed.iter().copied(), n, scale);
            let total = total_error(&trimmed, &d_trim, penalty, scale.pdr_floor);
            if best.is_none_or(|(_, b)| total < b) {
                best = Some((node, total));
            }
        }

        match best {
            Some((node, total)) if total < orig_total - tol => {
                drop(active);
                let removed = state.ledger.remove_containing(node);
                state.removals.push(Removal {
                    trigger_seq: report.seq,
                    node,
                    removed: removed.len(),
                });
            }
            _ => {
                let snap = state.snapshot(report.seq, &active, d, scale.pdr_floor);
                drop(active);
                return state.accept(report, snap);
            }
        }
    }
}

/// Plain least squares: append, solve, report errors with penalty 1.
pub fn process_report_plain<'s, T: Scalar>(
    state: &'s mut EngineState<T>,
    report: PdrReport<T>,
    config: &EngineConfig<T>,
) -> Result<&'s DeductionSnapshot<T>, EngineError> {
    state.admit(&report)?;
    let active: Vec<&PdrReport<T>> = state.ledger.iter().chain(once(&report)).collect();
    let d = deduce(active.iter().copied(), state.node_count, config.scale);
    let snap = state.snapshot(report.seq, &active, d, config.scale.pdr_floor);
    drop(active);
    state.accept(report, snap)
}

/// An engine instance: configuration, variant and mutable state.
#[derive(Debug, Clone)]
pub struct Engine<T> {
    config: EngineConfig<T>,
    variant: Variant,
    state: EngineState<T>,
}

impl<T: Scalar> Engine<T> {
    /// Reactive engine bounded by `config.history`.
    pub fn reactive(config: EngineConfig<T>, node_count: usize) -> Self {
        let ledger = ReportLedger::new(config.history).expect("history validated");
        Engine {
            config,
            variant: Variant::Reactive,
            state: EngineState::new(node_count, ledger),
        }
    }

    /// Plain engine keeping every report.
    pub fn plain(config: EngineConfig<T>, node_count: usize) -> Self {
        Engine {
            config,
            variant: Variant::Plain,
            state: EngineState::new(node_count, ReportLedger::unbounded()),
        }
    }

    /// Plain engine that still honors `config.history`.
    pub fn plain_bounded(config: EngineConfig<T>, node_count: usize) -> Self {
        let ledger = ReportLedger::new(config.history).expect("history validated");
        Engine {
            config,
            variant: Variant::Plain,
            state: EngineState::new(node_count, ledger),
        }
    }

    pub fn new(variant: Variant, config: EngineConfig<T>, node_count: usize) -> Self {
        match variant {
            Variant::Reactive => Self::reactive(config, node_count),
            Variant::Plain => Self::plain(config, node_count),
        }
    }

    pub fn process(&mut self, report: PdrReport<T>) -> Result<&DeductionSnapshot<T>, EngineError> {
        match self.variant {
            Variant::Reactive => process_report(&mut self.state, report, &self.config),
            Variant::Plain => process_report_plain(&mut self.state, report, &self.config),
        }
    }

    pub fn config(&self) -> &EngineConfig<T> {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn state(&self) -> &EngineState<T> {
        &self.state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error_model::COVERAGE_THRESHOLD;

    fn rep(seq: u64, ids: &[usize], p: f64) -> PdrReport<f64> {
        PdrReport::new(seq, ids.iter().copied().map(NodeId), p, 500).unwrap()
    }

    fn config(penalty: f64, history: usize) -> EngineConfig<f64> {
        EngineConfig::new(penalty, history, LogScale::default()).unwrap()
    }

    #[test]
    fn first_report_is_accepted_with_full_penalty() {
        let mut eng = Engine::reactive(config(0.5, 10), 4);
        let snap = eng.process(rep(1, &[1, 2], 0.7)).unwrap().clone();
        assert_eq!(eng.state().ledger().len(), 1);
        assert!(eng.state().removals().is_empty());
        assert!(snap.e.iter().all(|&e| e == 1.0));
        assert_eq!(snap.coverage, vec![0, 1, 1, 0]);
    }

    #[test]
    fn rejects_invalid_reports_without_mutating() {
        let mut eng = Engine::reactive(config(0.5, 10), 3);
        eng.process(rep(2, &[1], 0.7)).unwrap();
        assert!(matches!(
            eng.process(rep(2, &[1], 0.7)),
            Err(EngineError::Ledger(_))
        ));
        assert!(matches!(
            eng.process(rep(3, &[5], 0.7)),
            Err(EngineError::Report(_))
        ));
        assert_eq!(eng.state().ledger().len(), 1);
    }

    #[test]
    fn config_validation() {
        assert!(EngineConfig::new(1.5, 10, LogScale::default()).is_err());
        assert!(EngineConfig::new(0.5, 0, LogScale::default()).is_err());
    }

    #[test]
    fn snapshot_penalizes_under_covered_nodes() {
        let mut eng = Engine::reactive(config(0.0, 50), 3);
        let mut seq = 0;
        for _ in 0..5 {
            seq += 1;
            eng.process(rep(seq, &[0], 0.8)).unwrap();
        }
        seq += 1;
        let snap = eng.process(rep(seq, &[1], 0.9)).unwrap();
        for node in 0..3 {
            if snap.coverage[node] <= COVERAGE_THRESHOLD {
                assert_eq!(snap.e[node], 1.0);
            }
        }
        assert!(snap.e[0] < 1e-9);
    }

    #[test]
    fn history_bound_holds() {
        let mut eng = Engine::reactive(config(0.85, 4), 3);
        for s in 1..=20 {
            eng.process(rep(s, &[(s % 3) as usize], 0.8)).unwrap();
            assert!(eng.state().ledger().len() <= 4);
            assert_eq!(eng.state().ledger().last_seq(), Some(s));
        }
    }

    #[test]
    fn removal_drops_reports_of_changed_node() {
        // node 0 used to forward 0.9, now 0.5; node 1 stable at 0.9.
        let mut eng = Engine::reactive(config(0.1, 100), 2);
        let mut seq = 0;
        for _ in 0..6 {
            seq += 1;
            eng.process(rep(seq, &[0], 0.9)).unwrap();
            seq += 1;
            eng.process(rep(seq, &[1], 0.9)).unwrap();
        }
        assert!(eng.state().removals().is_empty());
        seq += 1;
        eng.process(rep(seq, &[0], 0.5)).unwrap();
        let removals = eng.state().removals();
        assert_eq!(removals.len(), 1);
        assert_eq!(removals[0].node, NodeId(0));
        assert_eq!(removals[0].removed, 6);
        assert_eq!(eng.state().ledger().coverage(NodeId(0)), 1);
    }

    #[test]
    fn plain_never_removes() {
        let mut eng = Engine::plain(config(0.1, 100), 2);
        let mut seq = 0;
        for p in [0.9, 0.9, 0.9, 0.9, 0.5] {
            seq += 1;
            eng.process(rep(seq, &[0], p)).unwrap();
        }
        assert!(eng.state().removals().is_empty());
        assert_eq!(eng.state().ledger().len(), 5);
    }
}
