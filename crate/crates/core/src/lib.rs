//! Deduction of per-node forwarding trustworthiness from end-to-end packet
//! delivery reports, with a session-level simulator and experiment harness.
//!
//! The deduction math is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which the simulator and harness use.

pub mod config;
pub mod engine;
pub mod error_model;
pub mod harness;
pub mod io;
pub mod ledger;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod sim;
pub mod solver;

pub use engine::{
    process_report, process_report_plain, DeductionSnapshot, Engine, EngineConfig, EngineError,
    EngineState, Removal, Variant,
};
pub use error_model::{
    confidence_interval, estimate_error, estimate_errors, predicted_pdr, total_error, ErrorBranch,
    ErrorEstimate, Interval, COVERAGE_THRESHOLD,
};
pub use ledger::{LedgerError, ReportLedger};
pub use model::{expected_pdr, GroundTruth, NodeId, PdrReport, ReportError};
pub use scalar::Scalar;
pub use solver::{
    build_system, deduce, log_transform, solve_constrained, to_behavior, IncidenceSystem,
    LogBehavior, LogScale, SolverError,
};

pub type Report = PdrReport<f64>;
pub type Ledger = ReportLedger<f64>;
pub type Truth = GroundTruth<f64>;
pub type Snapshot = DeductionSnapshot<f64>;
pub type Config = EngineConfig<f64>;
pub type Deducer = Engine<f64>;
pub type Scale = LogScale<f64>;
pub type System = IncidenceSystem<f64>;

pub type Report32 = PdrReport<f32>;
pub type Config32 = EngineConfig<f32>;
pub type Deducer32 = Engine<f32>;
