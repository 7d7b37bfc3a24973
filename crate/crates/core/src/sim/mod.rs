//! Session-level network simulator producing delivery reports.

pub mod experiment;
pub mod session;
pub mod topology;

pub use experiment::{
    run_experiment, ChangeEvent, ChangeStats, Experiment, ExperimentConfig, Observation, PathTable,
    SimError, TopologySource,
};
pub use session::{
    maybe_change_ift, run_session, ChangeModel, LossProcess, ProcessError, SessionSpec,
};
pub use topology::{
    build_topology, radius_for_mean_degree, select_path, Topology, TopologyError, TopologySpec,
};
