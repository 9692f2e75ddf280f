//! Autonomy stack for a simulated habitat: power simulation, a
//! publish/subscribe bus, load scheduling, plan execution, fault isolation
//! and impacts, mode estimation and anomaly detection, tied together by an
//! orchestrator and a scenario harness.

pub mod anomaly;
pub mod bus;
pub mod diagnosis;
pub mod estimator;
pub mod executive;
pub mod expr;
pub mod habitat;
pub mod impacts;
pub mod isolation;
pub mod orchestrator;
pub mod scenario;
pub mod scheduler;
pub mod sections;
pub mod sim;
