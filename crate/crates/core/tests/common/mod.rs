//! Independent oracles and generators shared by the integration and
//! acceptance tests.
#![allow(dead_code)]

pub mod anomaly_gen;
pub mod est_oracle;
pub mod exec_ref;
pub mod fir_oracle;
pub mod iso_oracle;
pub mod sched_oracle;
