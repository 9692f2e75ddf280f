//! Library side of the `vsm` binary: the operator gateway and the
//! gateway-driven run loop.

pub mod gateway;
