//! Content-centric SDN caching: network model, placement optimizer,
//! request-driven simulator, controller analytics and experiment harness.

pub mod analytics;
pub mod experiment;
pub mod net_model;
pub mod optimizer;
pub mod simnet;
