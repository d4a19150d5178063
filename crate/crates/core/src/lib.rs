//! Simulation-testing toolkit for small uncrewed aerial systems: scenario
//! generation from incident reports, validated mission and simulator scripts,
//! and flight-log analytics.

pub mod analytics;
pub mod evaluation;
pub mod fixtures;
pub mod flightlog;
pub mod gateway;
pub mod knowledge;
pub mod orchestrator;
pub mod prompting;
pub mod scenario;
pub mod scriptgen;
pub mod server;
pub mod validation;
