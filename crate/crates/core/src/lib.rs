//! Stochastic lifelong multi-agent path finding over a shared wireless link.

pub mod downlink;
pub mod execution;
pub mod harness;
pub mod map;
pub mod policy;
pub mod radio;
pub mod rng;
pub mod tasks;
pub mod uplink;
