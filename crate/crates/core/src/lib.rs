//! Packet-switched QKD network simulation and finite-key key-rate analysis.
//!
//! The pipeline is: simulate frames through a network ([`netsim`]), reduce
//! the run to per-pair channel statistics ([`chanstats`]), then optimize the
//! decoy-state parameters for each pair ([`optimizer`], [`keyrate`]).
//! [`scenario`] ties these together into reproducible parameter sweeps.

pub mod chanstats;
pub mod keyrate;
pub mod netsim;
pub mod optimizer;
pub mod scenario;
pub mod topology;
