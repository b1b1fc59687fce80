//! Collective signing: Schnorr multisignatures aggregated over spanning
//! trees, with exception handling, verification predicates, key trees, a
//! discrete-event simulator and a batching timestamp service.

pub mod group;
pub mod merkle;
pub mod participation;
pub mod roster;
pub mod simnet;
pub mod multisig;
pub mod topology;
pub mod engine;
pub mod timestamp;
mod wire;
