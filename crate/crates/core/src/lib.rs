//! Core library for user-incentive rebalancing of dockless bike-share fleets.
//!
//! The crate is organized around a minute-resolution simulator of riders,
//! bikes, and a pricing budget ([`sim`]), six pricing policies ([`agents`]),
//! an exact offline optimization baseline ([`offlineopt`]), and the shared
//! domain types they exchange ([`grid`], [`types`]).
//!
//! Numeric kernels (the neural toolkit in [`nn`], the LP/ILP solver in
//! [`offlineopt`], and the divergence metrics in [`metrics`]) are generic
//! over the scalar type via [`scalar::Real`]; the simulator, agents, and
//! experiment harness use the concrete [`Scalar`] alias below.

pub mod agents;
pub mod grid;
pub mod ingest;
pub mod metrics;
pub mod nn;
pub mod offlineopt;
pub mod scalar;
pub mod sim;
pub mod types;

/// Concrete scalar used by the simulator, the agents, and the harness.
pub type Scalar = f64;

/// Dense feed-forward stack over the concrete scalar.
pub type Mlp = nn::Mlp<Scalar>;
/// GRU cell over the concrete scalar.
pub type Gru = nn::Gru<Scalar>;
/// Adam optimizer state over the concrete scalar.
pub type Adam = nn::Adam<Scalar>;
/// Named parameter snapshot over the concrete scalar.
pub type ParamBlock = nn::ParamBlock<Scalar>;

/// Offline optimization instance over the concrete scalar.
pub type IlpInstance = offlineopt::IlpInstance<Scalar>;
