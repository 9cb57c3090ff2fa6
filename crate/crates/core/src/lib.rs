//! Desk-scale federated graph-learning simulator.
//!
//! The crate trains small GCN/GAT graph classifiers across simulated
//! clients, runs a two-stage distributed feature-perturbation attack
//! ("shifters") from a subset of malicious clients, and evaluates it under
//! FedAvg, Krum, Bulyan and FoolsGold aggregation.

pub mod autodiff;
pub mod rng;
pub mod graph;
pub mod checkpoint;
pub mod gnn;
pub mod attack;
pub mod federation;
pub mod experiments;
