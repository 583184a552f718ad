//! Planning and estimation core for collaborative channel search with
//! autonomous surface vehicles.
//!
//! Everything in this crate is `no_std` + `alloc`: ground-truth bathymetry
//! grids, per-vehicle Gaussian process regression, decentralized Kalman
//! consensus, the proposal-based channel search planner, the myopic MDP and
//! lawnmower baselines, and the discrete-time mission kernel that ties them
//! together. File formats, the experiment harness and the CLI live in the
//! `chansearch` companion crate.
//!
//! Units follow the field convention: depths are in feet, distances in
//! meters. The only place the two meet is the kernel length scale.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod consensus;
pub mod gpr;
pub mod grid;
pub mod lawnmower;
pub mod linalg;
pub mod mdp;
pub mod pbacs;
pub mod rng;
pub mod scenario;
pub mod sim;

mod math;

pub use consensus::{CommGraph, ConsensusConfig, ConsensusState};
pub use gpr::{BeliefMap, FastGpr, FastGprConfig, KernelConfig, KernelForm, Measurement};
pub use grid::{CellIndex, Connectivity, GridGeometry, Point};
pub use pbacs::{CandidatePath, PbacsAgent, PbacsConfig, SearchGrid};
pub use scenario::{BathyScenario, ChannelShape, MirrorAxis};
pub use sim::{MissionConfig, MissionRecord, PlannerKind, SimConfig};
