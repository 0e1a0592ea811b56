//! Potts model and FK random-cluster laboratory.
//!
//! Layers, bottom-up:
//! - [`lattice`]: scaled boxes `Ω_n`, boundary parts and their discretization.
//! - [`rng`]: addressable random streams.
//! - [`gibbs`]: configurations, energies, Gibbs and FK weights, heat bath.
//! - [`exact`]: exhaustive enumeration on tiny lattices.
//! - [`sampler`]: Swendsen–Wang and single-bond FK dynamics.
//! - [`cluster`]: cluster labeling and connectivity estimators.
//! - [`phase`]: block grids, test events, phase partitions and their functionals.
//! - [`tau`]: surface tension models and the cut-event estimator.
//! - [`wulff`], [`anneal`], [`ensemble`]: the variational side.
//! - [`io`]: snapshot and partition text formats.

pub mod anneal;
pub mod cluster;
pub mod ensemble;
pub mod exact;
pub mod gibbs;
pub mod io;
pub mod lattice;
pub mod phase;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod tau;
pub mod wulff;

pub use gibbs::{BondConfig, ModelParams, SpinConfig};
pub use lattice::{discretize_boundary, BoundaryAssignment, BoundarySpec, Lattice};
pub use phase::{BlockGrid, PhasePartition};
pub use rng::RngStream;
pub use tau::TauModel;
