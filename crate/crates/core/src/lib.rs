//! Sparse, power-efficient sensor subnetworks built on Poisson point fields.
//!
//! The crate samples a Poisson field, builds the unit-disk graph UDG(2,λ) or the
//! k-nearest-neighbour graph NN(2,k) on it, tiles the plane, and wires a sparse
//! representative/relay subnetwork inside the good tiles. Good tiles are coupled
//! to open sites of a Z² site-percolation lattice, which is then used for
//! threshold estimation, routing with probe accounting, and the stretch and
//! coverage experiments.
//!
//! Module map:
//!
//! * [`geom`]: points, windows, Poisson sampling and the uniform-grid index.
//! * [`graph`]: base graphs, components and shortest paths.
//! * [`tiling`]: tiles and the region geometry of both constructions.
//! * [`subnet`]: tile classification, election and subnet wiring.
//! * [`lattice`]: coupling, cluster statistics and threshold search.
//! * [`routing`]: x-y routing with BFS repair on the coupled lattice.
//! * [`experiments`]: stretch/coverage drivers, configuration and reports.

pub mod dsu;
pub mod error;
pub mod experiments;
pub mod geom;
pub mod graph;
pub mod lattice;
pub mod routing;
pub mod stats;
pub mod subnet;
pub mod tiling;

pub use error::{Result, SensError};
pub use geom::{Point, PointSet, SpatialIndex, Window};
pub use graph::{AdjGraph, EdgeKind};
pub use lattice::{ClusterStats, LatticeWindow};
pub use routing::RouteTrace;
pub use subnet::{SubnetGraph, TileStatus};
pub use tiling::{Direction, ModelKind, RegionLabel, RegionSet, TileGeom, TileId};




