//! Output synchronization of incrementally output-feedback passive Lur'e
//! systems over undirected graphs, with adaptive internal-model controllers
//! placed at nodes or edges.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod controllers;
pub mod exosystems;
pub mod graph;
pub mod linalg;
pub mod plants;
pub mod simulator;

pub use controllers::{Controller, ControllerConfig, ControllerError, ControllerFamily, LinearEdge, PassivityClass};
pub use exosystems::{ExoError, ExoModel, Exosystem, Generator};
pub use graph::{Graph, GraphError, GraphOperators};
pub use plants::{LurePlant, Nonlinearity, Plant, PlantError};
pub use simulator::{simulate, ClosedLoop, InitialConditions, SimConfig, SimError, Trajectory};
