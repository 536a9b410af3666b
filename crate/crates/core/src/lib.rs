//! Warped products `I ×_w X` of graph-based metric measure spaces: product
//! graphs, the one-dimensional distance solver, discrete energies and the
//! verification suites built on them.

pub mod cli;
pub mod dsolver;
pub mod energy;
pub mod error;
pub mod product;
pub mod profile;
pub mod space;
pub mod verify;

pub use dsolver::{solve_d, warped_distance, GeodesicQuery, OracleKind, Resolution};
pub use energy::{bl_energy, gradient_field, time_discretize, EnergyMode, FunctionSpec, GridFunction};
pub use error::{Error, Result};
pub use product::{build_cartesian, build_warped, Stencil, WarpedProduct};
pub use profile::{WarpFn, WarpProfile};
pub use space::{generate, Generator, MetricMeasureSpace};
pub use verify::{run_suite, Suite, SuiteConfig, VerificationReport};
