//! Numerical laboratory for a viscous cavity flow coupled to a clamped
//! elastic plate.
//!
//! A Stokes flow fills the unit box; the top face is an elastic plate
//! (Euler-Bernoulli for `rho = 0`, Kirchhoff with rotational inertia for
//! `rho > 0`) driven by the fluid pressure, while the fluid sees the plate
//! velocity as its normal boundary trace. The crate discretizes the coupled
//! system on a staggered grid, realizes the evolution as a matrix semigroup
//! generator on the constrained energy space, and provides the analysis
//! instruments around it: constructive inversion, resolvent sweeps along
//! the imaginary axis, spectral decay certificates, structure-preserving
//! time integration, and LQR control synthesis.
//!
//! Start from [`generator::Generator::assemble`], or run the binary
//! (`stokes-plate run <config.toml>`) and the `examples/` directory for
//! end-to-end workflows.

pub mod error;
pub mod geometry;
pub mod linalg;
pub mod state;
pub mod operators;
pub mod model;
pub mod pressure;
pub mod generator;
pub mod stokes;
pub mod sim;
pub mod spectral;
pub mod lqr;
pub mod resolvent;

pub use error::{Error, Result};
pub use generator::{apply_generator, assemble_generator, project_to_state, Generator};
pub use geometry::{build_grid, classify_boundary, BoundaryPatch, DimMode, GeometryConfig, GridTopology};
pub use model::Discretization;
pub use pressure::{PressureMaps, RobinSolver};
pub use state::{ComplexState, State};
