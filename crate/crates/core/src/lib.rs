//! Numerical laboratory for time-periodic Landau-Lifshitz-Gilbert dynamics of
//! small, soft ferromagnetic particles.
//!
//! The pipeline is: build a masked [`grid::Grid`] for the particle, compute
//! the stray-field kernel ([`demag`]), minimize the rescaled micromagnetic
//! energy ([`minimize`]), integrate the LLG flow ([`llg`]), analyse the
//! linearization about the minimizer ([`linop`]) and finally shoot for
//! periodic orbits under a small periodic applied field ([`periodic`]).

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod demag;
pub mod energy;
pub mod error;
pub mod grid;
pub mod krylov;
pub mod linop;
pub mod llg;
pub mod minimize;
pub mod periodic;
pub mod rng;
pub mod snapshot;
pub mod vec3;

pub use demag::{build_kernel, demag_tensor, shape_condition, DemagKernel, DemagTensor};
pub use energy::{
    effective_field, el_residual, energy, tangent_project, ExternalFieldSpec, FieldKind, SimParams,
};
pub use error::{Error, Result};
pub use grid::{Grid, ShapeKind, ShapeSpec, VectorField};
pub use linop::{spectrum, Linearization, SpectrumReport, TangentFrame};
pub use llg::{evolve, llg_rhs, LlgMode, Sampling, Trajectory};
pub use minimize::{minimize, MinimizeOptions, MinimizerResult};
pub use periodic::{continuation, shoot, PeriodicOrbit, ShootOptions};
