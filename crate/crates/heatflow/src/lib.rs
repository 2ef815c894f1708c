//! Numerical monotonicity checks: heat flow of geometric data, sliding
//! gaussians, sliding log-concave kernels and heat-extension norms.
//!
//! Every routine returns a [`MonotonicityTrace`] whose samples carry a
//! discretization error estimate, and [`assert_monotone`] checks the trace
//! against a direction using those estimates as slack.

mod extension;
mod geometric;
mod grid;
mod kernel;
mod quad;
mod sliding;
mod trace;

pub use extension::{heat_extension_norm_trace, point_mass_constant};
pub use geometric::{evolve_geometric_heat, HeatOptions};
pub use grid::{Bump, GridField};
pub use kernel::{KernelKind, KernelSpec, PointMassList, TabulatedKernel};
pub use sliding::{center_of_mass_divergence, log_concave_trace, sliding_gaussian_trace};
pub use trace::{assert_monotone, default_times, geometric_times, CheckResult, Direction, MonotonicityTrace};
