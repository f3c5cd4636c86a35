//! Solver and convergence-study harness for the subdiffusion equation
//! `d_t^alpha u - Laplace u = f` with a Caputo derivative of order
//! `alpha` in `(0, 1)`.
//!
//! Time discretization is a fractional Crank-Nicolson scheme built on
//! backward-Euler convolution quadrature, with optional corrections of the
//! first one or two steps that restore second-order accuracy for rough data.
//! Space discretization is conforming P1 finite elements on uniform meshes of
//! the unit interval and the unit square.
//!
//! The crate is organized by role:
//!
//! - [`cq`]: convolution quadrature weights, the scheme's generating symbols,
//!   and numerical certification sweeps for the scalar estimates behind the
//!   error analysis.
//! - [`fem`]: P1 spaces, mass/stiffness assembly, projections and norms.
//! - [`oracles`]: closed-form reference solutions (Mittag-Leffler function,
//!   fractional ODE power rule), the catalog of study problems, and fine-step
//!   reference runs.
//! - [`stepper`]: the time-stepping loop in matrix and scalar form.
//! - [`harness`]: convergence and time-decay studies with CSV output.
//!
//! The `subdiff` binary wraps the harness in a small CLI.

pub mod cq;
pub mod fem;
pub mod harness;
pub mod oracles;
pub mod stepper;

pub use cq::{be_cq_weights, beta_tau, mu, mu0, CqWeights};
pub use fem::{build_interval_space, build_square_space, FemSpace, GridFunction};
pub use harness::{run_convergence_study, run_time_decay_study, DecaySpec, ErrorTable, StudySpec};
pub use oracles::{catalog, mittag_leffler, ode_power_solution, ProblemSpec};
pub use stepper::{advance, advance_final, advance_scalar, SchemeConfig, Trajectory, Variant};
