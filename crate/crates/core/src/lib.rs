//! Ensemble Kalman filtering for particle-based simulations.
//!
//! Members of a particle ensemble generally live on different particle sets,
//! so their intensity vectors cannot be combined directly. The analysis is
//! instead written as a combination of *fields*,
//! `u_i^a(x) = u_i^f(x) + sum_j F_ji u_j^f(x)`, with a member-space correction
//! matrix `F` that only depends on predicted observations. Two filters build
//! particle approximations of the analyzed fields:
//!
//! * **Remesh-EnKF** projects every member onto a common grid, applies the
//!   classical analysis to the nodal values and regenerates a regular particle
//!   lattice ([`lagrangian_filters::remesh_enkf_step`]).
//! * **Part-EnKF** keeps each member's particles and re-fits their intensities
//!   to the analyzed field ([`lagrangian_filters::part_enkf_step`]).
//!
//! The crate also ships the two twin-experiment testbeds used to validate the
//! filters: a periodic 1D advection–diffusion problem ([`advection_diffusion_1d`])
//! and a 2D vortex-in-cell flow with a Lamb–Chaplygin dipole ([`vortex_2d`]),
//! plus the orchestration in [`harness`].

pub mod advection_diffusion_1d;
pub mod domain;
pub mod enkf;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod lagrangian_filters;
mod neighbors;
pub mod particle_field;
pub mod remeshing;
pub mod rng;
pub mod verify;
pub mod vortex_2d;

pub use domain::{Domain, Point};
pub use error::{Error, Result};
pub use kernels::{PseKernel, RedistributionKernel, SmoothingKernel};
pub use particle_field::ParticleSet;
pub use remeshing::{Boundary, UniformGrid};

// The guide's code blocks, compiled and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/particle-fields.md")]
    mod particle_fields {}
    #[doc = include_str!("../../../book/src/member-space-enkf.md")]
    mod member_space_enkf {}
    #[doc = include_str!("../../../book/src/remeshing.md")]
    mod remeshing {}
    #[doc = include_str!("../../../book/src/filters.md")]
    mod filters {}
    #[doc = include_str!("../../../book/src/advection-diffusion.md")]
    mod advection_diffusion {}
    #[doc = include_str!("../../../book/src/vortex.md")]
    mod vortex {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
