//! Geometric current-vortex sheet solver.
//!
//! Two ideal conducting fluids fill the slab `T^2 x (-1, 1)` and meet along a
//! free interface carrying jumps of tangential velocity and magnetic field.
//! This crate evolves the interface through its modified mean curvature and
//! recovers the bulk fields from vorticity and current by div-curl solves:
//!
//! - [`chart`], [`geometry`]: the reference chart, height fields, and the
//!   discrete differential geometry of the immersed interface.
//! - [`curvature`]: the modified curvature map `K[gamma] = kappa + a^2 gamma`
//!   and its numerical inverse.
//! - [`bulk`], [`elliptic`]: harmonic coordinates onto the moving fluid
//!   domains, harmonic extensions, and Dirichlet-Neumann operators.
//! - [`fields`]: div-curl solves, Leray projection, and the pressure
//!   decomposition.
//! - [`dynamics`]: the second-order evolution of the modified curvature,
//!   current/vorticity transport, wall fluxes, energy diagnostics.
//! - [`stability`]: Syrovatskij condition evaluators and the planar
//!   dispersion analyzer.

pub mod bulk;
pub mod chart;
pub mod cheb;
pub mod curvature;
pub mod dynamics;
pub mod elliptic;
pub mod error;
pub mod fft;
pub mod fields;
pub mod geometry;
pub mod grid;
pub mod stability;

pub use chart::{HeightField, ReferenceChart, VecField2};
pub use error::{Error, Result};
pub use grid::{ChartGrid, DerivScheme};
