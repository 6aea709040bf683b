//! Time-domain acoustic scattering by clusters of small sound-soft holes.
//!
//! The crate is organised around the point-source model of a perforated
//! background: every hole acts as a monopole whose strength is its
//! electrostatic capacitance times a causal signal, and the signals are
//! coupled through a retarded (delayed) Foldy–Lax system.
//!
//! - [`signal`]: causal waveforms and uniformly sampled traces.
//! - [`cluster`]: hole geometry, admissibility margins, lattice layouts.
//! - [`capacitance`]: analytic and panel-method capacitances.
//! - [`retarded`]: assembly and causal marching of the retarded system.
//! - [`fields`]: incident, scattered and total fields at probes and grids.
//! - [`oracle`]: exact single-sphere reference for uniform boundary data.
//! - [`medium`]: effective-medium volume integral equation on voxels.
//! - [`design`]: mass density / capacitance density correspondence.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacitance;
pub mod cluster;
pub mod design;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod io;
pub mod medium;
pub mod oracle;
pub mod rates;
pub mod retarded;
pub mod signal;

pub use error::{Error, Result};
pub use geometry::{AxisBox, Vec3};
