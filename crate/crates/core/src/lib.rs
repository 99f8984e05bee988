//! Numerical homogenization of slow viscous flow and solute transport in a
//! thin, periodically perforated layer.
//!
//! The microscopic configuration is a plate-like domain of thickness `2·ε^α`
//! (with `0 < α < 1`) perforated by an `ε`-periodic array of solid
//! inclusions; the limit `ε → 0` collapses the layer onto a hypersurface
//! while the pore structure homogenizes. This crate implements both sides of
//! that limit and the machinery to compare them:
//!
//! * rasterized periodic unit-cell geometry and thin-layer tiling
//!   ([`geometry`]),
//! * staggered (MAC) grids, masked fields, and discrete operators
//!   ([`discrete`]),
//! * sparse conjugate-gradient and pressure-Schur saddle solvers
//!   ([`linsolve`]),
//! * the Stokes and diffusion cell problems with their effective
//!   permeability and diffusion tensors ([`cell_stokes`], [`cell_diffusion`]),
//! * the limiting Darcy and advection–diffusion models on the rescaled
//!   unit-thickness domain ([`macro_darcy`], [`macro_transport`]),
//! * direct microscale reference solvers on the thin perforated layer
//!   ([`micro_reference`]), and
//! * a verification harness that sweeps `ε`, fits scaling laws, and measures
//!   two-scale reconstruction errors ([`convergence`]).
//!
//! The crate is `no_std` (it uses `alloc`): all numerics are portable, and
//! IO, configuration, and orchestration live in the companion CLI crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cell_diffusion;
pub mod cell_stokes;
pub mod convergence;
pub mod discrete;
pub mod geometry;
pub mod linsolve;
pub mod macro_darcy;
pub mod macro_transport;
pub mod micro_reference;

pub(crate) mod indexutil;
pub(crate) mod interp;
pub(crate) mod mac;

/// Exact rational scalar used for scale parameters (`ε`, `α`, grid extents).
pub type Frac = num_rational::Ratio<i64>;

/// Converts an exact rational to the nearest `f64`.
pub fn frac_to_f64(x: Frac) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}
