//! Numerical laboratory for the one-dimensional focusing nonlinear
//! Klein-Gordon equation u_tt - u_xx + u = |u|^{p-1}u near its ground state.
//!
//! The crate provides, at desk scale:
//!
//! - a parity-exact pseudospectral discretization of even data ([`grid`]),
//! - the soliton Q with its energies, K-functionals, the λ/γ decomposition,
//!   distance d_σ and sign functional ([`soliton`]),
//! - spectral theory of the linearized operators L±: eigenpairs, Jost
//!   solutions, resonance detection, the diagonal spectral measure, the
//!   distorted Fourier transform, Klein-Gordon propagation in the distorted
//!   frame, a local-decay probe, and the intertwining operator ([`spectral`]),
//! - a reversible Strang integrator for the full equation with blowup
//!   detection and convexity/virial monitors ([`evolve`]),
//! - trajectory classification (blowup / scatter / trapped), the nine-set
//!   scan, ejection-rate fits and the one-pass audit ([`classify`]),
//! - fixed-point construction of center-stable data, threshold shooting and
//!   scattering data ([`manifold`]).

pub mod classify;
pub mod evolve;
pub mod grid;
pub mod manifold;
pub mod params;
pub mod soliton;
pub mod spectral;

pub use grid::{EvenField, Grid, GridError, OddField, StateVec};
pub use params::{ModelParams, ParamError, Thresholds};
