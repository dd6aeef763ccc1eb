//! Multi-vortex solutions of the reduced SU(N)×U(1) Chern–Simons–Higgs
//! vortex system on the plane and on doubly periodic domains.

pub mod background;
pub mod coupling;
pub mod diagnostics;
pub mod error;
mod fft;
pub mod lattice;
mod optim;
pub mod mountain_pass;
pub mod periodic;
pub mod planar;
pub mod solution;
mod system;

pub use error::{Result, VortexError};
