//! Fourier lattice representation of the periodic function spaces H, V and
//! D(A), the Stokes operator, the Leray projector, the bilinear/trilinear
//! forms, norms, and the non-dimensional shape constants.

mod bilinear;
mod constants;
mod field;
mod lattice;
mod params;
pub(crate) mod transform;

pub use bilinear::{bilinear_b, trilinear_b};
pub use constants::{estimate_shape_constants, ConstantProvenance, ShapeConstants};
pub use field::{leray_project, Norms, SpectralField, HERMITIAN_TOL};
pub use lattice::{WaveVector, WaveVectorLattice};
pub use params::FlowParameters;
