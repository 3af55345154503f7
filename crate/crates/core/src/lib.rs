//! Fourier-Galerkin solver for the 3D incompressible Navier-Stokes
//! equations on a periodic box, plus a statistical-solutions toolkit:
//! empirical time-average measures, cylindrical test functionals, Liouville
//! residuals, and one verifier per explicit a-priori bound.

pub mod dynamics;
pub mod error;
pub mod io;
pub mod measures;
pub mod spectral;
pub mod trajectory;
pub mod verify;

pub use error::{Error, Result};
pub use spectral::{
    bilinear_b, estimate_shape_constants, leray_project, trilinear_b, ConstantProvenance,
    FlowParameters, Norms, ShapeConstants, SpectralField, WaveVector, WaveVectorLattice,
};
pub use trajectory::{AuditMode, AuditReport, Ensemble, Sample, Trajectory};
