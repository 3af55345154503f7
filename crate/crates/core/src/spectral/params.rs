use std::sync::Arc;

use super::field::SpectralField;
use super::lattice::WaveVectorLattice;
use crate::error::{Error, Result};

/// Viscosity, geometry and forcing of a run, with the derived
/// non-dimensional numbers: the Grashof number G = |f| / (nu^2 lambda_1^(3/4))
/// and the absorbing-ball radius R0 = |f| / (nu lambda_1).
#[derive(Debug, Clone)]
pub struct FlowParameters {
    nu: f64,
    forcing: SpectralField,
    f_l2: f64,
    lambda_1: f64,
    grashof: f64,
    r0: f64,
}

impl FlowParameters {
    pub fn new(nu: f64, forcing: SpectralField) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "viscosity must be positive, got {nu}"
            )));
        }
        let div = forcing.max_divergence();
        if div > 1e-10 * forcing.max_coeff().max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "forcing must be divergence-free (max |k.f(k)| = {div:.3e}); project it first"
            )));
        }
        let lambda_1 = forcing.lattice().lambda_1();
        let f_l2 = forcing.norm_l2();
        Ok(Self {
            nu,
            f_l2,
            lambda_1,
            grashof: f_l2 / (nu * nu * lambda_1.powf(0.75)),
            r0: f_l2 / (nu * lambda_1),
            forcing,
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn forcing(&self) -> &SpectralField {
        &self.forcing
    }

    pub fn lattice(&self) -> &Arc<WaveVectorLattice> {
        self.forcing.lattice()
    }

    pub fn f_l2(&self) -> f64 {
        self.f_l2
    }

    pub fn lambda_1(&self) -> f64 {
        self.lambda_1
    }

    pub fn grashof(&self) -> f64 {
        self.grashof
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }
}
