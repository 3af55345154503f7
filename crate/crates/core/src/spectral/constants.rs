use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bilinear::trilinear_b;
use super::field::SpectralField;
use super::lattice::WaveVectorLattice;
use crate::error::{Error, Result};

/// Where the shape constants came from. The paper only states that c1 and c2
/// depend on the shape of the domain, so sampled values are lower bounds and
/// every bound verifier reports parametrically in them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstantProvenance {
    UserSupplied,
    EmpiricalLowerBound,
}

/// Non-dimensional shape constants of the periodic box:
/// c1 from Agmon's inequality, c2 from the trilinear estimate
/// |b(u,u,Au)| <= (nu/4)|Au|^2 + (c2/nu^3)||u||^6, and the derived
/// c3 = 2/3 + c2^(1/3), c4 = max(1, c2^(3/2)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub provenance: ConstantProvenance,
}

impl ShapeConstants {
    pub fn new(c1: f64, c2: f64, provenance: ConstantProvenance) -> Result<Self> {
        if !(c1 > 0.0) || !c1.is_finite() {
            return Err(Error::InvalidParameter(format!("c1 must be positive, got {c1}")));
        }
        if !(c2 >= 1.0) || !c2.is_finite() {
            return Err(Error::InvalidParameter(format!("c2 must be >= 1, got {c2}")));
        }
        Ok(Self {
            c1,
            c2,
            c3: 2.0 / 3.0 + c2.cbrt(),
            c4: c2.powf(1.5).max(1.0),
            provenance,
        })
    }

    pub fn user_supplied(c1: f64, c2: f64) -> Result<Self> {
        Self::new(c1, c2, ConstantProvenance::UserSupplied)
    }

    /// Enlarges c1 to cover a newly observed Agmon ratio; used by verifiers
    /// that report violations as refinements rather than failures.
    pub fn refine_c1(&self, observed: f64) -> Self {
        let mut out = *self;
        if observed > out.c1 {
            out.c1 = observed;
        }
        out
    }
}

/// Empirically estimates lower bounds for the shape constants by sampling
/// random divergence-free fields: c1 is the largest observed Agmon ratio
/// |u|_inf / (||u||^(1/2) |Au|^(1/2)), and c2 the smallest admissible value
/// (>= 1) making the trilinear estimate hold over the samples at nu = 1.
pub fn estimate_shape_constants(
    lattice: Arc<WaveVectorLattice>,
    sample_count: usize,
    seed: u64,
) -> Result<ShapeConstants> {
    if sample_count == 0 {
        return Err(Error::InvalidParameter("sample count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c1: f64 = 0.0;
    let mut c2: f64 = 1.0;
    let mut usable = 0usize;
    for _ in 0..sample_count {
        let u = SpectralField::random_div_free(lattice.clone(), None, &mut rng);
        let norms = u.norms();
        if norms.h1 == 0.0 || norms.da == 0.0 {
            continue;
        }
        usable += 1;
        c1 = c1.max(norms.linf / (norms.h1.sqrt() * norms.da.sqrt()));
        let b = trilinear_b(&u, &u, &u.stokes_apply())?.abs();
        // |b| <= |Au|^2/4 + c2 ||u||^6 at the reference nu = 1.
        let needed = (b - 0.25 * norms.da * norms.da) / norms.h1.powi(6);
        c2 = c2.max(needed);
    }
    if usable == 0 {
        return Err(Error::DegenerateSamples);
    }
    ShapeConstants::new(c1, c2, ConstantProvenance::EmpiricalLowerBound)
}
