use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lattice::{WaveVector, WaveVectorLattice};
use super::transform;
use crate::error::{Error, Result};

/// Tolerance for the Hermitian-symmetry check on raw coefficient input.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// The four norms of a velocity field: |u|_{L2}, ||u||_{H1}, |Au|_{L2} and
/// |u|_{L-infinity}. Inner products carry the box volume, so |u|_{L2}
/// matches the continuum integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l2: f64,
    pub h1: f64,
    pub da: f64,
    pub linf: f64,
}

/// Divergence-free, zero-mean velocity field stored as truncated Fourier
/// coefficients, three complex cubes (one per component) with the last axis
/// contiguous. Immutable after construction in all solver paths.
#[derive(Clone)]
pub struct SpectralField {
    lattice: Arc<WaveVectorLattice>,
    /// Length 3 * n^3: component c at flat slot i lives at c * n^3 + i.
    coeffs: Vec<Complex64>,
}

impl std::fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralField")
            .field("n", &self.lattice.resolution())
            .field("l2", &self.norm_l2())
            .finish()
    }
}

impl SpectralField {
    pub fn zero(lattice: Arc<WaveVectorLattice>) -> Self {
        let len = 3 * lattice.grid_len();
        Self {
            lattice,
            coeffs: vec![Complex64::default(); len],
        }
    }

    /// Builds a field from raw per-mode coefficients. Rejects non-Hermitian
    /// input and zeroes every inactive slot (the mean mode and the Nyquist
    /// planes). The input is *not* projected; see [`leray_project`].
    pub fn from_raw(lattice: Arc<WaveVectorLattice>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != 3 * lattice.grid_len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} coefficients, got {}",
                3 * lattice.grid_len(),
                coeffs.len()
            )));
        }
        let mut field = Self { lattice, coeffs };
        field.zero_inactive();
        let asym = field.hermitian_asymmetry();
        let scale = field.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if asym > HERMITIAN_TOL * scale.max(1.0) {
            return Err(Error::NonHermitian {
                max_asymmetry: asym,
            });
        }
        field.hermitize();
        Ok(field)
    }

    pub fn lattice(&self) -> &Arc<WaveVectorLattice> {
        &self.lattice
    }

    pub fn same_lattice(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.lattice, &other.lattice) || *self.lattice == *other.lattice
    }

    pub(crate) fn component(&self, c: usize) -> &[Complex64] {
        let len = self.lattice.grid_len();
        &self.coeffs[c * len..(c + 1) * len]
    }

    pub(crate) fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        let len = self.lattice.grid_len();
        &mut self.coeffs[c * len..(c + 1) * len]
    }

    /// Coefficient of component `c` at wavevector `k` (zero off-lattice).
    pub fn coeff(&self, c: usize, k: WaveVector) -> Complex64 {
        if k.iter().any(|&ki| ki.abs() > self.lattice.k_active()) {
            return Complex64::default();
        }
        self.component(c)[self.lattice.index_of(k)]
    }

    /// Sets the Hermitian pair {k, -k} of component `c`. No projection.
    /// Signed zeros are normalized so round trips stay bit-exact.
    pub fn set_mode(&mut self, c: usize, k: WaveVector, value: Complex64) -> Result<()> {
        if !self.lattice.is_active(k) {
            return Err(Error::InvalidParameter(format!(
                "wavevector {k:?} is not active on this lattice"
            )));
        }
        let idx = self.lattice.index_of(k);
        let idx_conj = self.lattice.index_of([-k[0], -k[1], -k[2]]);
        let normalize = |z: Complex64| Complex64::new(z.re + 0.0, z.im + 0.0);
        let comp = self.component_mut(c);
        comp[idx] = normalize(value);
        comp[idx_conj] = normalize(value.conj());
        Ok(())
    }

    fn zero_inactive(&mut self) {
        let len = self.lattice.grid_len();
        for c in 0..3 {
            for idx in 0..len {
                if !self.lattice.active_at(idx) {
                    self.coeffs[c * len + idx] = Complex64::default();
                }
            }
        }
    }

    /// Max |c(k) - conj(c(-k))| over active modes.
    pub fn hermitian_asymmetry(&self) -> f64 {
        let mut max = 0.0_f64;
        for k in self.lattice.canonical_half() {
            let kc = [-k[0], -k[1], -k[2]];
            for c in 0..3 {
                let d = (self.coeff(c, k) - self.coeff(c, kc).conj()).norm();
                max = max.max(d);
            }
        }
        max
    }

    /// Enforces exact Hermitian symmetry by averaging each pair.
    pub(crate) fn hermitize(&mut self) {
        let lat = Arc::clone(&self.lattice);
        for k in lat.canonical_half() {
            let kc = [-k[0], -k[1], -k[2]];
            let idx = lat.index_of(k);
            let idx_c = lat.index_of(kc);
            for c in 0..3 {
                let comp = self.component_mut(c);
                let avg = 0.5 * (comp[idx] + comp[idx_c].conj());
                comp[idx] = avg;
                comp[idx_c] = avg.conj();
            }
        }
    }

    /// Applies the Leray projector slot-wise: removes the component of
    /// u^(k) parallel to the dimensional wavevector. Idempotent and
    /// orthogonal in the L2 inner product; gradients are in its kernel.
    pub fn leray_projected(&self) -> Self {
        let mut out = self.clone();
        out.leray_project_in_place();
        out
    }

    pub(crate) fn leray_project_in_place(&mut self) {
        let lat = Arc::clone(&self.lattice);
        let len = lat.grid_len();
        for idx in 0..len {
            if !lat.active_at(idx) {
                continue;
            }
            let k = lat.wavevector_of(idx);
            let kd = lat.k_dim(k);
            let k2 = lat.lambda_at(idx);
            let u = [
                self.coeffs[idx],
                self.coeffs[len + idx],
                self.coeffs[2 * len + idx],
            ];
            let dot = u[0] * kd[0] + u[1] * kd[1] + u[2] * kd[2];
            let s = dot / k2;
            self.coeffs[idx] -= s * kd[0];
            self.coeffs[len + idx] -= s * kd[1];
            self.coeffs[2 * len + idx] -= s * kd[2];
        }
    }

    /// Max |k . u^(k)| over active modes, a divergence diagnostic.
    pub fn max_divergence(&self) -> f64 {
        let lat = &self.lattice;
        let len = lat.grid_len();
        let mut max = 0.0_f64;
        for idx in 0..len {
            if !lat.active_at(idx) {
                continue;
            }
            let kd = lat.k_dim(lat.wavevector_of(idx));
            let dot = self.coeffs[idx] * kd[0]
                + self.coeffs[len + idx] * kd[1]
                + self.coeffs[2 * len + idx] * kd[2];
            max = max.max(dot.norm());
        }
        max
    }

    /// Stokes operator: coefficient at k multiplied by lambda(k). On the
    /// periodic lattice this is -Laplacian restricted to divergence-free
    /// fields, and (Au, u)_{L2} = ||u||_{H1}^2.
    pub fn stokes_apply(&self) -> Self {
        let mut out = self.clone();
        let len = self.lattice.grid_len();
        for c in 0..3 {
            for idx in 0..len {
                out.coeffs[c * len + idx] *= self.lattice.lambda_at(idx);
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// L2 inner product (u, v) = V * Re sum_k u^(k) conj(v^(k)).
    pub fn inner_l2(&self, other: &Self) -> f64 {
        debug_assert!(self.same_lattice(other));
        let v = self.lattice.volume();
        let mut s = 0.0;
        for (a, b) in self.coeffs.iter().zip(other.coeffs.iter()) {
            s += a.re * b.re + a.im * b.im;
        }
        v * s
    }

    /// V inner product ((u, v)) = V * Re sum_k lambda(k) u^(k) conj(v^(k)).
    pub fn inner_v(&self, other: &Self) -> f64 {
        debug_assert!(self.same_lattice(other));
        let v = self.lattice.volume();
        let len = self.lattice.grid_len();
        let mut s = 0.0;
        for c in 0..3 {
            for idx in 0..len {
                let a = self.coeffs[c * len + idx];
                let b = other.coeffs[c * len + idx];
                s += self.lattice.lambda_at(idx) * (a.re * b.re + a.im * b.im);
            }
        }
        v * s
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner_l2(self).max(0.0).sqrt()
    }

    pub fn norm_h1(&self) -> f64 {
        self.inner_v(self).max(0.0).sqrt()
    }

    pub fn norm_da(&self) -> f64 {
        let v = self.lattice.volume();
        let len = self.lattice.grid_len();
        let mut s = 0.0;
        for c in 0..3 {
            for idx in 0..len {
                let l = self.lattice.lambda_at(idx);
                s += l * l * self.coeffs[c * len + idx].norm_sqr();
            }
        }
        (v * s).sqrt()
    }

    /// Max over the collocation grid of the pointwise speed |u(x)|.
    pub fn norm_linf(&self) -> f64 {
        let grids = self.to_physical();
        let mut max = 0.0_f64;
        for i in 0..grids[0].len() {
            let m = grids[0][i] * grids[0][i] + grids[1][i] * grids[1][i] + grids[2][i] * grids[2][i];
            max = max.max(m);
        }
        max.sqrt()
    }

    /// All four norms at once.
    pub fn norms(&self) -> Norms {
        Norms {
            l2: self.norm_l2(),
            h1: self.norm_h1(),
            da: self.norm_da(),
            linf: self.norm_linf(),
        }
    }

    pub fn l2_distance(&self, other: &Self) -> f64 {
        debug_assert!(self.same_lattice(other));
        let v = self.lattice.volume();
        let mut s = 0.0;
        for (a, b) in self.coeffs.iter().zip(other.coeffs.iter()) {
            s += (a - b).norm_sqr();
        }
        (v * s).sqrt()
    }

    /// Physical-grid values of the three components (real parts of the
    /// synthesis; the imaginary parts are roundoff for Hermitian fields).
    pub fn to_physical(&self) -> [Vec<f64>; 3] {
        let mut out: [Vec<f64>; 3] = Default::default();
        for c in 0..3 {
            let grid = transform::synthesize(&self.lattice, self.component(c));
            out[c] = grid.into_iter().map(|z| z.re).collect();
        }
        out
    }

    /// Linear combination a*self + b*other.
    pub fn linear_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        debug_assert!(self.same_lattice(other));
        let coeffs = self
            .coeffs
            .iter()
            .zip(other.coeffs.iter())
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self {
            lattice: Arc::clone(&self.lattice),
            coeffs,
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            lattice: Arc::clone(&self.lattice),
            coeffs: self.coeffs.iter().map(|x| a * x).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.linear_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.linear_comb(1.0, other, -1.0)
    }

    /// A single Hermitian mode pair: u^(k) = amp, u^(-k) = conj(amp),
    /// Leray-projected so the result is divergence-free.
    pub fn mode_pair(
        lattice: Arc<WaveVectorLattice>,
        k: WaveVector,
        amp: [Complex64; 3],
    ) -> Result<Self> {
        let mut f = Self::zero(lattice);
        for c in 0..3 {
            f.set_mode(c, k, amp[c])?;
        }
        f.leray_project_in_place();
        Ok(f)
    }

    /// Real shear mode: velocity along `axis_vel` varying as
    /// cos(2 pi x_{axis_wave} / L), a unidirectional field with B(u,u) = 0.
    /// With `axis_wave` chosen along a longest period this is a
    /// lambda_1-eigenmode.
    pub fn shear_mode(
        lattice: Arc<WaveVectorLattice>,
        axis_wave: usize,
        axis_vel: usize,
        amplitude: f64,
    ) -> Result<Self> {
        if axis_wave == axis_vel {
            return Err(Error::InvalidParameter(
                "shear mode requires distinct wave and velocity axes".into(),
            ));
        }
        let mut k = [0i32; 3];
        k[axis_wave] = 1;
        let mut f = Self::zero(lattice);
        // cos = (e^{ik.x} + e^{-ik.x})/2; already divergence-free.
        f.set_mode(axis_vel, k, Complex64::new(0.5 * amplitude, 0.0))?;
        Ok(f)
    }

    /// Random divergence-free field with Gaussian coefficients shaped by
    /// exp(-lambda(k)/lambda(k0)) and support limited to |k_i| <= kmax.
    /// Defaults to the dealias cutoff so products stay alias-free.
    pub fn random_div_free<R: Rng>(
        lattice: Arc<WaveVectorLattice>,
        kmax: Option<i32>,
        rng: &mut R,
    ) -> Self {
        let kmax = kmax.unwrap_or_else(|| lattice.k_mask());
        let k0 = (kmax as f64 / 2.0).max(1.0);
        let mut f = Self::zero(Arc::clone(&lattice));
        for k in lattice.canonical_half() {
            if k.iter().any(|&ki| ki.abs() > kmax) {
                continue;
            }
            let damp = (-(lattice.lambda(k) / lattice.lambda([0, 0, 1]).max(1e-300))
                / (k0 * k0))
                .exp();
            for c in 0..3 {
                let re: f64 = rng.sample(rand_distr_standard());
                let im: f64 = rng.sample(rand_distr_standard());
                f.set_mode(c, k, Complex64::new(re, im) * damp).unwrap();
            }
        }
        f.leray_project_in_place();
        f
    }

    /// Normalizes the field to the given L2 norm (no-op on the zero field).
    pub fn with_l2_norm(&self, target: f64) -> Self {
        let n = self.norm_l2();
        if n == 0.0 {
            self.clone()
        } else {
            self.scaled(target / n)
        }
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

fn rand_distr_standard() -> rand::distributions::Standard {
    rand::distributions::Standard
}

/// Realizes the divergence-free constraint: validates Hermitian symmetry of
/// the raw input, then applies the Leray projector.
pub fn leray_project(
    lattice: Arc<WaveVectorLattice>,
    raw: Vec<Complex64>,
) -> Result<SpectralField> {
    let mut f = SpectralField::from_raw(lattice, raw)?;
    f.leray_project_in_place();
    Ok(f)
}
