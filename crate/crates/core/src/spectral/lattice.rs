use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};

/// Integer wavevector on the Fourier lattice.
pub type WaveVector = [i32; 3];

/// The truncated Fourier lattice of a periodic box with periods `L_i` and
/// `n` collocation points per axis.
///
/// Active modes are the integer wavevectors `k != 0` with `|k_i| <= n/2 - 1`;
/// the Nyquist planes are excluded so that every active mode has a Hermitian
/// partner on the lattice. The dealias mask keeps `|k_i| <= floor((n-1)/3)`,
/// which makes quadratic products alias-free and the collocation quadrature
/// of cubic terms exact for mask-limited fields.
pub struct WaveVectorLattice {
    n: usize,
    periods: [f64; 3],
    /// Largest |k_i| of an active mode.
    k_active: i32,
    /// Largest |k_i| kept by the 2/3-rule dealias mask.
    k_mask: i32,
    lambda_1: f64,
    volume: f64,
    /// lambda(k) per flat slot (also filled for inactive slots).
    lambda_table: Vec<f64>,
    /// true where the slot holds an active mode.
    active_table: Vec<bool>,
    /// true where the slot survives the dealias mask.
    mask_table: Vec<bool>,
    fft_forward: Arc<dyn Fft<f64>>,
    fft_inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for WaveVectorLattice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WaveVectorLattice")
            .field("n", &self.n)
            .field("periods", &self.periods)
            .field("k_mask", &self.k_mask)
            .finish()
    }
}

impl PartialEq for WaveVectorLattice {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.periods == other.periods
    }
}

impl WaveVectorLattice {
    pub fn new(n: usize, periods: [f64; 3]) -> Result<Arc<Self>> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "resolution must be even and >= 4, got {n}"
            )));
        }
        if periods.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "periods must be positive and finite, got {periods:?}"
            )));
        }
        let mut planner = FftPlanner::new();
        let fft_forward = planner.plan_fft(n, FftDirection::Forward);
        let fft_inverse = planner.plan_fft(n, FftDirection::Inverse);
        let lambda_1 = periods
            .iter()
            .map(|&l| (2.0 * PI / l).powi(2))
            .fold(f64::INFINITY, f64::min);
        let mut lattice = Self {
            n,
            periods,
            k_active: (n / 2 - 1) as i32,
            k_mask: ((n - 1) / 3) as i32,
            lambda_1,
            volume: periods[0] * periods[1] * periods[2],
            lambda_table: Vec::new(),
            active_table: Vec::new(),
            mask_table: Vec::new(),
            fft_forward,
            fft_inverse,
        };
        let len = lattice.grid_len();
        let mut lambda_table = Vec::with_capacity(len);
        let mut active_table = Vec::with_capacity(len);
        let mut mask_table = Vec::with_capacity(len);
        for idx in 0..len {
            let k = lattice.wavevector_of(idx);
            lambda_table.push(lattice.lambda(k));
            active_table.push(lattice.is_active(k));
            mask_table.push(lattice.in_mask(k));
        }
        lattice.lambda_table = lambda_table;
        lattice.active_table = active_table;
        lattice.mask_table = mask_table;
        Ok(Arc::new(lattice))
    }

    #[inline]
    pub(crate) fn lambda_at(&self, idx: usize) -> f64 {
        self.lambda_table[idx]
    }

    #[inline]
    pub(crate) fn active_at(&self, idx: usize) -> bool {
        self.active_table[idx]
    }

    #[inline]
    pub(crate) fn mask_at(&self, idx: usize) -> bool {
        self.mask_table[idx]
    }

    /// Cubic box of side 2*pi, the reference geometry with lambda_1 = 1.
    pub fn cubic_2pi(n: usize) -> Result<Arc<Self>> {
        Self::new(n, [2.0 * PI; 3])
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn periods(&self) -> [f64; 3] {
        self.periods
    }

    /// Box volume |Omega| = L1 L2 L3.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Number of complex slots per field component.
    pub fn grid_len(&self) -> usize {
        self.n * self.n * self.n
    }

    /// Smallest Stokes eigenvalue over the active set.
    pub fn lambda_1(&self) -> f64 {
        self.lambda_1
    }

    pub fn k_active(&self) -> i32 {
        self.k_active
    }

    /// Dealias cutoff: modes with any |k_i| beyond this are zeroed in products.
    pub fn k_mask(&self) -> i32 {
        self.k_mask
    }

    pub(crate) fn plan(&self, direction: FftDirection) -> Arc<dyn Fft<f64>> {
        match direction {
            FftDirection::Forward => Arc::clone(&self.fft_forward),
            FftDirection::Inverse => Arc::clone(&self.fft_inverse),
        }
    }

    /// Integer frequency of FFT slot index `i` along one axis.
    #[inline]
    pub fn freq(&self, i: usize) -> i32 {
        let n = self.n as i32;
        let i = i as i32;
        if i <= n / 2 - 1 {
            i
        } else {
            i - n
        }
    }

    /// FFT slot index of integer frequency `k` along one axis.
    #[inline]
    pub fn slot(&self, k: i32) -> usize {
        let n = self.n as i32;
        (if k >= 0 { k } else { k + n }) as usize
    }

    /// Flat index of wavevector `k` in a component cube.
    #[inline]
    pub fn index_of(&self, k: WaveVector) -> usize {
        (self.slot(k[0]) * self.n + self.slot(k[1])) * self.n + self.slot(k[2])
    }

    /// Wavevector of a flat index in a component cube.
    #[inline]
    pub fn wavevector_of(&self, idx: usize) -> WaveVector {
        let n = self.n;
        [
            self.freq(idx / (n * n)),
            self.freq((idx / n) % n),
            self.freq(idx % n),
        ]
    }

    #[inline]
    pub fn is_active(&self, k: WaveVector) -> bool {
        k != [0, 0, 0] && k.iter().all(|&ki| ki.abs() <= self.k_active)
    }

    #[inline]
    pub fn in_mask(&self, k: WaveVector) -> bool {
        self.is_active(k) && k.iter().all(|&ki| ki.abs() <= self.k_mask)
    }

    /// Dimensional wavevector (2 pi k_i / L_i).
    #[inline]
    pub fn k_dim(&self, k: WaveVector) -> [f64; 3] {
        [
            2.0 * PI * k[0] as f64 / self.periods[0],
            2.0 * PI * k[1] as f64 / self.periods[1],
            2.0 * PI * k[2] as f64 / self.periods[2],
        ]
    }

    /// Stokes eigenvalue lambda(k) = sum_i (2 pi k_i / L_i)^2.
    #[inline]
    pub fn lambda(&self, k: WaveVector) -> f64 {
        let kd = self.k_dim(k);
        kd[0] * kd[0] + kd[1] * kd[1] + kd[2] * kd[2]
    }

    /// Iterate over the active wavevectors.
    pub fn active(&self) -> impl Iterator<Item = WaveVector> + '_ {
        let r = -self.k_active..=self.k_active;
        r.clone()
            .flat_map(move |k1| {
                let r2 = r.clone();
                r2.clone().flat_map(move |k2| r2.clone().map(move |k3| [k1, k2, k3]))
            })
            .filter(|&k| k != [0, 0, 0])
    }

    /// True if `k` is the canonical representative of the Hermitian pair
    /// {k, -k}: the first nonzero component is positive.
    #[inline]
    pub fn is_canonical(&self, k: WaveVector) -> bool {
        for &ki in &k {
            if ki > 0 {
                return true;
            }
            if ki < 0 {
                return false;
            }
        }
        false
    }

    /// Active canonical wavevectors in lexicographic (k1, k2, k3) order.
    /// This is the storage order of the snapshot format.
    pub fn canonical_half(&self) -> Vec<WaveVector> {
        let mut half: Vec<WaveVector> = self
            .active()
            .filter(|&k| self.is_canonical(k))
            .collect();
        half.sort_unstable();
        half
    }

    /// Active modes ordered by (lambda(k), lexicographic k). Used for the
    /// low-mode block of weak-topology surrogates.
    pub fn modes_by_eigenvalue(&self) -> Vec<WaveVector> {
        let mut modes: Vec<WaveVector> = self.active().collect();
        modes.sort_unstable_by(|a, b| {
            self.lambda(*a)
                .partial_cmp(&self.lambda(*b))
                .unwrap()
                .then(a.cmp(b))
        });
        modes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_1_is_min_over_active() {
        let lat = WaveVectorLattice::cubic_2pi(8).unwrap();
        assert!((lat.lambda_1() - 1.0).abs() < 1e-15);
        let min = lat
            .active()
            .map(|k| lat.lambda(k))
            .fold(f64::INFINITY, f64::min);
        assert!((min - lat.lambda_1()).abs() < 1e-15);
    }

    #[test]
    fn anisotropic_lambda_1() {
        // Longest period gives the smallest eigenvalue.
        let lat = WaveVectorLattice::new(8, [2.0 * std::f64::consts::PI, 4.0 * std::f64::consts::PI, 1.0]).unwrap();
        assert!((lat.lambda_1() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn active_excludes_zero_and_nyquist() {
        let lat = WaveVectorLattice::cubic_2pi(8).unwrap();
        assert!(!lat.is_active([0, 0, 0]));
        assert!(!lat.is_active([-4, 0, 0]));
        assert!(lat.is_active([3, -3, 3]));
        for k in lat.active() {
            assert!(lat.lambda(k) > 0.0);
            assert!(lat.is_active([-k[0], -k[1], -k[2]]), "Hermitian partner active");
        }
    }

    #[test]
    fn index_roundtrip() {
        let lat = WaveVectorLattice::cubic_2pi(8).unwrap();
        for k in lat.active() {
            assert_eq!(lat.wavevector_of(lat.index_of(k)), k);
        }
    }

    #[test]
    fn canonical_half_covers_active_set() {
        let lat = WaveVectorLattice::cubic_2pi(8).unwrap();
        let half = lat.canonical_half();
        let active_count = lat.active().count();
        assert_eq!(half.len() * 2, active_count);
        let mut sorted = half.clone();
        sorted.sort_unstable();
        assert_eq!(half, sorted, "lexicographic order");
    }

    #[test]
    fn mask_cutoff() {
        let lat = WaveVectorLattice::cubic_2pi(16).unwrap();
        assert_eq!(lat.k_mask(), 5);
        let lat = WaveVectorLattice::cubic_2pi(32).unwrap();
        assert_eq!(lat.k_mask(), 10);
    }

    #[test]
    fn rejects_bad_resolution() {
        assert!(WaveVectorLattice::cubic_2pi(7).is_err());
        assert!(WaveVectorLattice::cubic_2pi(2).is_err());
    }
}
