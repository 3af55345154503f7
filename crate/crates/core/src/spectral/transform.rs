//! Small 3D FFT layer over rustfft, operating on flattened cubes with the
//! last axis contiguous. Lanes are independent, so plane-level parallelism
//! is deterministic: every task writes a disjoint block.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftDirection;

use super::lattice::WaveVectorLattice;

fn fft_axis2(data: &mut [Complex64], n: usize, plan: &dyn rustfft::Fft<f64>) {
    data.par_chunks_mut(n * n).for_each(|plane| {
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        for row in plane.chunks_mut(n) {
            plan.process_with_scratch(row, &mut scratch);
        }
    });
}

fn fft_axis1(data: &mut [Complex64], n: usize, plan: &dyn rustfft::Fft<f64>) {
    data.par_chunks_mut(n * n).for_each(|plane| {
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        let mut lane = vec![Complex64::default(); n];
        for k in 0..n {
            for j in 0..n {
                lane[j] = plane[j * n + k];
            }
            plan.process_with_scratch(&mut lane, &mut scratch);
            for j in 0..n {
                plane[j * n + k] = lane[j];
            }
        }
    });
}

fn fft_axis0(data: &mut [Complex64], n: usize, plan: &dyn rustfft::Fft<f64>) {
    // Transpose axes 0 <-> 2, FFT the now-contiguous lanes, transpose back.
    let mut t = vec![Complex64::default(); data.len()];
    transpose02(data, &mut t, n);
    fft_axis2(&mut t, n, plan);
    transpose02(&t, data, n);
}

fn transpose02(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    dst.par_chunks_mut(n * n).enumerate().for_each(|(k, plane)| {
        for j in 0..n {
            for i in 0..n {
                plane[j * n + i] = src[(i * n + j) * n + k];
            }
        }
    });
}

fn fft3(data: &mut [Complex64], lattice: &WaveVectorLattice, direction: FftDirection) {
    let n = lattice.resolution();
    debug_assert_eq!(data.len(), n * n * n);
    let plan = lattice.plan(direction);
    fft_axis2(data, n, plan.as_ref());
    fft_axis1(data, n, plan.as_ref());
    fft_axis0(data, n, plan.as_ref());
}

/// Coefficients -> grid values (unnormalized inverse DFT, the synthesis sum).
pub(crate) fn synthesize(lattice: &WaveVectorLattice, coeffs: &[Complex64]) -> Vec<Complex64> {
    let mut grid = coeffs.to_vec();
    fft3(&mut grid, lattice, FftDirection::Inverse);
    grid
}

/// Grid values -> coefficients (forward DFT scaled by 1/n^3).
pub(crate) fn analyze(lattice: &WaveVectorLattice, mut grid: Vec<Complex64>) -> Vec<Complex64> {
    fft3(&mut grid, lattice, FftDirection::Forward);
    let scale = 1.0 / lattice.grid_len() as f64;
    for c in grid.iter_mut() {
        *c *= scale;
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_mode_roundtrip() {
        let lat = WaveVectorLattice::cubic_2pi(8).unwrap();
        let mut coeffs = vec![Complex64::default(); lat.grid_len()];
        coeffs[lat.index_of([1, -2, 3])] = Complex64::new(0.7, -0.3);
        let grid = synthesize(&lat, &coeffs);
        let back = analyze(&lat, grid);
        for (a, b) in coeffs.iter().zip(back.iter()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn synthesis_matches_plane_wave() {
        let n = 8;
        let lat = WaveVectorLattice::cubic_2pi(n).unwrap();
        let k = [2, 0, -1];
        let mut coeffs = vec![Complex64::default(); lat.grid_len()];
        coeffs[lat.index_of(k)] = Complex64::new(1.0, 0.0);
        let grid = synthesize(&lat, &coeffs);
        // u(x_j) = exp(i 2 pi k.j / n) on the uniform grid.
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let phase = 2.0 * std::f64::consts::PI
                        * (k[0] as f64 * i as f64 + k[1] as f64 * j as f64 + k[2] as f64 * l as f64)
                        / n as f64;
                    let expect = Complex64::new(phase.cos(), phase.sin());
                    let got = grid[(i * n + j) * n + l];
                    assert!((got - expect).norm() < 1e-12, "at ({i},{j},{l})");
                }
            }
        }
    }
}
