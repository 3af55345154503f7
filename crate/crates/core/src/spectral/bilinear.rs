//! Advection operators: the bilinear form B(u,v) = P[(u.grad)v] with
//! 2/3-rule dealiasing, and the trilinear form b(u,v,w) by collocation
//! quadrature. For mask-limited fields the quadrature is exact, so
//! b(u,v,v) = 0 and b(u,v,w) = -b(u,w,v) hold to roundoff.

use num_complex::Complex64;

use super::field::SpectralField;
use super::transform;
use crate::error::{Error, Result};

/// Physical-grid values of the nine derivatives d(v_j)/dx_i and the three
/// components of u, combined into the advection w_j = u_i d(v_j)/dx_i.
fn advection_grid(u: &SpectralField, v: &SpectralField) -> Result<Vec<Vec<f64>>> {
    if !u.same_lattice(v) {
        return Err(Error::LatticeMismatch);
    }
    let lat = u.lattice();
    let len = lat.grid_len();

    let u_phys = u.to_physical();

    let mut w = vec![vec![0.0_f64; len]; 3];
    let mut deriv = vec![Complex64::default(); len];
    for j in 0..3 {
        for i in 0..3 {
            // d(v_j)/dx_i in spectral space, then to the grid.
            let comp = v.component(j);
            for idx in 0..len {
                let kd = lat.k_dim(lat.wavevector_of(idx));
                deriv[idx] = Complex64::new(0.0, kd[i]) * comp[idx];
            }
            let grid = transform::synthesize(lat, &deriv);
            let wj = &mut w[j];
            let ui = &u_phys[i];
            for idx in 0..len {
                wj[idx] += ui[idx] * grid[idx].re;
            }
        }
    }
    Ok(w)
}

/// B(u, v): the Leray-projected, dealiased spectral transform of (u.grad)v.
pub fn bilinear_b(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    let w = advection_grid(u, v)?;
    let lat = u.lattice().clone();
    let mut out = SpectralField::zero(lat.clone());
    for (j, wj) in w.into_iter().enumerate() {
        let grid: Vec<Complex64> = wj.into_iter().map(|x| Complex64::new(x, 0.0)).collect();
        let mut coeffs = transform::analyze(&lat, grid);
        for (idx, c) in coeffs.iter_mut().enumerate() {
            if !lat.mask_at(idx) {
                *c = Complex64::default();
            }
        }
        out.component_mut(j).copy_from_slice(&coeffs);
    }
    out.leray_project_in_place();
    out.hermitize();
    Ok(out)
}

/// b(u, v, w) = integral of (u.grad)v . w by collocation quadrature.
pub fn trilinear_b(u: &SpectralField, v: &SpectralField, w: &SpectralField) -> Result<f64> {
    if !u.same_lattice(w) {
        return Err(Error::LatticeMismatch);
    }
    let adv = advection_grid(u, v)?;
    let w_phys = w.to_physical();
    let lat = u.lattice();
    let mut s = 0.0;
    for j in 0..3 {
        let a = &adv[j];
        let b = &w_phys[j];
        for idx in 0..a.len() {
            s += a[idx] * b[idx];
        }
    }
    Ok(s * lat.volume() / lat.grid_len() as f64)
}
