//! Empirical measures on phase space: the Krylov-Bogoliubov time-average
//! construction with convergence diagnostics in place of a generalized
//! limit, cylindrical test functionals, Liouville residuals, and the
//! strengthened energy inequality checks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{trilinear_b, FlowParameters, Norms, SpectralField};
use crate::trajectory::{Ensemble, Trajectory};

/// Provenance of an empirical measure: source trajectory, averaging start
/// and window, if it came from time averaging.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureProvenance {
    pub source: String,
    pub t0: Option<f64>,
    pub window: Option<f64>,
}

/// Weighted ensemble of states approximating a Borel probability measure
/// on H. Weights are nonnegative and normalized to sum to one.
#[derive(Debug, Clone)]
pub struct EmpiricalMeasure {
    atoms: Vec<(f64, SpectralField)>,
    norms: Vec<Norms>,
    provenance: MeasureProvenance,
}

impl EmpiricalMeasure {
    pub fn new(atoms: Vec<(f64, SpectralField)>, provenance: MeasureProvenance) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidParameter("measure needs at least one atom".into()));
        }
        if atoms.iter().any(|(w, _)| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidParameter("weights must be nonnegative and finite".into()));
        }
        let total: f64 = atoms.iter().map(|(w, _)| w).sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("weights sum to zero".into()));
        }
        let first = &atoms[0].1;
        if !atoms.iter().all(|(_, u)| u.same_lattice(first)) {
            return Err(Error::LatticeMismatch);
        }
        // Keep already-normalized weights bit-identical across round trips.
        let atoms: Vec<(f64, SpectralField)> = if (total - 1.0).abs() <= 1e-12 {
            atoms
        } else {
            atoms.into_iter().map(|(w, u)| (w / total, u)).collect()
        };
        let norms = atoms.iter().map(|(_, u)| u.norms()).collect();
        Ok(Self {
            atoms,
            norms,
            provenance,
        })
    }

    pub fn dirac(state: SpectralField) -> Self {
        Self::new(
            vec![(1.0, state)],
            MeasureProvenance {
                source: "dirac".into(),
                ..Default::default()
            },
        )
        .expect("a single unit atom is a valid measure")
    }

    pub fn atoms(&self) -> &[(f64, SpectralField)] {
        &self.atoms
    }

    pub fn atom_norms(&self) -> &[Norms] {
        &self.norms
    }

    pub fn provenance(&self) -> &MeasureProvenance {
        &self.provenance
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|(w, _)| w).sum()
    }

    /// Expectation of a scalar observable.
    pub fn expect<F: FnMut(&SpectralField) -> f64>(&self, mut observable: F) -> Result<f64> {
        let mut s = 0.0;
        for (w, u) in &self.atoms {
            let v = observable(u);
            if !v.is_finite() {
                return Err(Error::NonFiniteObservable);
            }
            s += w * v;
        }
        Ok(s)
    }

    /// Expectation of an observable of the cached norms.
    pub fn expect_norms<F: Fn(&Norms) -> f64>(&self, observable: F) -> f64 {
        self.atoms
            .iter()
            .zip(self.norms.iter())
            .map(|((w, _), n)| w * observable(n))
            .sum()
    }
}

/// Mean |u|^2, mean ||u||^2, mean |Au|^(2/3) and mean |u|_inf.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MomentReport {
    pub l2_sq: f64,
    pub h1_sq: f64,
    pub da_two_thirds: f64,
    pub linf: f64,
}

pub fn moment_report(m: &EmpiricalMeasure) -> MomentReport {
    MomentReport {
        l2_sq: m.expect_norms(|n| n.l2 * n.l2),
        h1_sq: m.expect_norms(|n| n.h1 * n.h1),
        da_two_thirds: m.expect_norms(|n| n.da.powf(2.0 / 3.0)),
        linf: m.expect_norms(|n| n.linf),
    }
}

/// Per-probe convergence diagnostic of the window schedule: the surrogate
/// for the generalized-limit gap is the oscillation of the window averages
/// across the last three windows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeDiagnostic {
    pub name: String,
    pub window_values: Vec<f64>,
    pub band: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AveragingDiagnostics {
    pub windows: Vec<f64>,
    pub probes: Vec<ProbeDiagnostic>,
    pub converged: bool,
}

/// Krylov-Bogoliubov time averages: for each window T in the schedule,
/// the measure assigning trapezoid weights dt_i / T to the samples
/// u(t0 + t_i), t_i in [0, T].
pub fn time_average_measure(
    traj: &Trajectory,
    windows: &[f64],
    t0: f64,
    band_tol: f64,
) -> Result<(Vec<(f64, EmpiricalMeasure)>, AveragingDiagnostics)> {
    if windows.is_empty() || windows.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "window schedule must be nonempty and strictly increasing".into(),
        ));
    }
    let t_max = t0 + windows.last().unwrap();
    let eps = 1e-9 * traj.span().max(1.0);
    if t0 < traj.t0() - eps || t_max > traj.t1() + eps {
        return Err(Error::InsufficientCoverage { t0, t1: t_max });
    }
    let mut measures = Vec::with_capacity(windows.len());
    for &t_window in windows {
        let in_window: Vec<_> = traj
            .samples()
            .iter()
            .filter(|s| s.t >= t0 - eps && s.t <= t0 + t_window + eps)
            .collect();
        if in_window.len() < 2 {
            return Err(Error::InsufficientCoverage {
                t0,
                t1: t0 + t_window,
            });
        }
        let m = in_window.len();
        let mut atoms = Vec::with_capacity(m);
        for (i, s) in in_window.iter().enumerate() {
            let left = if i == 0 { s.t } else { in_window[i - 1].t };
            let right = if i == m - 1 { s.t } else { in_window[i + 1].t };
            atoms.push(((right - left) / 2.0, s.field.clone()));
        }
        let measure = EmpiricalMeasure::new(
            atoms,
            MeasureProvenance {
                source: traj.provenance().to_string(),
                t0: Some(t0),
                window: Some(t_window),
            },
        )?;
        measures.push((t_window, measure));
    }

    let probe_set: [(&str, fn(&Norms) -> f64); 4] = [
        ("l2_sq", |n| n.l2 * n.l2),
        ("h1_sq", |n| n.h1 * n.h1),
        ("da_two_thirds", |n| n.da.powf(2.0 / 3.0)),
        ("linf", |n| n.linf),
    ];
    let mut probes = Vec::new();
    let mut all_converged = true;
    for (name, f) in probe_set {
        let values: Vec<f64> = measures.iter().map(|(_, m)| m.expect_norms(f)).collect();
        let tail = &values[values.len().saturating_sub(3)..];
        let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let band = hi - lo;
        let converged = band <= band_tol * hi.abs().max(1.0);
        all_converged &= converged;
        probes.push(ProbeDiagnostic {
            name: name.to_string(),
            window_values: values,
            band,
            converged,
        });
    }
    Ok((
        measures,
        AveragingDiagnostics {
            windows: windows.to_vec(),
            probes,
            converged: all_converged,
        },
    ))
}

/// psi_r(s) = r (1 - e^{-s/r}): nonnegative, increasing, C^1, with
/// 0 < psi'_r <= 1 and psi_r(0) = 0. Sweeping r probes energy scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiFunction {
    pub r: f64,
}

impl PsiFunction {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "psi parameter must be positive, got {r}"
            )));
        }
        Ok(Self { r })
    }

    pub fn psi(&self, s: f64) -> f64 {
        self.r * (1.0 - (-s / self.r).exp())
    }

    pub fn dpsi(&self, s: f64) -> f64 {
        (-s / self.r).exp()
    }
}

/// Cylindrical test functional Phi(u) = phi((u,v_1),...,(u,v_k)) with a
/// smooth compactly supported profile phi(y) = p(y) chi(|y|^2/R^2),
/// chi(s) = exp(1 - 1/(1-s)) inside the unit ball and 0 outside.
#[derive(Debug, Clone)]
pub struct CylindricalTest {
    directions: Vec<SpectralField>,
    /// p(y) = c_0 + sum_j c_j y_j
    poly: Vec<f64>,
    support_radius: f64,
}

impl CylindricalTest {
    pub fn new(
        directions: Vec<SpectralField>,
        poly: Vec<f64>,
        support_radius: f64,
    ) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::InvalidParameter(
                "cylindrical test needs k >= 1 directions".into(),
            ));
        }
        if poly.len() != directions.len() + 1 {
            return Err(Error::InvalidParameter(
                "profile polynomial needs one constant plus one coefficient per direction".into(),
            ));
        }
        if !(support_radius > 0.0) {
            return Err(Error::InvalidParameter("support radius must be positive".into()));
        }
        if directions.iter().any(|v| v.norm_l2() == 0.0) {
            return Err(Error::InvalidParameter("directions must be nonzero".into()));
        }
        Ok(Self {
            directions,
            poly,
            support_radius,
        })
    }

    pub fn directions(&self) -> &[SpectralField] {
        &self.directions
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// Cylindrical coordinates y_j = (u, v_j).
    pub fn coordinates(&self, u: &SpectralField) -> Vec<f64> {
        self.directions.iter().map(|v| u.inner_l2(v)).collect()
    }

    fn chi(&self, y2: f64) -> (f64, f64) {
        let s = y2 / (self.support_radius * self.support_radius);
        if s >= 1.0 {
            return (0.0, 0.0);
        }
        let chi = (1.0 - 1.0 / (1.0 - s)).exp();
        let dchi_ds = -chi / ((1.0 - s) * (1.0 - s));
        (chi, dchi_ds)
    }

    fn poly_at(&self, y: &[f64]) -> f64 {
        self.poly[0]
            + self
                .poly
                .iter()
                .skip(1)
                .zip(y.iter())
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    pub fn phi_of_coords(&self, y: &[f64]) -> f64 {
        let y2: f64 = y.iter().map(|v| v * v).sum();
        let (chi, _) = self.chi(y2);
        if chi == 0.0 {
            return 0.0;
        }
        self.poly_at(y) * chi
    }

    pub fn grad_phi_of_coords(&self, y: &[f64]) -> Vec<f64> {
        let r2 = self.support_radius * self.support_radius;
        let y2: f64 = y.iter().map(|v| v * v).sum();
        let (chi, dchi_ds) = self.chi(y2);
        if chi == 0.0 {
            return vec![0.0; y.len()];
        }
        let p = self.poly_at(y);
        y.iter()
            .enumerate()
            .map(|(j, &yj)| self.poly[j + 1] * chi + p * dchi_ds * 2.0 * yj / r2)
            .collect()
    }

    pub fn phi(&self, u: &SpectralField) -> f64 {
        self.phi_of_coords(&self.coordinates(u))
    }

    /// Rigorous bound on sup |phi|: |p(y)| <= |c_0| + R sum_j |c_j| inside
    /// the support and chi <= 1.
    pub fn sup_abs_phi(&self) -> f64 {
        self.poly[0].abs()
            + self.support_radius * self.poly.iter().skip(1).map(|c| c.abs()).sum::<f64>()
    }

    /// Frechet derivative Phi'(u) = sum_j d_j phi(...) v_j.
    pub fn phi_prime(&self, u: &SpectralField) -> SpectralField {
        let g = self.grad_phi_of_coords(&self.coordinates(u));
        let mut out = SpectralField::zero(u.lattice().clone());
        for (gj, v) in g.iter().zip(self.directions.iter()) {
            if *gj != 0.0 {
                out = out.linear_comb(1.0, v, *gj);
            }
        }
        out
    }
}

/// Randomized battery of cylindrical tests. Directions come from the low
/// modes plus the forcing direction; the support radius is scaled to 4x the
/// observed coordinate range so the tests are active on the data.
pub fn cylindrical_battery(
    p: &FlowParameters,
    states: &[&SpectralField],
    size: usize,
    seed: u64,
) -> Vec<CylindricalTest> {
    let lattice = p.lattice().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut battery = Vec::with_capacity(size);
    for i in 0..size {
        let k = 1 + (i % 3);
        let mut directions = Vec::with_capacity(k);
        for j in 0..k {
            let dir = if j == 0 && i % 4 == 0 && p.f_l2() > 0.0 {
                p.forcing().with_l2_norm(1.0)
            } else {
                SpectralField::random_div_free(lattice.clone(), Some(2), &mut rng)
                    .with_l2_norm(1.0)
            };
            directions.push(dir);
        }
        let mut range = 0.0_f64;
        for u in states {
            for v in &directions {
                range = range.max(u.inner_l2(v).abs());
            }
        }
        let support = 4.0 * range.max(1e-6);
        let poly: Vec<f64> = (0..=k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        battery.push(
            CylindricalTest::new(directions, poly, support)
                .expect("battery construction uses valid parameters"),
        );
    }
    battery
}

/// <F(u), Phi'(u)> = (f, Phi') - nu ((u, Phi')) - b(u, u, Phi').
fn f_dot_phi_prime(u: &SpectralField, test: &CylindricalTest, p: &FlowParameters) -> Result<f64> {
    let phi_prime = test.phi_prime(u);
    if phi_prime.max_coeff() == 0.0 {
        return Ok(0.0);
    }
    Ok(p.forcing().inner_l2(&phi_prime) - p.nu() * u.inner_v(&phi_prime)
        - trilinear_b(u, u, &phi_prime)?)
}

/// Residual of the stationary Liouville equation
/// int (F(u), Phi'(u)) dmu = 0 for one cylindrical test.
pub fn liouville_residual_stationary(
    m: &EmpiricalMeasure,
    test: &CylindricalTest,
    p: &FlowParameters,
) -> Result<f64> {
    let mut s = 0.0;
    for (w, u) in m.atoms() {
        s += w * f_dot_phi_prime(u, test, p)?;
    }
    Ok(s)
}

fn family_slice<'a>(
    family: &'a [(f64, EmpiricalMeasure)],
    t_prime: f64,
    t: f64,
) -> Result<&'a [(f64, EmpiricalMeasure)]> {
    if family.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidParameter(
            "family times must be strictly increasing".into(),
        ));
    }
    let eps = 1e-9 * (t - t_prime).abs().max(1.0);
    let lo = family.iter().position(|(s, _)| (*s - t_prime).abs() <= eps);
    let hi = family.iter().position(|(s, _)| (*s - t).abs() <= eps);
    match (lo, hi) {
        (Some(a), Some(b)) if a <= b => Ok(&family[a..=b]),
        _ => Err(Error::InsufficientCoverage { t0: t_prime, t1: t }),
    }
}

/// Residual of the time-dependent Liouville equation
/// int Phi dmu_t = int Phi dmu_t' + int_{t'}^{t} int <F, Phi'> dmu_s ds,
/// with trapezoid quadrature in s over the sampled family.
pub fn liouville_residual_timedep(
    family: &[(f64, EmpiricalMeasure)],
    test: &CylindricalTest,
    t_prime: f64,
    t: f64,
    p: &FlowParameters,
) -> Result<f64> {
    let slice = family_slice(family, t_prime, t)?;
    let phi_end = slice.last().unwrap().1.expect(|u| test.phi(u))?;
    let phi_start = slice.first().unwrap().1.expect(|u| test.phi(u))?;
    let mut transport = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (s, m) in slice {
        let mut g = 0.0;
        for (w, u) in m.atoms() {
            g += w * f_dot_phi_prime(u, test, p)?;
        }
        if let Some((sp, gp)) = prev {
            transport += 0.5 * (s - sp) * (g + gp);
        }
        prev = Some((*s, g));
    }
    Ok(phi_end - phi_start - transport)
}

/// Stationary strengthened energy functional
/// S(psi) = int psi'(|u|^2) (nu ||u||^2 - (f, u)) dmu; a stationary
/// statistical solution satisfies S <= 0.
pub fn energy_inequality_stationary(
    m: &EmpiricalMeasure,
    psi: &PsiFunction,
    p: &FlowParameters,
) -> Result<f64> {
    let mut s = 0.0;
    for ((w, u), n) in m.atoms().iter().zip(m.atom_norms()) {
        let fu = p.forcing().inner_l2(u);
        s += w * psi.dpsi(n.l2 * n.l2) * (p.nu() * n.h1 * n.h1 - fu);
    }
    Ok(s)
}

/// Signed defect of the time-dependent strengthened mean energy inequality;
/// nonpositive up to tolerance along statistical solutions.
pub fn energy_inequality_timedep(
    family: &[(f64, EmpiricalMeasure)],
    psi: &PsiFunction,
    t_prime: f64,
    t: f64,
    p: &FlowParameters,
) -> Result<f64> {
    let slice = family_slice(family, t_prime, t)?;
    let mean_psi = |m: &EmpiricalMeasure| m.expect_norms(|n| psi.psi(n.l2 * n.l2));
    let end = mean_psi(&slice.last().unwrap().1);
    let start = mean_psi(&slice.first().unwrap().1);
    let mut visc = 0.0;
    let mut work = 0.0;
    let mut prev: Option<(f64, f64, f64)> = None;
    for (s, m) in slice {
        let gv = m.expect_norms(|n| psi.dpsi(n.l2 * n.l2) * n.h1 * n.h1);
        let mut gw = 0.0;
        for ((w, u), n) in m.atoms().iter().zip(m.atom_norms()) {
            gw += w * psi.dpsi(n.l2 * n.l2) * p.forcing().inner_l2(u);
        }
        if let Some((sp, gvp, gwp)) = prev {
            visc += 0.5 * (s - sp) * (gv + gvp);
            work += 0.5 * (s - sp) * (gw + gwp);
        }
        prev = Some((*s, gv, gw));
    }
    Ok(0.5 * end + p.nu() * visc - 0.5 * start - work)
}

/// Empirical check that the projected family is independent of time: for
/// each probe and shift tau, compares the window average started at t0 with
/// the one started at t0 + tau; returns the maximal absolute gap.
pub fn stationarity_diagnostic(traj: &Trajectory, shifts: &[f64], window: f64) -> Result<f64> {
    if shifts.iter().any(|&s| s < 0.0) {
        return Err(Error::InvalidParameter("shifts must be nonnegative".into()));
    }
    let max_shift = shifts.iter().cloned().fold(0.0, f64::max);
    if traj.t0() + max_shift + window > traj.t1() + 1e-9 * traj.span().max(1.0) {
        return Err(Error::InsufficientCoverage {
            t0: traj.t0(),
            t1: traj.t0() + max_shift + window,
        });
    }
    let probe_set: [fn(&Norms) -> f64; 3] = [|n| n.l2 * n.l2, |n| n.h1 * n.h1, |n| n.linf];
    let window_avg = |start: f64, f: fn(&Norms) -> f64| -> f64 {
        let mut acc = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for s in traj.samples() {
            if s.t < start - 1e-12 || s.t > start + window + 1e-12 {
                continue;
            }
            let v = f(&s.norms);
            if let Some((tp, vp)) = prev {
                acc += 0.5 * (s.t - tp) * (v + vp);
            }
            prev = Some((s.t, v));
        }
        acc / window
    };
    let mut max_gap = 0.0_f64;
    for f in probe_set {
        let base = window_avg(traj.t0(), f);
        for &tau in shifts {
            let gap = (window_avg(traj.t0() + tau, f) - base).abs();
            max_gap = max_gap.max(gap);
        }
    }
    Ok(max_gap)
}

/// The family of projected measures mu_t for a finite trajectory ensemble;
/// members must share a common sample grid.
pub fn family_from_ensemble(ensemble: &Ensemble) -> Result<Vec<(f64, EmpiricalMeasure)>> {
    let members = ensemble.members();
    let times: Vec<f64> = members[0].1.times().collect();
    for (_, traj) in members {
        let own: Vec<f64> = traj.times().collect();
        if own.len() != times.len()
            || own.iter().zip(times.iter()).any(|(a, b)| (a - b).abs() > 1e-9)
        {
            return Err(Error::InvalidParameter(
                "ensemble members must share a common sample grid".into(),
            ));
        }
    }
    let mut family = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let atoms: Vec<(f64, SpectralField)> = members
            .iter()
            .map(|(w, traj)| (*w, traj.samples()[i].field.clone()))
            .collect();
        family.push((
            t,
            EmpiricalMeasure::new(
                atoms,
                MeasureProvenance {
                    source: format!("ensemble@t={t}"),
                    t0: Some(t),
                    window: None,
                },
            )?,
        ));
    }
    Ok(family)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, manufacture_forcing, taylor_green_exact, IntegratorConfig};
    use crate::spectral::WaveVectorLattice;
    use crate::trajectory::Sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn lat(n: usize) -> Arc<WaveVectorLattice> {
        WaveVectorLattice::cubic_2pi(n).unwrap()
    }

    fn steady_setup(seed: u64) -> (SpectralField, FlowParameters) {
        let lattice = lat(8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u_star = SpectralField::random_div_free(lattice, Some(2), &mut rng);
        let f = manufacture_forcing(&u_star, 0.4).unwrap();
        let p = FlowParameters::new(0.4, f).unwrap();
        (u_star, p)
    }

    #[test]
    fn expect_basics() {
        let lattice = lat(8);
        let a = SpectralField::zero(lattice.clone());
        let b = SpectralField::shear_mode(lattice, 0, 1, 1.0).unwrap();
        let m =
            EmpiricalMeasure::new(vec![(1.0, a), (1.0, b)], MeasureProvenance::default()).unwrap();
        assert_eq!(m.expect(|_| 3.5).unwrap(), 3.5);
        // two equal-weight atoms with values 0 and 2 average to 1
        let vals = m.expect(|u| if u.norm_l2() == 0.0 { 0.0 } else { 2.0 }).unwrap();
        assert!((vals - 1.0).abs() < 1e-15);
        assert!(m.expect(|_| f64::NAN).is_err());
    }

    #[test]
    fn dirac_measure_expectation() {
        let u = SpectralField::shear_mode(lat(8), 0, 1, 2.0).unwrap();
        let l2 = u.norm_l2();
        let m = EmpiricalMeasure::dirac(u);
        assert!((m.expect(|v| v.norm_l2()).unwrap() - l2).abs() < 1e-14);
    }

    #[test]
    fn time_average_weights_normalized_and_dirac_for_steady() {
        let lattice = lat(8);
        let u = SpectralField::shear_mode(lattice, 0, 1, 1.0).unwrap();
        let samples: Vec<Sample> = (0..=20)
            .map(|i| Sample::new(i as f64 * 0.1, u.clone()))
            .collect();
        let traj = crate::trajectory::Trajectory::new(samples, "steady").unwrap();
        let (measures, diag) = time_average_measure(&traj, &[0.5, 1.0, 2.0], 0.0, 1e-8).unwrap();
        assert_eq!(measures.len(), 3);
        for (_, m) in &measures {
            assert!((m.total_weight() - 1.0).abs() < 1e-12);
            let l2 = m.expect(|v| v.norm_l2()).unwrap();
            assert!((l2 - m.atoms()[0].1.norm_l2()).abs() < 1e-12);
        }
        assert!(diag.converged);
    }

    #[test]
    fn time_average_detects_decay_to_zero() {
        // f = 0 decay: moments over growing windows shrink monotonically.
        let lattice = lat(8);
        let nu = 1.0;
        let u0 = taylor_green_exact(0.0, nu, lattice.clone()).unwrap();
        let p = FlowParameters::new(nu, SpectralField::zero(lattice)).unwrap();
        let cfg = IntegratorConfig::imex(0.01, 10).unwrap();
        let traj = integrate(&u0, &p, &cfg, 0.0, 8.0).unwrap();
        let (measures, _) = time_average_measure(&traj, &[1.0, 4.0, 8.0], 0.0, 1e-3).unwrap();
        let moments: Vec<f64> = measures
            .iter()
            .map(|(_, m)| m.expect_norms(|n| n.l2 * n.l2))
            .collect();
        assert!(moments[0] > moments[1] && moments[1] > moments[2]);
    }

    #[test]
    fn time_average_insufficient_coverage() {
        let lattice = lat(8);
        let u = SpectralField::zero(lattice);
        let samples: Vec<Sample> = (0..=4).map(|i| Sample::new(i as f64, u.clone())).collect();
        let traj = crate::trajectory::Trajectory::new(samples, "short").unwrap();
        assert!(matches!(
            time_average_measure(&traj, &[10.0], 0.0, 1e-8),
            Err(Error::InsufficientCoverage { .. })
        ));
    }

    #[test]
    fn psi_function_properties() {
        let psi = PsiFunction::new(0.7).unwrap();
        assert_eq!(psi.psi(0.0), 0.0);
        let mut last = 0.0;
        for i in 1..100 {
            let s = i as f64 * 0.1;
            assert!(psi.psi(s) > last);
            last = psi.psi(s);
            let d = psi.dpsi(s);
            assert!(d > 0.0 && d <= 1.0);
        }
        let h = 1e-7;
        let fd = (psi.psi(1.0 + h) - psi.psi(1.0 - h)) / (2.0 * h);
        assert!((fd - psi.dpsi(1.0)).abs() < 1e-8);
        assert!(PsiFunction::new(0.0).is_err());
    }

    #[test]
    fn cylindrical_profile_compact_support_and_gradient() {
        let lattice = lat(8);
        let v = SpectralField::shear_mode(lattice, 0, 1, 1.0).unwrap();
        let test = CylindricalTest::new(vec![v], vec![0.3, 1.2], 2.0).unwrap();
        assert_eq!(test.phi_of_coords(&[2.5]), 0.0);
        assert_eq!(test.grad_phi_of_coords(&[2.5])[0], 0.0);
        assert_eq!(test.phi_of_coords(&[-3.0]), 0.0);
        let y = 0.8;
        let h = 1e-6;
        let fd = (test.phi_of_coords(&[y + h]) - test.phi_of_coords(&[y - h])) / (2.0 * h);
        let g = test.grad_phi_of_coords(&[y])[0];
        assert!((fd - g).abs() < 1e-6 * g.abs().max(1.0), "{fd} vs {g}");
    }

    #[test]
    fn liouville_stationary_zero_for_dirac_at_steady_state() {
        let (u_star, p) = steady_setup(31);
        let m = EmpiricalMeasure::dirac(u_star.clone());
        let battery = cylindrical_battery(&p, &[&u_star], 20, 7);
        for test in &battery {
            let r = liouville_residual_stationary(&m, test, &p).unwrap();
            let scale = (p.f_l2() + p.nu() * u_star.norm_da() + u_star.norm_h1().powi(2)).max(1.0);
            assert!(r.abs() <= 1e-10 * scale, "residual {r}");
        }
    }

    #[test]
    fn liouville_stationary_zero_at_origin_without_forcing() {
        let lattice = lat(8);
        let p = FlowParameters::new(1.0, SpectralField::zero(lattice.clone())).unwrap();
        let m = EmpiricalMeasure::dirac(SpectralField::zero(lattice));
        let battery = cylindrical_battery(&p, &[], 5, 3);
        for test in &battery {
            assert_eq!(liouville_residual_stationary(&m, test, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn liouville_stationary_nonzero_off_equilibrium() {
        let (u_star, p) = steady_setup(37);
        let m = EmpiricalMeasure::new(
            vec![(0.5, u_star.scaled(2.0)), (0.5, u_star.scaled(0.5))],
            MeasureProvenance::default(),
        )
        .unwrap();
        let battery = cylindrical_battery(&p, &[&u_star], 8, 11);
        let max = battery
            .iter()
            .map(|t| liouville_residual_stationary(&m, t, &p).unwrap().abs())
            .fold(0.0, f64::max);
        assert!(max > 1e-8, "expected a visibly nonzero residual, got {max}");
    }

    #[test]
    fn liouville_timedep_zero_for_stationary_family_and_equal_times() {
        let (u_star, p) = steady_setup(41);
        let m = EmpiricalMeasure::dirac(u_star.clone());
        let family: Vec<(f64, EmpiricalMeasure)> =
            (0..=10).map(|i| (i as f64 * 0.1, m.clone())).collect();
        let battery = cylindrical_battery(&p, &[&u_star], 6, 19);
        for test in &battery {
            let r = liouville_residual_timedep(&family, test, 0.0, 1.0, &p).unwrap();
            assert!(r.abs() < 1e-10, "residual {r}");
            let r0 = liouville_residual_timedep(&family, test, 0.3, 0.3, &p).unwrap();
            assert_eq!(r0, 0.0);
        }
    }

    #[test]
    fn energy_inequality_zero_at_steady_shear() {
        // Dirac at u* = f/(nu lambda_1): S = psi'(|u*|^2)(nu ||u*||^2 - (f,u*)) = 0.
        let lattice = lat(8);
        let nu = 0.5;
        let f = SpectralField::shear_mode(lattice, 0, 1, 1.0).unwrap();
        let p = FlowParameters::new(nu, f.clone()).unwrap();
        let u_star = f.scaled(1.0 / (nu * p.lambda_1()));
        let m = EmpiricalMeasure::dirac(u_star);
        for r in [0.1, 1.0, 10.0] {
            let psi = PsiFunction::new(r * p.r0() * p.r0()).unwrap();
            let s = energy_inequality_stationary(&m, &psi, &p).unwrap();
            assert!(s.abs() < 1e-12, "S = {s}");
        }
    }

    #[test]
    fn energy_inequality_flags_inflated_state() {
        let lattice = lat(8);
        let nu = 0.5;
        let f = SpectralField::shear_mode(lattice, 0, 1, 1.0).unwrap();
        let p = FlowParameters::new(nu, f.clone()).unwrap();
        // atom outside the attractor ball: dissipation exceeds input
        let inflated = f.scaled(10.0 / (nu * p.lambda_1()));
        let m = EmpiricalMeasure::dirac(inflated);
        let psi = PsiFunction::new(p.r0() * p.r0()).unwrap();
        let s = energy_inequality_stationary(&m, &psi, &p).unwrap();
        assert!(s > 0.0, "S = {s} should flag the inflated state");
    }

    #[test]
    fn stationarity_zero_for_steady_and_large_for_transient() {
        let lattice = lat(8);
        let u = SpectralField::shear_mode(lattice.clone(), 0, 1, 1.0).unwrap();
        let samples: Vec<Sample> = (0..=40)
            .map(|i| Sample::new(i as f64 * 0.1, u.clone()))
            .collect();
        let steady = crate::trajectory::Trajectory::new(samples, "steady").unwrap();
        let gap = stationarity_diagnostic(&steady, &[0.5, 1.0], 2.0).unwrap();
        assert!(gap < 1e-12);

        let nu = 1.0;
        let u0 = taylor_green_exact(0.0, nu, lattice.clone()).unwrap();
        let p = FlowParameters::new(nu, SpectralField::zero(lattice)).unwrap();
        let cfg = IntegratorConfig::imex(0.01, 10).unwrap();
        let traj = integrate(&u0, &p, &cfg, 0.0, 4.0).unwrap();
        let gap = stationarity_diagnostic(&traj, &[1.0], 2.0).unwrap();
        assert!(gap > 1e-2, "transient gap {gap}");
    }

    #[test]
    fn moment_report_closed_forms() {
        let lattice = lat(8);
        let zero = moment_report(&EmpiricalMeasure::dirac(SpectralField::zero(lattice.clone())));
        assert_eq!(
            (zero.l2_sq, zero.h1_sq, zero.da_two_thirds, zero.linf),
            (0.0, 0.0, 0.0, 0.0)
        );
        // Dirac at a lambda_1 mode: every spectral norm collapses to |u|.
        let u = SpectralField::shear_mode(lattice, 0, 1, 1.0).unwrap();
        let l2 = u.norm_l2();
        let linf = u.norm_linf();
        let r = moment_report(&EmpiricalMeasure::dirac(u.clone()));
        assert!((r.l2_sq - l2 * l2).abs() < 1e-12);
        assert!((r.h1_sq - l2 * l2).abs() < 1e-12);
        assert!((r.da_two_thirds - l2.powf(2.0 / 3.0)).abs() < 1e-12);
        assert!((r.linf - linf).abs() < 1e-12);
        // two-atom measure: weighted sum of atom values
        let m = EmpiricalMeasure::new(
            vec![(0.25, u.clone()), (0.75, u.scaled(2.0))],
            MeasureProvenance::default(),
        )
        .unwrap();
        let r2 = moment_report(&m);
        assert!((r2.l2_sq - (0.25 + 0.75 * 4.0) * l2 * l2).abs() < 1e-10);
    }
}
