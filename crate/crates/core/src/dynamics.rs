//! Galerkin evolution du/dt = F(u) = f - nu A u - B(u,u), time integration,
//! and manufactured/exact solutions used as oracles.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{bilinear_b, FlowParameters, SpectralField, WaveVectorLattice};
use crate::trajectory::{BudgetAccumulator, Sample, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Crank-Nicolson on the diagonal Stokes term (exact per-mode solve),
    /// Adams-Bashforth extrapolation of the advection to the midpoint.
    ImexCn,
    /// Fully explicit classical RK4, kept as a cross-check.
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub scheme: Scheme,
    /// Snapshots are stored every `stride` steps.
    pub stride: usize,
    pub max_steps: usize,
}

impl IntegratorConfig {
    pub fn new(dt: f64, scheme: Scheme, stride: usize, max_steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if stride == 0 {
            return Err(Error::InvalidParameter("stride must be >= 1".into()));
        }
        Ok(Self {
            dt,
            scheme,
            stride,
            max_steps,
        })
    }

    pub fn imex(dt: f64, stride: usize) -> Result<Self> {
        Self::new(dt, Scheme::ImexCn, stride, usize::MAX)
    }
}

/// F(u) = f - nu A u - B(u, u).
pub fn rhs_f(u: &SpectralField, p: &FlowParameters) -> Result<SpectralField> {
    if !u.same_lattice(p.forcing()) {
        return Err(Error::LatticeMismatch);
    }
    let b = bilinear_b(u, u)?;
    Ok(p.forcing()
        .sub(&u.stokes_apply().scaled(p.nu()))
        .sub(&b))
}

/// Crank-Nicolson update with the advection term `b_tilde` held explicit:
/// (1 + nu lambda dt/2) u' = (1 - nu lambda dt/2) u + dt (f - b_tilde).
fn cn_apply(
    u: &SpectralField,
    b_tilde: &SpectralField,
    p: &FlowParameters,
    dt: f64,
) -> SpectralField {
    let lat = u.lattice().clone();
    let len = lat.grid_len();
    let mut out = u.clone();
    let f = p.forcing();
    let half = 0.5 * p.nu() * dt;
    for c in 0..3 {
        let uc = u.component(c);
        let fc = f.component(c);
        let bc = b_tilde.component(c);
        let oc = out.component_mut(c);
        for idx in 0..len {
            let l = lat.lambda_at(idx);
            oc[idx] = ((1.0 - half * l) * uc[idx] + dt * (fc[idx] - bc[idx]))
                / (1.0 + half * l);
        }
    }
    out
}

fn rk4_step(u: &SpectralField, p: &FlowParameters, dt: f64) -> Result<SpectralField> {
    let k1 = rhs_f(u, p)?;
    let k2 = rhs_f(&u.linear_comb(1.0, &k1, 0.5 * dt), p)?;
    let k3 = rhs_f(&u.linear_comb(1.0, &k2, 0.5 * dt), p)?;
    let k4 = rhs_f(&u.linear_comb(1.0, &k3, dt), p)?;
    let incr = k1
        .linear_comb(1.0, &k2, 2.0)
        .linear_comb(1.0, &k3, 2.0)
        .linear_comb(1.0, &k4, 1.0);
    Ok(u.linear_comb(1.0, &incr, dt / 6.0))
}

/// One stateless time step. The IMEX scheme predicts the midpoint state with
/// half an explicit Euler step and evaluates the advection there.
pub fn step(u: &SpectralField, p: &FlowParameters, cfg: &IntegratorConfig) -> Result<SpectralField> {
    if !u.same_lattice(p.forcing()) {
        return Err(Error::LatticeMismatch);
    }
    let next = match cfg.scheme {
        Scheme::Rk4 => rk4_step(u, p, cfg.dt)?,
        Scheme::ImexCn => {
            let f_u = rhs_f(u, p)?;
            let mid = u.linear_comb(1.0, &f_u, 0.5 * cfg.dt);
            let b_tilde = bilinear_b(&mid, &mid)?;
            cn_apply(u, &b_tilde, p, cfg.dt)
        }
    };
    if !next.is_finite() {
        return Err(Error::BlowUp { step: 0, time: 0.0 });
    }
    Ok(next)
}

/// Blow-up at desk scale signals numerical instability, not a Leray
/// singularity; the partial trajectory is kept for inspection.
#[derive(Debug)]
pub enum IntegrationError {
    BlowUp {
        step: usize,
        time: f64,
        partial: Box<Trajectory>,
    },
    Other(Error),
}

impl std::fmt::Display for IntegrationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::BlowUp { step, time, .. } => {
                write!(f, "numerical blow-up at step {step} (t = {time})")
            }
            Self::Other(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for IntegrationError {}

impl From<Error> for IntegrationError {
    fn from(e: Error) -> Self {
        Self::Other(e)
    }
}

/// Integrates u0 over [t0, t1], storing snapshots every `stride` steps plus
/// the final state, with cumulative energy-budget terms recorded at the
/// scheme's own midpoint values for later audit.
pub fn integrate(
    u0: &SpectralField,
    p: &FlowParameters,
    cfg: &IntegratorConfig,
    t0: f64,
    t1: f64,
) -> std::result::Result<Trajectory, IntegrationError> {
    if !u0.same_lattice(p.forcing()) {
        return Err(Error::LatticeMismatch.into());
    }
    if !(t1 >= t0) {
        return Err(Error::InvalidParameter(format!("empty time span [{t0}, {t1}]")).into());
    }
    let n_steps = ((t1 - t0) / cfg.dt).round() as usize;
    if n_steps > cfg.max_steps {
        return Err(Error::InvalidParameter(format!(
            "run needs {n_steps} steps, above the configured maximum {}",
            cfg.max_steps
        ))
        .into());
    }
    let provenance = format!(
        "{} dt={} stride={}",
        match cfg.scheme {
            Scheme::ImexCn => "imex_cn",
            Scheme::Rk4 => "rk4",
        },
        cfg.dt,
        cfg.stride
    );

    let mut budget = BudgetAccumulator { visc: 0.0, force: 0.0 };
    let mut samples = Vec::with_capacity(n_steps / cfg.stride + 2);
    let push = |samples: &mut Vec<Sample>, t: f64, u: &SpectralField, budget: BudgetAccumulator| {
        let mut s = Sample::new(t, u.clone());
        s.budget = Some(budget);
        samples.push(s);
    };
    push(&mut samples, t0, u0, budget);

    let mut u = u0.clone();
    let mut prev_b: Option<SpectralField> = None;
    for n in 0..n_steps {
        let t = t0 + n as f64 * cfg.dt;
        let next = match cfg.scheme {
            Scheme::Rk4 => {
                let next = rk4_step(&u, p, cfg.dt)?;
                // Midpoint values for the budget record.
                let mid = u.linear_comb(0.5, &next, 0.5);
                budget.visc += cfg.dt * p.nu() * mid.inner_v(&mid);
                budget.force += cfg.dt * p.forcing().inner_l2(&mid);
                next
            }
            Scheme::ImexCn => {
                let b_now = bilinear_b(&u, &u)?;
                let b_tilde = match prev_b.take() {
                    // Adams-Bashforth extrapolation of B to the midpoint.
                    Some(b_prev) => b_now.linear_comb(1.5, &b_prev, -0.5),
                    // Bootstrap step: explicit Euler predictor to the midpoint.
                    None => {
                        let f_u = p
                            .forcing()
                            .sub(&u.stokes_apply().scaled(p.nu()))
                            .sub(&b_now);
                        let mid = u.linear_comb(1.0, &f_u, 0.5 * cfg.dt);
                        bilinear_b(&mid, &mid)?
                    }
                };
                let next = cn_apply(&u, &b_tilde, p, cfg.dt);
                let mid = u.linear_comb(0.5, &next, 0.5);
                budget.visc += cfg.dt * p.nu() * mid.inner_v(&mid);
                budget.force += cfg.dt * p.forcing().inner_l2(&mid);
                prev_b = Some(b_now);
                next
            }
        };
        if !next.is_finite() {
            let partial = Trajectory::new(samples, provenance.clone())
                .map_err(IntegrationError::Other)?;
            return Err(IntegrationError::BlowUp {
                step: n + 1,
                time: t + cfg.dt,
                partial: Box::new(partial),
            });
        }
        u = next;
        if (n + 1) % cfg.stride == 0 || n + 1 == n_steps {
            push(&mut samples, t0 + (n + 1) as f64 * cfg.dt, &u, budget);
        }
    }
    Trajectory::new(samples, provenance).map_err(IntegrationError::Other)
}

/// Builds the forcing f = nu A u* + B(u*, u*) that makes `u_star` a steady
/// state: rhs_f(u*) = 0 by construction, through the same operator path.
pub fn manufacture_forcing(u_star: &SpectralField, nu: f64) -> Result<SpectralField> {
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter("viscosity must be positive".into()));
    }
    let div = u_star.max_divergence();
    if div > 1e-10 * u_star.max_coeff().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "manufactured state must be divergence-free (max |k.u(k)| = {div:.3e})"
        )));
    }
    let b = bilinear_b(u_star, u_star)?;
    Ok(u_star.stokes_apply().scaled(nu).add(&b))
}

/// The decaying Taylor-Green field
/// e^{-2 nu t} (sin x1 cos x2, -cos x1 sin x2, 0) on the cubic 2 pi box.
/// Its projected self-advection vanishes, so it solves the Galerkin system
/// with f = 0 exactly.
pub fn taylor_green_exact(
    t: f64,
    nu: f64,
    lattice: Arc<WaveVectorLattice>,
) -> Result<SpectralField> {
    let two_pi = 2.0 * std::f64::consts::PI;
    if lattice.periods().iter().any(|&l| (l - two_pi).abs() > 1e-12) {
        return Err(Error::InvalidParameter(
            "Taylor-Green oracle requires the cubic box of side 2 pi".into(),
        ));
    }
    let amp = (-2.0 * nu * t).exp();
    let i4 = Complex64::new(0.0, 0.25 * amp);
    let mut f = SpectralField::zero(lattice);
    // sin x1 cos x2 and -cos x1 sin x2 as four Hermitian mode pairs.
    f.set_mode(0, [1, 1, 0], -i4)?;
    f.set_mode(0, [1, -1, 0], -i4)?;
    f.set_mode(1, [1, 1, 0], i4)?;
    f.set_mode(1, [1, -1, 0], -i4)?;
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::AuditMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lat(n: usize) -> Arc<WaveVectorLattice> {
        WaveVectorLattice::cubic_2pi(n).unwrap()
    }

    #[test]
    fn rhs_at_zero_is_forcing() {
        let lattice = lat(8);
        let f = SpectralField::shear_mode(lattice.clone(), 0, 1, 1.0).unwrap();
        let p = FlowParameters::new(0.5, f.clone()).unwrap();
        let z = SpectralField::zero(lattice);
        let rhs = rhs_f(&z, &p).unwrap();
        assert!(rhs.sub(&f).max_coeff() < 1e-15);
    }

    #[test]
    fn unforced_shear_decays_linearly() {
        // f = 0, lambda_1 shear mode: F(u) = -nu u since B(u,u) = 0.
        let lattice = lat(8);
        let u = SpectralField::shear_mode(lattice.clone(), 0, 1, 2.0).unwrap();
        let p = FlowParameters::new(0.3, SpectralField::zero(lattice)).unwrap();
        let rhs = rhs_f(&u, &p).unwrap();
        assert!(rhs.sub(&u.scaled(-0.3)).max_coeff() < 1e-14);
    }

    #[test]
    fn manufactured_state_is_steady() {
        let lattice = lat(8);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let u_star = SpectralField::random_div_free(lattice, Some(2), &mut rng);
        let f = manufacture_forcing(&u_star, 0.2).unwrap();
        let p = FlowParameters::new(0.2, f).unwrap();
        let rhs = rhs_f(&u_star, &p).unwrap();
        assert!(
            rhs.max_coeff() < 1e-12 * u_star.max_coeff().max(1.0),
            "residual {}",
            rhs.max_coeff()
        );

        // Zero state manufactures zero forcing.
        let z = SpectralField::zero(u_star.lattice().clone());
        assert_eq!(manufacture_forcing(&z, 1.0).unwrap().max_coeff(), 0.0);

        // A lambda_1 shear mode at nu = 1 manufactures f = u*.
        let shear = SpectralField::shear_mode(lat(8), 0, 1, 1.5).unwrap();
        let f = manufacture_forcing(&shear, 1.0).unwrap();
        assert!(f.sub(&shear).max_coeff() < 1e-14);
    }

    #[test]
    fn cn_single_mode_update_formula() {
        // f = 0, single shear mode: u' = u (1 - nu lambda dt/2)/(1 + nu lambda dt/2),
        // with lambda = 1 on the 2 pi box.
        let lattice = lat(8);
        let u = SpectralField::shear_mode(lattice.clone(), 0, 1, 1.0).unwrap();
        let p = FlowParameters::new(0.4, SpectralField::zero(lattice)).unwrap();
        let cfg = IntegratorConfig::imex(0.05, 1).unwrap();
        let next = step(&u, &p, &cfg).unwrap();
        let factor = (1.0 - 0.4 * 0.05 / 2.0) / (1.0 + 0.4 * 0.05 / 2.0);
        assert!(next.sub(&u.scaled(factor)).max_coeff() < 1e-15);
    }

    #[test]
    fn steady_state_is_fixed_point_of_step_and_integrate() {
        let lattice = lat(8);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let u_star = SpectralField::random_div_free(lattice, Some(2), &mut rng);
        let f = manufacture_forcing(&u_star, 0.5).unwrap();
        let p = FlowParameters::new(0.5, f).unwrap();
        let cfg = IntegratorConfig::imex(0.01, 5).unwrap();
        let next = step(&u_star, &p, &cfg).unwrap();
        let scale = u_star.max_coeff();
        assert!(next.sub(&u_star).max_coeff() < 1e-12 * scale);

        let traj = integrate(&u_star, &p, &cfg, 0.0, 0.2).unwrap();
        let last = &traj.samples().last().unwrap().field;
        assert!(last.sub(&u_star).max_coeff() < 1e-12 * scale);
    }

    #[test]
    fn taylor_green_matches_exact_decay() {
        let lattice = lat(8);
        let nu = 0.1;
        let u0 = taylor_green_exact(0.0, nu, lattice.clone()).unwrap();
        assert!(u0.max_divergence() < 1e-14);
        let p = FlowParameters::new(nu, SpectralField::zero(lattice.clone())).unwrap();
        let cfg = IntegratorConfig::imex(2e-3, 25).unwrap();
        let traj = integrate(&u0, &p, &cfg, 0.0, 0.25).unwrap();
        for s in traj.samples() {
            let exact = taylor_green_exact(s.t, nu, lattice.clone()).unwrap();
            let rel = s.field.sub(&exact).max_coeff() / exact.max_coeff();
            assert!(rel < 1e-7, "t = {}, rel = {rel}", s.t);
            // |u(t)| = e^{-2 nu t} |u(0)|
            let expect = (-2.0 * nu * s.t).exp() * u0.norm_l2();
            assert!((s.norms.l2 - expect).abs() < 1e-7 * expect);
        }
    }

    #[test]
    fn taylor_green_amplitude_at_half_life() {
        let lattice = lat(8);
        let nu = 0.25;
        let u = taylor_green_exact(1.0 / (2.0 * nu), nu, lattice.clone()).unwrap();
        let u0 = taylor_green_exact(0.0, nu, lattice).unwrap();
        let ratio = u.norm_l2() / u0.norm_l2();
        assert!((ratio - (-1.0_f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn taylor_green_rejects_noncubic_box() {
        let lattice = WaveVectorLattice::new(8, [1.0, 2.0, 3.0]).unwrap();
        assert!(taylor_green_exact(0.0, 0.1, lattice).is_err());
    }

    #[test]
    fn convergence_order_two_on_taylor_green() {
        let lattice = lat(8);
        let nu = 0.5;
        let t_end = 0.5;
        let err = |dt: f64| {
            let u0 = taylor_green_exact(0.0, nu, lattice.clone()).unwrap();
            let p = FlowParameters::new(nu, SpectralField::zero(lattice.clone())).unwrap();
            let cfg = IntegratorConfig::imex(dt, usize::MAX).unwrap();
            let traj = integrate(&u0, &p, &cfg, 0.0, t_end).unwrap();
            let exact = taylor_green_exact(t_end, nu, lattice.clone()).unwrap();
            traj.samples().last().unwrap().field.sub(&exact).max_coeff()
        };
        let e1 = err(0.05);
        let e2 = err(0.025);
        let slope = (e1 / e2).log2();
        assert!(slope > 1.9 && slope < 2.3, "slope {slope}, errors {e1} {e2}");
    }

    #[test]
    fn zero_step_span_gives_single_snapshot() {
        let lattice = lat(8);
        let u = SpectralField::shear_mode(lattice.clone(), 0, 1, 1.0).unwrap();
        let p = FlowParameters::new(1.0, SpectralField::zero(lattice)).unwrap();
        let cfg = IntegratorConfig::imex(0.1, 1).unwrap();
        let traj = integrate(&u, &p, &cfg, 0.0, 0.0).unwrap();
        assert_eq!(traj.len(), 1);
    }

    #[test]
    fn ball_invariance_short_forced_run() {
        let lattice = lat(8);
        let f = SpectralField::shear_mode(lattice.clone(), 0, 1, 1.0)
            .unwrap()
            .with_l2_norm(2.0);
        let p = FlowParameters::new(1.0, f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u0 = SpectralField::random_div_free(lattice, None, &mut rng).with_l2_norm(p.r0());
        let cfg = IntegratorConfig::imex(5e-3, 10).unwrap();
        let traj = integrate(&u0, &p, &cfg, 0.0, 2.0).unwrap();
        assert!(traj.uniformly_bounded_by(p.r0() * (1.0 + 1e-8)));
        // The recorded budget keeps the audit exact in inequality mode.
        let report = traj.energy_budget_audit(&p, AuditMode::Inequality, 1e-8);
        assert!(report.pass, "worst D = {}", report.worst_budget);
    }

    #[test]
    fn blow_up_reports_step_and_partial() {
        let lattice = lat(8);
        let f = SpectralField::shear_mode(lattice.clone(), 0, 1, 1.0)
            .unwrap()
            .with_l2_norm(50.0);
        let p = FlowParameters::new(1e-4, f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u0 = SpectralField::random_div_free(lattice, None, &mut rng).with_l2_norm(30.0);
        let cfg = IntegratorConfig::new(50.0, Scheme::Rk4, 1, usize::MAX).unwrap();
        match integrate(&u0, &p, &cfg, 0.0, 500.0) {
            Err(IntegrationError::BlowUp { step, partial, .. }) => {
                assert!(step >= 1);
                assert!(partial.len() >= 1);
            }
            other => panic!("expected blow-up, got {:?}", other.map(|t| t.len())),
        }
    }
}
