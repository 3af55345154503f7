//! Run configuration: a flat TOML file with dotted sections. Unknown keys
//! are rejected so configs stay diffable and unambiguous.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use nsstat_core::dynamics::{self, IntegratorConfig, Scheme};
use nsstat_core::spectral::{FlowParameters, SpectralField, WaveVectorLattice};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub flow: FlowSection,
    pub forcing: ForcingSection,
    pub initial: InitialSection,
    pub integrator: IntegratorSection,
    pub run: RunSection,
    #[serde(default)]
    pub average: AverageSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub nu: f64,
    pub resolution: usize,
    /// Box periods; defaults to the cubic box of side 2 pi.
    pub periods: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSection {
    pub kind: ForcingKind,
    /// |f| in L2. Ignored when `grashof` is set.
    pub amplitude: Option<f64>,
    /// Target Grashof number; sets |f| = G nu^2 lambda_1^(3/4).
    pub grashof: Option<f64>,
    #[serde(default)]
    pub axis_wave: usize,
    #[serde(default = "default_axis_vel")]
    pub axis_vel: usize,
    pub kmax: Option<i32>,
    pub seed: Option<u64>,
}

fn default_axis_vel() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingKind {
    Zero,
    Shear,
    TaylorGreen,
    RandomLow,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKind,
    pub amplitude: Option<f64>,
    /// |u0| = radius_factor * R0 for `random_ball`.
    pub radius_factor: Option<f64>,
    pub kmax: Option<i32>,
    #[serde(default)]
    pub axis_wave: usize,
    #[serde(default = "default_axis_vel")]
    pub axis_vel: usize,
    /// Relative perturbation added on top of `steady_shear`.
    pub perturbation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Zero,
    TaylorGreen,
    Shear,
    RandomBall,
    SteadyShear,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_scheme() -> Scheme {
    Scheme::ImexCn
}

fn default_stride() -> usize {
    1
}

fn default_max_steps() -> usize {
    100_000_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub t0: f64,
    pub t1: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    /// Evenly thin the stored samples for the pairwise audit CSV.
    #[serde(default = "default_audit_samples")]
    pub audit_max_samples: usize,
    #[serde(default = "default_audit_tol")]
    pub audit_tol: f64,
}

fn default_output_dir() -> String {
    "out".into()
}

fn default_audit_samples() -> usize {
    200
}

fn default_audit_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AverageSection {
    pub windows: Option<Vec<f64>>,
    pub t0: Option<f64>,
    #[serde(default = "default_band_tol")]
    pub band_tol: f64,
}

fn default_band_tol() -> f64 {
    1e-2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default = "default_verify_tol")]
    pub tol: f64,
    #[serde(default = "default_battery")]
    pub battery: usize,
    #[serde(default = "default_psi_factors")]
    pub psi_r_factors: Vec<f64>,
    #[serde(default = "default_constant_samples")]
    pub constant_samples: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            tol: default_verify_tol(),
            battery: default_battery(),
            psi_r_factors: default_psi_factors(),
            constant_samples: default_constant_samples(),
        }
    }
}

fn default_verify_tol() -> f64 {
    1e-9
}

fn default_battery() -> usize {
    20
}

fn default_psi_factors() -> Vec<f64> {
    vec![0.1, 1.0, 10.0]
}

fn default_constant_samples() -> usize {
    64
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.flow.nu > 0.0) {
            return Err(CliError::Config(format!(
                "flow.nu must be positive, got {}",
                self.flow.nu
            )));
        }
        if self.flow.resolution < 4 || self.flow.resolution % 2 != 0 {
            return Err(CliError::Config(format!(
                "flow.resolution must be even and >= 4, got {}",
                self.flow.resolution
            )));
        }
        if !(self.integrator.dt > 0.0) {
            return Err(CliError::Config(format!(
                "integrator.dt must be positive, got {}",
                self.integrator.dt
            )));
        }
        if self.integrator.stride == 0 {
            return Err(CliError::Config("integrator.stride must be >= 1".into()));
        }
        if !(self.run.t1 >= self.run.t0) {
            return Err(CliError::Config(format!(
                "run.t1 must be >= run.t0, got [{}, {}]",
                self.run.t0, self.run.t1
            )));
        }
        Ok(())
    }

    pub fn lattice(&self) -> Result<Arc<WaveVectorLattice>, CliError> {
        let periods = self
            .flow
            .periods
            .unwrap_or([2.0 * std::f64::consts::PI; 3]);
        WaveVectorLattice::new(self.flow.resolution, periods)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn build_forcing(
        &self,
        lattice: Arc<WaveVectorLattice>,
    ) -> Result<SpectralField, CliError> {
        let shape = match self.forcing.kind {
            ForcingKind::Zero => SpectralField::zero(lattice),
            ForcingKind::Shear => SpectralField::shear_mode(
                lattice,
                self.forcing.axis_wave,
                self.forcing.axis_vel,
                1.0,
            )
            .map_err(|e| CliError::Config(format!("forcing: {e}")))?,
            ForcingKind::TaylorGreen => dynamics::taylor_green_exact(0.0, self.flow.nu, lattice)
                .map_err(|e| CliError::Config(format!("forcing: {e}")))?,
            ForcingKind::RandomLow => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.forcing.seed.unwrap_or(1));
                SpectralField::random_div_free(lattice, self.forcing.kmax, &mut rng)
            }
        };
        if self.forcing.kind == ForcingKind::Zero {
            return Ok(shape);
        }
        let lambda_1 = shape.lattice().lambda_1();
        let target = match (self.forcing.grashof, self.forcing.amplitude) {
            (Some(g), _) => g * self.flow.nu * self.flow.nu * lambda_1.powf(0.75),
            (None, Some(a)) => a,
            (None, None) => {
                return Err(CliError::Config(
                    "forcing needs either forcing.amplitude or forcing.grashof".into(),
                ))
            }
        };
        Ok(shape.with_l2_norm(target))
    }

    pub fn build_params(&self) -> Result<FlowParameters, CliError> {
        let lattice = self.lattice()?;
        let forcing = self.build_forcing(lattice)?;
        FlowParameters::new(self.flow.nu, forcing).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn build_initial(&self, p: &FlowParameters) -> Result<SpectralField, CliError> {
        let lattice = p.lattice().clone();
        let u0 = match self.initial.kind {
            InitialKind::Zero => SpectralField::zero(lattice),
            InitialKind::TaylorGreen => {
                let amp = self.initial.amplitude.unwrap_or(1.0);
                dynamics::taylor_green_exact(0.0, p.nu(), lattice)
                    .map_err(|e| CliError::Config(format!("initial: {e}")))?
                    .scaled(amp)
            }
            InitialKind::Shear => SpectralField::shear_mode(
                lattice,
                self.initial.axis_wave,
                self.initial.axis_vel,
                self.initial.amplitude.unwrap_or(1.0),
            )
            .map_err(|e| CliError::Config(format!("initial: {e}")))?,
            InitialKind::RandomBall => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.run.seed);
                let factor = self.initial.radius_factor.unwrap_or(1.0);
                SpectralField::random_div_free(lattice, self.initial.kmax, &mut rng)
                    .with_l2_norm(factor * p.r0())
            }
            InitialKind::SteadyShear => {
                // u* = f/(nu lambda_1) is steady when f is a shear mode; it
                // sits exactly on the boundary of B_H(R0), so perturbations
                // are norm-preserving to keep the start inside the ball.
                let base = p.forcing().scaled(1.0 / (p.nu() * p.lambda_1()));
                match self.initial.perturbation {
                    Some(eps) if eps != 0.0 => {
                        let mut rng = ChaCha8Rng::seed_from_u64(self.run.seed);
                        let noise =
                            SpectralField::random_div_free(lattice, self.initial.kmax, &mut rng)
                                .with_l2_norm(eps * base.norm_l2().max(1e-300));
                        let norm = base.norm_l2();
                        base.add(&noise).with_l2_norm(norm)
                    }
                    _ => base,
                }
            }
        };
        Ok(u0)
    }

    pub fn integrator(&self) -> Result<IntegratorConfig, CliError> {
        IntegratorConfig::new(
            self.integrator.dt,
            self.integrator.scheme,
            self.integrator.stride,
            self.integrator.max_steps,
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }
}
