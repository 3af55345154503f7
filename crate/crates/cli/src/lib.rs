//! Library surface of the nsstat command-line tool: configuration,
//! persistence pipelines, and the subcommand implementations. The binary in
//! `main.rs` is a thin argument-parsing shell over these functions so the
//! pipelines stay testable.

pub mod config;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nsstat_core::dynamics::{integrate, IntegrationError};
use nsstat_core::io;
use nsstat_core::measures::{
    cylindrical_battery, energy_inequality_stationary, liouville_residual_stationary,
    stationarity_diagnostic, time_average_measure, AveragingDiagnostics, CylindricalTest,
    EmpiricalMeasure, PsiFunction,
};
use nsstat_core::spectral::{estimate_shape_constants, FlowParameters, ShapeConstants};
use nsstat_core::trajectory::{AuditMode, Sample, Trajectory};
use nsstat_core::verify::{run_bound_suite, recurrence_scan, SetPredicate, SuiteReport, Verdict};

pub use config::RunConfig;

/// Errors mapped onto the documented exit codes:
/// 0 ok, 1 usage/config, 2 numerical failure, 3 verification FAIL.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    VerificationFailed(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::VerificationFailed(m) => write!(f, "verification FAIL: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::VerificationFailed(_) => 3,
        }
    }
}

impl From<nsstat_core::Error> for CliError {
    fn from(e: nsstat_core::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

/// Output directory: NSSTAT_OUT_DIR overrides the config value.
pub fn output_dir(cfg: &RunConfig, override_dir: Option<&Path>) -> PathBuf {
    if let Some(d) = override_dir {
        return d.to_path_buf();
    }
    if let Ok(d) = std::env::var("NSSTAT_OUT_DIR") {
        if !d.is_empty() {
            return PathBuf::from(d);
        }
    }
    PathBuf::from(&cfg.run.output_dir)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub steps: usize,
    pub samples: usize,
    pub t0: f64,
    pub t1: f64,
    pub grashof: f64,
    pub r0: f64,
    pub initial_l2: f64,
    pub final_l2: f64,
    pub audit_pass: bool,
    pub audit_worst: f64,
    pub trajectory_file: String,
}

/// simulate: integrate the configured run, write the trajectory container
/// and the pairwise energy-budget audit CSV.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateSummary, CliError> {
    let p = cfg.build_params()?;
    let u0 = cfg.build_initial(&p)?;
    let icfg = cfg.integrator()?;
    let traj = match integrate(&u0, &p, &icfg, cfg.run.t0, cfg.run.t1) {
        Ok(t) => t,
        Err(IntegrationError::BlowUp {
            step,
            time,
            partial,
        }) => {
            let path = out.join("trajectory.partial.nst");
            io::save_trajectory(&path, &partial, p.nu())?;
            return Err(CliError::Numerical(format!(
                "blow-up at step {step} (t = {time}); partial trajectory in {}",
                path.display()
            )));
        }
        Err(IntegrationError::Other(e)) => return Err(CliError::Config(e.to_string())),
    };
    let traj_path = out.join("trajectory.nst");
    io::save_trajectory(&traj_path, &traj, p.nu())?;

    let audit_input = thin_trajectory(&traj, cfg.run.audit_max_samples)?;
    let report = audit_input.energy_budget_audit(&p, AuditMode::Inequality, cfg.run.audit_tol);
    io::atomic_write(&out.join("audit.csv"), |w| {
        use std::io::Write;
        w.write_all(report.to_csv().as_bytes())?;
        Ok(())
    })?;

    let steps = ((cfg.run.t1 - cfg.run.t0) / cfg.integrator.dt).round() as usize;
    let summary = SimulateSummary {
        steps,
        samples: traj.len(),
        t0: traj.t0(),
        t1: traj.t1(),
        grashof: p.grashof(),
        r0: p.r0(),
        initial_l2: u0.norm_l2(),
        final_l2: traj.samples().last().unwrap().norms.l2,
        audit_pass: report.pass,
        audit_worst: report.worst_budget,
        trajectory_file: traj_path.display().to_string(),
    };
    io::save_json(&out.join("run_summary.json"), &summary)?;
    Ok(summary)
}

/// Evenly thins stored samples so pairwise audits stay tractable.
fn thin_trajectory(traj: &Trajectory, max_samples: usize) -> Result<Trajectory, CliError> {
    if traj.len() <= max_samples.max(2) {
        return Ok(traj.clone());
    }
    let step = (traj.len() - 1) as f64 / (max_samples - 1) as f64;
    let mut samples: Vec<Sample> = Vec::with_capacity(max_samples);
    let mut last_idx = usize::MAX;
    for i in 0..max_samples {
        let idx = ((i as f64 * step).round() as usize).min(traj.len() - 1);
        if idx != last_idx {
            samples.push(traj.samples()[idx].clone());
            last_idx = idx;
        }
    }
    Trajectory::new(samples, traj.provenance().to_string()).map_err(CliError::from)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AverageSummary {
    pub measure_files: Vec<String>,
    pub diagnostics: AveragingDiagnostics,
}

/// average: Krylov-Bogoliubov time averages over the configured window
/// schedule; one measure file per window plus a diagnostics JSON.
pub fn cmd_average(
    cfg: &RunConfig,
    traj_path: Option<&Path>,
    out: &Path,
) -> Result<AverageSummary, CliError> {
    let default_path = out.join("trajectory.nst");
    let traj_path = traj_path.unwrap_or(&default_path);
    let (traj, nu) = io::load_trajectory(traj_path)?;
    let windows = cfg
        .average
        .windows
        .clone()
        .ok_or_else(|| CliError::Config("average.windows is required".into()))?;
    let t0 = cfg.average.t0.unwrap_or_else(|| traj.t0());
    let (measures, diagnostics) =
        time_average_measure(&traj, &windows, t0, cfg.average.band_tol)?;
    let mut files = Vec::new();
    for (i, (window, m)) in measures.iter().enumerate() {
        let path = out.join(format!("measure_{i:02}_T{window}.nsm"));
        io::save_measure(&path, m, nu)?;
        files.push(path.display().to_string());
    }
    let summary = AverageSummary {
        measure_files: files,
        diagnostics,
    };
    io::save_json(&out.join("averaging_diagnostics.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LiouvilleEntry {
    pub test_id: usize,
    pub residual: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PsiEntry {
    pub r: f64,
    pub s_value: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MeasureVerification {
    pub measure_file: String,
    pub window: Option<f64>,
    pub bounds: SuiteReport,
    pub liouville: Vec<LiouvilleEntry>,
    pub psi_sweep: Vec<PsiEntry>,
    pub pass: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerifySummary {
    pub constants: ShapeConstants,
    pub stationarity_gap: Option<f64>,
    pub measures: Vec<MeasureVerification>,
    pub pass: bool,
}

/// Scale for absolute residual tolerances: the size of the terms entering
/// the Liouville and energy functionals on the measure's support.
fn residual_scale(m: &EmpiricalMeasure, p: &FlowParameters) -> f64 {
    let mut scale = p.f_l2();
    for n in m.atom_norms() {
        scale = scale.max(p.nu() * n.da).max(n.h1 * n.h1);
    }
    scale.max(1.0)
}

fn verify_one_measure(
    m: &EmpiricalMeasure,
    source_traj: Option<&Trajectory>,
    p: &FlowParameters,
    c: &ShapeConstants,
    cfg: &RunConfig,
    battery: &[CylindricalTest],
    file: &str,
) -> Result<MeasureVerification, CliError> {
    let bounds = run_bound_suite(m, source_traj, p, c, cfg.verify.tol);
    let scale = residual_scale(m, p);
    let window = m.provenance().window;

    // Along an exact trajectory the residual telescopes to
    // (Phi(u(T)) - Phi(u(0)))/T, so 4 sup|Phi|/T is a safe envelope for
    // finite-window averages; Diracs at steady states get the strict 1e-10.
    let mut liouville = Vec::new();
    for (i, test) in battery.iter().enumerate() {
        let residual = liouville_residual_stationary(m, test, p)?;
        let tolerance = match window {
            Some(t) if t > 0.0 => 4.0 * test.sup_abs_phi() / t + 1e-9 * scale,
            _ => 1e-10 * scale,
        };
        liouville.push(LiouvilleEntry {
            test_id: i,
            residual,
            tolerance,
            verdict: if residual.abs() <= tolerance {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
        });
    }

    // S(psi) along a finite window telescopes the same way with
    // |psi| <= r: envelope r/(2T) plus slack.
    let mut psi_sweep = Vec::new();
    for factor in &cfg.verify.psi_r_factors {
        let r = factor * p.r0() * p.r0();
        if !(r > 0.0) {
            continue;
        }
        let psi = PsiFunction::new(r)?;
        let s_value = energy_inequality_stationary(m, &psi, p)?;
        let tolerance = match window {
            Some(t) if t > 0.0 => psi.r / t + 1e-9 * scale,
            _ => 1e-10 * scale,
        };
        psi_sweep.push(PsiEntry {
            r,
            s_value,
            tolerance,
            verdict: if s_value <= tolerance {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
        });
    }

    let pass = bounds.pass
        && liouville.iter().all(|e| e.verdict == Verdict::Pass)
        && psi_sweep.iter().all(|e| e.verdict == Verdict::Pass);
    Ok(MeasureVerification {
        measure_file: file.to_string(),
        window,
        bounds,
        liouville,
        psi_sweep,
        pass,
    })
}

/// verify: run the full bound suite on the given measures (plus the
/// trajectory-mode checks when the source trajectory is supplied). Missing
/// constants are estimated first and recorded with their provenance.
pub fn cmd_verify(
    cfg: &RunConfig,
    measure_paths: &[PathBuf],
    traj_path: Option<&Path>,
    constants_path: Option<&Path>,
    out: &Path,
) -> Result<VerifySummary, CliError> {
    let p = cfg.build_params()?;
    let constants = match constants_path {
        Some(path) => io::load_json::<ShapeConstants>(path)?,
        None => {
            let c = estimate_shape_constants(
                p.lattice().clone(),
                cfg.verify.constant_samples,
                cfg.run.seed,
            )?;
            io::save_json(&out.join("constants.json"), &c)?;
            c
        }
    };

    let mut paths: Vec<PathBuf> = measure_paths.to_vec();
    if paths.is_empty() {
        let mut found: Vec<PathBuf> = std::fs::read_dir(out)
            .map_err(|e| CliError::Config(format!("cannot list {}: {e}", out.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().map(|x| x == "nsm").unwrap_or(false)
                    && p.file_name()
                        .and_then(|n| n.to_str())
                        .map(|n| n.starts_with("measure_"))
                        .unwrap_or(false)
            })
            .collect();
        found.sort();
        paths = found;
    }
    if paths.is_empty() {
        return Err(CliError::Config(
            "no measure files given and none found in the output directory".into(),
        ));
    }

    let traj = match traj_path {
        Some(path) => Some(io::load_trajectory(path)?.0),
        None => None,
    };
    let stationarity_gap = match &traj {
        Some(t) if t.span() > 0.0 => {
            let window = t.span() / 2.0;
            let shifts = [t.span() / 8.0, t.span() / 4.0, t.span() / 2.0];
            Some(stationarity_diagnostic(t, &shifts, window)?)
        }
        _ => None,
    };

    let mut measures = Vec::new();
    let mut all_pass = true;
    for path in &paths {
        let (m, _) = io::load_measure(path)?;
        let states: Vec<&nsstat_core::SpectralField> =
            m.atoms().iter().map(|(_, u)| u).collect();
        let battery = cylindrical_battery(&p, &states, cfg.verify.battery, cfg.run.seed);
        let v = verify_one_measure(
            &m,
            traj.as_ref(),
            &p,
            &constants,
            cfg,
            &battery,
            &path.display().to_string(),
        )?;
        all_pass &= v.pass;
        measures.push(v);
    }
    let summary = VerifySummary {
        constants,
        stationarity_gap,
        measures,
        pass: all_pass,
    };
    io::save_json(&out.join("suite.json"), &summary)?;
    if !all_pass {
        return Err(CliError::VerificationFailed(format!(
            "see {}",
            out.join("suite.json").display()
        )));
    }
    Ok(summary)
}

/// Predicate spec file: [[component]] tables with kind/bounds.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredicateSpec {
    pub component: Vec<PredicateComponent>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredicateComponent {
    #[serde(flatten)]
    pub observable: nsstat_core::verify::Observable,
    pub lo: f64,
    pub hi: f64,
}

pub fn load_predicate(path: &Path) -> Result<SetPredicate, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let spec: PredicateSpec = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    SetPredicate::new(
        spec.component
            .into_iter()
            .map(|c| (c.observable, c.lo, c.hi))
            .collect(),
    )
    .map_err(CliError::from)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RecurrenceSummary {
    pub visits: usize,
    pub returning: usize,
    pub fraction_returning: f64,
    pub modal_return_time: Option<f64>,
    pub histogram_file: String,
    pub empty: bool,
}

/// recurrence: return-time statistics of the state against a box predicate.
/// A never-visited set yields an empty report (exit 0 with a warning).
pub fn cmd_recurrence(
    traj_path: &Path,
    predicate_path: &Path,
    horizon: Option<f64>,
    min_gap: f64,
    bins: usize,
    out: &Path,
) -> Result<RecurrenceSummary, CliError> {
    let (traj, _) = io::load_trajectory(traj_path)?;
    let e = load_predicate(predicate_path)?;
    let horizon = horizon.unwrap_or_else(|| traj.span());
    let report = recurrence_scan(&traj, &e, horizon, min_gap, bins)?;
    let hist_path = out.join("recurrence_histogram.csv");
    io::atomic_write(&hist_path, |w| {
        use std::io::Write;
        w.write_all(report.histogram_csv().as_bytes())?;
        Ok(())
    })?;
    let summary = RecurrenceSummary {
        visits: report.visits,
        returning: report.returning,
        fraction_returning: report.fraction_returning,
        modal_return_time: report.modal_return_time(),
        histogram_file: hist_path.display().to_string(),
        empty: report.visits == 0,
    };
    io::save_json(&out.join("recurrence_summary.json"), &summary)?;
    Ok(summary)
}

/// estimate-constants: sample-based lower bounds for (c1, c2) and the
/// derived (c3, c4), written as JSON with provenance.
pub fn cmd_estimate_constants(
    cfg: &RunConfig,
    samples: usize,
    out: &Path,
) -> Result<ShapeConstants, CliError> {
    let lattice = cfg.lattice()?;
    let c = estimate_shape_constants(lattice, samples, cfg.run.seed)?;
    io::save_json(&out.join("constants.json"), &c)?;
    Ok(c)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportLine {
    pub source: String,
    pub status: String,
    pub detail: String,
}

/// report: aggregate the JSON artifacts of a run directory into one
/// human-readable summary.
pub fn cmd_report(dir: &Path) -> Result<Vec<ReportLine>, CliError> {
    let mut lines = Vec::new();
    let run_summary = dir.join("run_summary.json");
    if run_summary.exists() {
        let s: SimulateSummary = io::load_json(&run_summary)?;
        lines.push(ReportLine {
            source: "simulate".into(),
            status: if s.audit_pass { "PASS" } else { "FAIL" }.into(),
            detail: format!(
                "steps={} samples={} G={:.3} |u(T)|={:.6e} audit_worst={:.3e}",
                s.steps, s.samples, s.grashof, s.final_l2, s.audit_worst
            ),
        });
    }
    let diag = dir.join("averaging_diagnostics.json");
    if diag.exists() {
        let s: AverageSummary = io::load_json(&diag)?;
        lines.push(ReportLine {
            source: "average".into(),
            status: if s.diagnostics.converged {
                "CONVERGED"
            } else {
                "NOT-CONVERGED"
            }
            .into(),
            detail: format!("windows={:?} measures={}", s.diagnostics.windows, s.measure_files.len()),
        });
    }
    let suite = dir.join("suite.json");
    if suite.exists() {
        let s: VerifySummary = io::load_json(&suite)?;
        for m in &s.measures {
            for b in &m.bounds.bounds {
                lines.push(ReportLine {
                    source: format!("verify:{}:{}", m.measure_file, b.id),
                    status: format!("{:?}", b.verdict).to_uppercase(),
                    detail: format!("left={:.6e} right={:.6e}", b.left, b.right),
                });
            }
        }
        lines.push(ReportLine {
            source: "verify".into(),
            status: if s.pass { "PASS" } else { "FAIL" }.into(),
            detail: format!(
                "c1={:.3} c2={:.3} stationarity_gap={:?}",
                s.constants.c1, s.constants.c2, s.stationarity_gap
            ),
        });
    }
    let rec = dir.join("recurrence_summary.json");
    if rec.exists() {
        let s: RecurrenceSummary = io::load_json(&rec)?;
        lines.push(ReportLine {
            source: "recurrence".into(),
            status: if s.empty { "EMPTY" } else { "OK" }.into(),
            detail: format!(
                "visits={} returning_fraction={:.3} modal_return={:?}",
                s.visits, s.fraction_returning, s.modal_return_time
            ),
        });
    }
    if lines.is_empty() {
        return Err(CliError::Config(format!(
            "no report artifacts found in {}",
            dir.display()
        )));
    }
    io::save_json(&dir.join("report.json"), &lines)?;
    Ok(lines)
}
