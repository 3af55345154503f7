//! Trajectories as first-class objects: the translation, restriction and
//! projection operators of the trajectory space, pasting, energy-budget
//! audits, and omega-limit estimation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{FlowParameters, Norms, SpectralField};

/// Cumulative energy-budget integrals recorded by the integrator from the
/// start of the trajectory: visc = integral of nu ||u_mid||^2 dt and
/// force = integral of (f, u_mid) dt, both with the scheme's own midpoint
/// values so that the audit sees the scheme identity and not quadrature error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetAccumulator {
    pub visc: f64,
    pub force: f64,
}

/// One stored state with cached norms.
#[derive(Debug, Clone)]
pub struct Sample {
    pub t: f64,
    pub field: SpectralField,
    pub norms: Norms,
    pub budget: Option<BudgetAccumulator>,
}

impl Sample {
    pub fn new(t: f64, field: SpectralField) -> Self {
        let norms = field.norms();
        Self {
            t,
            field,
            norms,
            budget: None,
        }
    }
}

/// Time-stamped ordered sequence of states on an interval, with solver
/// provenance. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Trajectory {
    t0: f64,
    t1: f64,
    samples: Vec<Sample>,
    provenance: String,
}

impl Trajectory {
    pub fn new(samples: Vec<Sample>, provenance: impl Into<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("trajectory needs at least one sample".into()));
        }
        for w in samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::InvalidParameter(format!(
                    "sample times must be strictly increasing ({} then {})",
                    w[0].t, w[1].t
                )));
            }
            if !w[0].field.same_lattice(&w[1].field) {
                return Err(Error::LatticeMismatch);
            }
        }
        let t0 = samples.first().unwrap().t;
        let t1 = samples.last().unwrap().t;
        Ok(Self {
            t0,
            t1,
            samples,
            provenance: provenance.into(),
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn span(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    /// Predicate for membership in U_I(R): every sample satisfies |u| <= R.
    pub fn uniformly_bounded_by(&self, r: f64) -> bool {
        self.samples.iter().all(|s| s.norms.l2 <= r)
    }

    /// Translation sigma_tau: (sigma_tau u)(t) = u(t + tau) on the shrunk
    /// interval [t0, t1 - tau].
    pub fn translate(&self, tau: f64) -> Result<Self> {
        if tau < 0.0 {
            return Err(Error::InvalidParameter("translation shift must be >= 0".into()));
        }
        if self.t1 - tau < self.t0 {
            return Err(Error::ShiftTooLarge {
                shift: tau,
                span: self.span(),
            });
        }
        let samples: Vec<Sample> = self
            .samples
            .iter()
            .filter(|s| s.t >= self.t0 + tau - 1e-12 * self.span().max(1.0))
            .map(|s| Sample {
                t: s.t - tau,
                field: s.field.clone(),
                norms: s.norms,
                budget: s.budget,
            })
            .collect();
        Self::new(samples, self.provenance.clone())
    }

    /// Restriction Pi_J: keeps the samples inside [j0, j1].
    pub fn restrict(&self, j0: f64, j1: f64) -> Result<Self> {
        if j0 > j1 || j0 < self.t0 - 1e-12 || j1 > self.t1 + 1e-12 {
            return Err(Error::OutOfInterval {
                t: if j0 < self.t0 { j0 } else { j1 },
                t0: self.t0,
                t1: self.t1,
            });
        }
        let samples: Vec<Sample> = self
            .samples
            .iter()
            .filter(|s| s.t >= j0 - 1e-12 && s.t <= j1 + 1e-12)
            .cloned()
            .collect();
        Self::new(samples, self.provenance.clone())
    }

    fn locate(&self, t: f64) -> Result<usize> {
        if t < self.t0 - 1e-12 || t > self.t1 + 1e-12 {
            return Err(Error::OutOfInterval {
                t,
                t0: self.t0,
                t1: self.t1,
            });
        }
        Ok(self
            .samples
            .partition_point(|s| s.t < t)
            .min(self.samples.len() - 1))
    }

    /// Projection Pi_t: the stored sample at a grid time, or linearly
    /// interpolated coefficients (flagged by the second return value).
    pub fn sample_at(&self, t: f64) -> Result<(SpectralField, bool)> {
        let hi = self.locate(t)?;
        let tol = 1e-9 * self.span().max(1.0);
        if (self.samples[hi].t - t).abs() <= tol {
            return Ok((self.samples[hi].field.clone(), false));
        }
        if hi > 0 && (self.samples[hi - 1].t - t).abs() <= tol {
            return Ok((self.samples[hi - 1].field.clone(), false));
        }
        if hi == 0 {
            return Ok((self.samples[0].field.clone(), false));
        }
        let (a, b) = (&self.samples[hi - 1], &self.samples[hi]);
        let w = (t - a.t) / (b.t - a.t);
        Ok((a.field.linear_comb(1.0 - w, &b.field, w), true))
    }

    /// The stored sample nearest to `t`.
    pub fn nearest_sample(&self, t: f64) -> Result<&Sample> {
        let hi = self.locate(t)?;
        if hi > 0 && (self.samples[hi - 1].t - t).abs() < (self.samples[hi].t - t).abs() {
            Ok(&self.samples[hi - 1])
        } else {
            Ok(&self.samples[hi])
        }
    }

    /// Pastes two trajectories whose seam states agree within `tol` in L2.
    /// The budget integrals of the second leg are offset so audits remain
    /// valid across the seam.
    pub fn paste(first: &Self, second: &Self, tol: f64) -> Result<Self> {
        let left = first.samples.last().unwrap();
        let right = second.samples.first().unwrap();
        if !left.field.same_lattice(&right.field) {
            return Err(Error::LatticeMismatch);
        }
        if (left.t - right.t).abs() > 1e-9 * first.span().max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "pasting requires matching seam times, got {} and {}",
                left.t, right.t
            )));
        }
        let gap = left.field.l2_distance(&right.field);
        if gap > tol {
            return Err(Error::PastingMismatch { gap, tol });
        }
        let offset = match (left.budget, right.budget) {
            (Some(a), Some(b)) => Some(BudgetAccumulator {
                visc: a.visc - b.visc,
                force: a.force - b.force,
            }),
            _ => None,
        };
        let mut samples = first.samples[..first.samples.len() - 1].to_vec();
        samples.extend(second.samples.iter().map(|s| Sample {
            t: s.t,
            field: s.field.clone(),
            norms: s.norms,
            budget: match (s.budget, offset) {
                (Some(b), Some(o)) => Some(BudgetAccumulator {
                    visc: b.visc + o.visc,
                    force: b.force + o.force,
                }),
                _ => None,
            },
        }));
        Self::new(
            samples,
            format!("paste({}; {})", first.provenance, second.provenance),
        )
    }

    /// Trapezoid cumulative integrals of nu ||u||^2 and (f, u) over the
    /// sample grid, used when the integrator did not record budget terms.
    fn trapezoid_budget(&self, p: &FlowParameters) -> Vec<BudgetAccumulator> {
        let mut acc = Vec::with_capacity(self.samples.len());
        let mut visc = 0.0;
        let mut force = 0.0;
        let mut prev: Option<(&Sample, f64)> = None;
        for s in &self.samples {
            let fu = p.forcing().inner_l2(&s.field);
            if let Some((ps, pfu)) = prev {
                let dt = s.t - ps.t;
                visc += 0.5 * dt * p.nu() * (ps.norms.h1 * ps.norms.h1 + s.norms.h1 * s.norms.h1);
                force += 0.5 * dt * (pfu + fu);
            }
            acc.push(BudgetAccumulator { visc, force });
            prev = Some((s, fu));
        }
        acc
    }

    /// Energy-budget audit over every sampled pair t' < t:
    /// D(t', t) = 1/2 |u(t)|^2 + nu int ||u||^2 - 1/2 |u(t')|^2 - int (f, u).
    /// In inequality mode a pair passes iff D <= tol; in Galerkin-equality
    /// mode iff |D| <= tol, with tol = tol_rel * max(1, |u|^2). Each pair is
    /// also checked against the L2+enstrophy form
    /// |u(t)|^2 + nu int ||u||^2 <= |u(t')|^2 + (|f|^2/(nu lambda_1)) (t-t').
    pub fn energy_budget_audit(
        &self,
        p: &FlowParameters,
        mode: AuditMode,
        tol_rel: f64,
    ) -> AuditReport {
        let recorded = self.samples.iter().all(|s| s.budget.is_some());
        let budget: Vec<BudgetAccumulator> = if recorded {
            self.samples.iter().map(|s| s.budget.unwrap()).collect()
        } else {
            self.trapezoid_budget(p)
        };
        let enstrophy_rate = p.f_l2() * p.f_l2() / (p.nu() * p.lambda_1());
        let mut pairs = Vec::new();
        let mut worst_budget = f64::NEG_INFINITY;
        let mut worst_enstrophy = f64::NEG_INFINITY;
        let mut pass = true;
        for i in 0..self.samples.len() {
            for j in (i + 1)..self.samples.len() {
                let (a, b) = (&self.samples[i], &self.samples[j]);
                let e_a = a.norms.l2 * a.norms.l2;
                let e_b = b.norms.l2 * b.norms.l2;
                let visc = budget[j].visc - budget[i].visc;
                let force = budget[j].force - budget[i].force;
                let d = 0.5 * e_b + visc - 0.5 * e_a - force;
                let tol = tol_rel * e_a.max(e_b).max(1.0);
                let budget_ok = match mode {
                    AuditMode::Inequality => d <= tol,
                    AuditMode::GalerkinEquality => d.abs() <= tol,
                };
                let d_enstrophy = e_b + visc - e_a - enstrophy_rate * (b.t - a.t);
                let enstrophy_ok = d_enstrophy <= tol;
                worst_budget = worst_budget.max(match mode {
                    AuditMode::Inequality => d,
                    AuditMode::GalerkinEquality => d.abs(),
                });
                worst_enstrophy = worst_enstrophy.max(d_enstrophy);
                pass &= budget_ok && enstrophy_ok;
                pairs.push(AuditPair {
                    t_prime: a.t,
                    t: b.t,
                    d,
                    d_enstrophy,
                    pass: budget_ok && enstrophy_ok,
                });
            }
        }
        AuditReport {
            mode,
            recorded,
            pairs,
            worst_budget,
            worst_enstrophy,
            pass,
        }
    }

    /// Clusters tail samples by L2 distance on a low-mode block (a surrogate
    /// for weak-topology proximity) with single-linkage at `radius`; returns
    /// one representative per cluster with its visitation frequency.
    pub fn omega_limit_estimate(
        &self,
        tail_fraction: f64,
        radius: f64,
        block_size: usize,
    ) -> Result<Vec<(SpectralField, f64)>> {
        let start = self.t1 - tail_fraction.clamp(0.0, 1.0) * self.span();
        let tail: Vec<&Sample> = self.samples.iter().filter(|s| s.t >= start).collect();
        if tail.len() < 10 {
            return Err(Error::InvalidParameter(format!(
                "omega-limit estimate needs >= 10 tail samples, got {}",
                tail.len()
            )));
        }
        let lattice = tail[0].field.lattice();
        let block: Vec<_> = lattice
            .modes_by_eigenvalue()
            .into_iter()
            .take(block_size)
            .collect();
        let vol = lattice.volume();
        let dist = |a: &SpectralField, b: &SpectralField| -> f64 {
            let mut s = 0.0;
            for &k in &block {
                for c in 0..3 {
                    s += (a.coeff(c, k) - b.coeff(c, k)).norm_sqr();
                }
            }
            (vol * s).sqrt()
        };
        // Single-linkage union-find.
        let m = tail.len();
        let mut parent: Vec<usize> = (0..m).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            if parent[i] != i {
                let r = find(parent, parent[i]);
                parent[i] = r;
            }
            parent[i]
        }
        for i in 0..m {
            for j in (i + 1)..m {
                if dist(&tail[i].field, &tail[j].field) <= radius {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri] = rj;
                    }
                }
            }
        }
        let mut clusters: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in 0..m {
            let r = find(&mut parent, i);
            clusters.entry(r).or_default().push(i);
        }
        let mut reps = Vec::new();
        for members in clusters.values() {
            // Medoid: member minimizing the total distance to the others.
            let mut best = members[0];
            let mut best_cost = f64::INFINITY;
            for &i in members {
                let cost: f64 = members
                    .iter()
                    .map(|&j| dist(&tail[i].field, &tail[j].field))
                    .sum();
                if cost < best_cost {
                    best_cost = cost;
                    best = i;
                }
            }
            reps.push((tail[best].field.clone(), members.len() as f64 / m as f64));
        }
        reps.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        Ok(reps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditMode {
    /// The paper's energy inequality: PASS iff D <= tol.
    Inequality,
    /// Galerkin dynamics makes the budget an equality: PASS iff |D| <= tol.
    GalerkinEquality,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AuditPair {
    pub t_prime: f64,
    pub t: f64,
    pub d: f64,
    pub d_enstrophy: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub mode: AuditMode,
    /// True when the integrator's recorded budget integrals were used,
    /// false when the audit fell back to trapezoid quadrature.
    pub recorded: bool,
    pub pairs: Vec<AuditPair>,
    pub worst_budget: f64,
    pub worst_enstrophy: f64,
    pub pass: bool,
}

impl AuditReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_prime,t,d,d_enstrophy,verdict\n");
        for p in &self.pairs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.t_prime,
                p.t,
                p.d,
                p.d_enstrophy,
                if p.pass { "PASS" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Weighted list of trajectories, a finite surrogate for a measure on
/// trajectory space. Weights are normalized to sum to one.
#[derive(Debug, Clone)]
pub struct Ensemble {
    members: Vec<(f64, Trajectory)>,
}

impl Ensemble {
    pub fn new(members: Vec<(f64, Trajectory)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidParameter("ensemble needs at least one member".into()));
        }
        if members.iter().any(|(w, _)| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidParameter("ensemble weights must be nonnegative".into()));
        }
        let total: f64 = members.iter().map(|(w, _)| w).sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("ensemble weights sum to zero".into()));
        }
        let first = &members[0].1.samples()[0].field;
        if !members
            .iter()
            .all(|(_, t)| t.samples()[0].field.same_lattice(first))
        {
            return Err(Error::LatticeMismatch);
        }
        let members = if (total - 1.0).abs() <= 1e-12 {
            members
        } else {
            members.into_iter().map(|(w, t)| (w / total, t)).collect()
        };
        Ok(Self { members })
    }

    pub fn uniform(trajectories: Vec<Trajectory>) -> Result<Self> {
        let n = trajectories.len().max(1);
        Self::new(
            trajectories
                .into_iter()
                .map(|t| (1.0 / n as f64, t))
                .collect(),
        )
    }

    pub fn members(&self) -> &[(f64, Trajectory)] {
        &self.members
    }
}
