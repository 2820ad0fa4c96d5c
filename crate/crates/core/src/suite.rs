//! The standard verification suite: solved fields for a family of measures
//! and exponents on three nested grids, with per-point estimate checks,
//! iteration runs, energy audits and global bounds.

use crate::error::{range_err, Result};
use crate::functionals::{energy_audit, Cylinder, CutoffPair};
use crate::geometry::Point;
use crate::grid::{GridField, GridSpec};
use crate::km_iteration::{run_iteration, Branch, Delta0Case, InvariantCheck, IterationOptions, IterationParams, StopReason};
use crate::measure::{RadialProfile, RadonMeasure};
use crate::params::{make_params, ProblemParams};
use crate::solver::{solve_ibvp_with, SolveDiagnostics, SolverOptions};
use crate::verifier::{
    check_corollary, check_proposition, check_theorem_i, check_theorem_ii, dyadic_radii,
    select_sample_points, theorem_radius, EstimateOptions, EstimateReport, PropositionReport, SamplePoint,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    /// Unit mass at the origin.
    Dirac,
    /// Masses ½ at ±0.4 on the first axis.
    TwoAtom,
    /// Density ½ on the whole ball.
    Uniform,
    /// Density 2 on the shell 0.3 ≤ |x| < 0.5.
    Annular,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 4] = [Self::Dirac, Self::TwoAtom, Self::Uniform, Self::Annular];

    pub fn label(&self) -> &'static str {
        match self {
            Self::Dirac => "dirac",
            Self::TwoAtom => "two_atom",
            Self::Uniform => "uniform",
            Self::Annular => "annular",
        }
    }

    pub fn build(&self, n: usize, radius: f64) -> Result<RadonMeasure> {
        let origin = Point::origin(n);
        match self {
            Self::Dirac => RadonMeasure::dirac(origin, 1.0, radius),
            Self::TwoAtom => RadonMeasure::empty(n, radius)?
                .with_atom(origin.shifted(0, 0.4 * radius), 0.5)?
                .with_atom(origin.shifted(0, -0.4 * radius), 0.5),
            Self::Uniform => RadonMeasure::uniform(n, 0.5, radius),
            Self::Annular => {
                RadonMeasure::empty(n, radius)?.with_radial(origin, RadialProfile::shell(0.3 * radius, 0.5 * radius, 2.0))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteCase {
    pub n: usize,
    pub p: f64,
    pub measure: MeasureKind,
}

impl SuiteCase {
    pub fn label(&self) -> String {
        format!("n{}_p{}_{}", self.n, self.p, self.measure.label())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub cases: Vec<SuiteCase>,
    /// Coarsest (nx, nt) per dimension 1, 2, 3.
    pub coarse_grids: [(usize, usize); 3],
    pub levels: usize,
    pub radius: f64,
    pub horizon: f64,
    pub eps_reg: f64,
    pub samples: usize,
    pub radii: usize,
    /// Distance of sample nodes from the boundary, in coarse cells.
    pub margin: f64,
    pub audit_cylinders: usize,
    pub seed: u64,
    pub wolff_tol: f64,
    pub solver: SolverOptions,
    pub iteration: IterationOptions,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            cases: Vec::new(),
            coarse_grids: [(65, 64), (17, 16), (9, 8)],
            levels: 3,
            radius: 1.0,
            horizon: 1.0,
            eps_reg: 1e-6,
            samples: 25,
            radii: 5,
            margin: 4.0,
            audit_cylinders: 10,
            seed: 20240917,
            wolff_tol: 1e-8,
            solver: SolverOptions::default(),
            iteration: IterationOptions::default(),
        }
    }
}

impl SuiteConfig {
    /// p ∈ {1.2, 1.5, 1.8} for n = 1 and p ∈ {1.6, 1.8} for n = 2, each with
    /// every measure kind.
    pub fn standard() -> Self {
        let mut cases = Vec::new();
        for (n, ps) in [(1usize, vec![1.2, 1.5, 1.8]), (2, vec![1.6, 1.8])] {
            for p in ps {
                for measure in MeasureKind::ALL {
                    cases.push(SuiteCase { n, p, measure });
                }
            }
        }
        Self {
            cases,
            ..Self::default()
        }
    }

    pub fn grid(&self, n: usize, level: usize) -> Result<GridSpec> {
        if !(1..=3).contains(&n) {
            return range_err(format!("dimension {n} unsupported"));
        }
        let (nx, nt) = self.coarse_grids[n - 1];
        let mut g = GridSpec::new(n, nx, nt, self.radius, self.horizon)?;
        for _ in 0..level {
            g = g.refined();
        }
        Ok(g)
    }
}

/// Admissible cylinder and level for the energy audit, fixed on the
/// coarsest grid and reused on the finer ones.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditCylinder {
    pub cylinder: Cylinder,
    pub level: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditOutcome {
    pub cylinder: AuditCylinder,
    pub lhs: f64,
    pub rhs_interior: f64,
    pub rhs_measure: f64,
    pub gamma_emp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationOutcome {
    pub r0: f64,
    pub b: f64,
    pub levels: usize,
    pub stop_reason: StopReason,
    pub delta0: f64,
    pub delta0_case: Delta0Case,
    pub l_limit: f64,
    pub tail_bound: f64,
    pub max_lemma_gamma: f64,
    /// Levels j ≥ 1 that took the root branch.
    pub root_levels: usize,
    pub gamma_emp: f64,
    pub u_at_point: f64,
    pub local_oscillation: f64,
    pub consistent: bool,
    pub invariants: InvariantCheck,
    pub max_slot_count: u64,
    pub non_monotone_scans: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub id: usize,
    pub point: SamplePoint,
    pub theorem_i: EstimateReport,
    pub theorem_ii: EstimateReport,
    pub iteration: std::result::Result<IterationOutcome, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldReport {
    pub case: SuiteCase,
    pub level: usize,
    pub grid: GridSpec,
    pub solve: SolveDiagnostics,
    pub proposition: PropositionReport,
    pub corollary_bounded: bool,
    pub samples: Vec<SampleOutcome>,
    pub audits: Vec<AuditOutcome>,
}

impl FieldReport {
    pub fn max_gamma_i(&self) -> f64 {
        self.samples.iter().map(|s| s.theorem_i.gamma_emp).fold(0.0, f64::max)
    }
    pub fn max_gamma_ii(&self) -> f64 {
        self.samples.iter().map(|s| s.theorem_ii.gamma_emp).fold(0.0, f64::max)
    }
    pub fn max_lemma_gamma(&self) -> f64 {
        self.samples
            .iter()
            .filter_map(|s| s.iteration.as_ref().ok())
            .map(|o| o.max_lemma_gamma)
            .fold(0.0, f64::max)
    }
}

/// max(a, b)/min(a, b); 1 when both vanish, +∞ when exactly one does.
pub fn refinement_ratio(a: f64, b: f64) -> f64 {
    if a == b {
        return 1.0;
    }
    let (lo, hi) = (a.min(b), a.max(b));
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Fixed-order fold used for per-suite maxima.
fn fold_max(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub fields: Vec<FieldReport>,
}

impl SuiteReport {
    pub fn fields_at(&self, level: usize) -> impl Iterator<Item = &FieldReport> {
        self.fields.iter().filter(move |f| f.level == level)
    }

    pub fn max_over_level(&self, level: usize, f: impl Fn(&FieldReport) -> f64) -> f64 {
        fold_max(self.fields_at(level).map(f))
    }

    /// Finest two levels, or None with fewer than two levels.
    pub fn finest_pair(&self) -> Option<(usize, usize)> {
        let l = self.config.levels;
        (l >= 2).then(|| (l - 2, l - 1))
    }

    /// Every bound the suite asserts, one entry per check.
    pub fn checks(&self) -> Vec<SuiteCheck> {
        let mut out = Vec::new();
        for f in &self.fields {
            let tag = format!("{} level {}", f.case.label(), f.level);
            let mass = f.proposition.mass.gamma_emp;
            out.push(SuiteCheck::at_most("mass_ratio", tag.clone(), mass, MASS_RATIO_BOUND));
            out.push(SuiteCheck::finite("proposition_ratio", tag.clone(), f.proposition.estimate.gamma_emp));
            for s in &f.samples {
                let subject = format!("{tag} sample {}", s.id);
                for rep in [&s.theorem_i, &s.theorem_ii] {
                    out.push(SuiteCheck::finite(&format!("{}_ratio", rep.kind.label()), subject.clone(), rep.gamma_emp));
                }
                match &s.iteration {
                    Err(e) => out.push(SuiteCheck::failed("iteration_run", format!("{subject}: {e}"))),
                    Ok(o) => {
                        out.push(SuiteCheck::holds("iteration_invariants", subject.clone(), o.invariants.all()));
                        out.push(SuiteCheck {
                            check: "value_below_limit".into(),
                            subject: subject.clone(),
                            value: o.u_at_point,
                            bound: o.l_limit + 3.0 * o.local_oscillation,
                            passed: o.consistent,
                        });
                        out.push(SuiteCheck::finite("lemma_ratio", subject.clone(), o.max_lemma_gamma));
                    }
                }
            }
            for (i, a) in f.audits.iter().enumerate() {
                out.push(SuiteCheck::finite("energy_ratio", format!("{tag} cylinder {i}"), a.gamma_emp));
            }
        }
        for fa in &self.fields {
            let Some(fb) = self.fields.iter().find(|g| g.case == fa.case && g.level == fa.level + 1) else {
                continue;
            };
            for (i, (x, y)) in fa.audits.iter().zip(&fb.audits).enumerate() {
                out.push(SuiteCheck::at_most(
                    "energy_ratio_refinement",
                    format!("{} levels {}-{} cylinder {i}", fa.case.label(), fa.level, fb.level),
                    refinement_ratio(x.gamma_emp, y.gamma_emp),
                    REFINEMENT_BOUND,
                ));
            }
        }
        if let Some((a, b)) = self.finest_pair() {
            for (name, get) in [
                ("thm_i_refinement", FieldReport::max_gamma_i as fn(&FieldReport) -> f64),
                ("thm_ii_refinement", FieldReport::max_gamma_ii),
            ] {
                let r = refinement_ratio(self.max_over_level(a, get), self.max_over_level(b, get));
                out.push(SuiteCheck::at_most(name, format!("suite levels {a}-{b}"), r, REFINEMENT_BOUND));
            }
            for fa in self.fields_at(a) {
                let Some(fb) = self.fields_at(b).find(|g| g.case == fa.case) else {
                    continue;
                };
                let subject = format!("{} levels {a}-{b}", fa.case.label());
                let r = refinement_ratio(fa.max_lemma_gamma(), fb.max_lemma_gamma());
                out.push(SuiteCheck::at_most("lemma_ratio_refinement", subject.clone(), r, REFINEMENT_BOUND));
                let r = refinement_ratio(fa.proposition.estimate.gamma_emp, fb.proposition.estimate.gamma_emp);
                out.push(SuiteCheck::at_most("proposition_ratio_refinement", subject, r, REFINEMENT_BOUND));
            }
        }
        out
    }

    /// Checks that did not pass, as readable lines.
    pub fn failures(&self) -> Vec<String> {
        self.checks()
            .into_iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} {}: value {:.6e}, bound {:.6e}", c.check, c.subject, c.value, c.bound))
            .collect()
    }
}

/// Largest admissible change factor between consecutive grids.
pub const REFINEMENT_BOUND: f64 = 2.0;
/// Largest admissible sup_t ∫|u| / (T·μ(B_R)).
pub const MASS_RATIO_BOUND: f64 = 1.05;

/// One asserted bound. Finiteness checks carry bound +∞.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteCheck {
    pub check: String,
    pub subject: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

impl SuiteCheck {
    fn at_most(check: &str, subject: String, value: f64, bound: f64) -> Self {
        Self {
            check: check.into(),
            subject,
            value,
            bound,
            passed: value <= bound,
        }
    }

    fn finite(check: &str, subject: String, value: f64) -> Self {
        Self {
            check: check.into(),
            subject,
            value,
            bound: f64::INFINITY,
            passed: value.is_finite(),
        }
    }

    fn holds(check: &str, subject: String, ok: bool) -> Self {
        Self {
            check: check.into(),
            subject,
            value: ok as u8 as f64,
            bound: 1.0,
            passed: ok,
        }
    }

    fn failed(check: &str, subject: String) -> Self {
        Self::holds(check, subject, false)
    }
}

fn iteration_outcome(
    u: &GridField,
    m: &RadonMeasure,
    params: &ProblemParams,
    s: &SamplePoint,
    opts: &IterationOptions,
) -> Result<(IterationParams, IterationOutcome)> {
    let it = IterationParams::fit(u, params, &s.x, s.t, opts)?;
    let sum = run_iteration(u, &it, params, m)?;
    let recs = &sum.state.records;
    Ok((
        it.clone(),
        IterationOutcome {
            r0: it.r0,
            b: it.b,
            levels: recs.len(),
            stop_reason: sum.state.stop_reason.unwrap_or(StopReason::CapReached),
            delta0: sum.delta0.delta0,
            delta0_case: sum.delta0.case,
            l_limit: sum.l_limit,
            tail_bound: sum.tail_bound,
            max_lemma_gamma: sum.max_gamma,
            root_levels: recs.iter().skip(1).filter(|r| r.branch == Branch::KappaRoot).count(),
            gamma_emp: sum.gamma_emp,
            u_at_point: sum.u_at_point,
            local_oscillation: sum.local_oscillation,
            consistent: sum.consistent,
            invariants: sum.invariants(params),
            max_slot_count: recs.iter().map(|r| r.slot_count).max().unwrap_or(0),
            non_monotone_scans: recs.iter().filter(|r| r.monotone_scan == Some(false)).count(),
        },
    ))
}

fn sample_outcome(
    u: &GridField,
    m: &RadonMeasure,
    params: &ProblemParams,
    id: usize,
    s: &SamplePoint,
    cfg: &SuiteConfig,
) -> Result<SampleOutcome> {
    let iteration = iteration_outcome(u, m, params, s, &cfg.iteration);
    let window_scale = iteration.as_ref().ok().map(|(it, _)| it.b);
    let radii = dyadic_radii(theorem_radius(u.grid(), params, s), cfg.radii);
    let opts = EstimateOptions {
        wolff_tol: cfg.wolff_tol,
        window_scale,
    };
    Ok(SampleOutcome {
        id,
        point: *s,
        theorem_i: check_theorem_i(u, m, params, s, &radii, &opts)?,
        theorem_ii: check_theorem_ii(u, m, params, s, &radii, &opts)?,
        iteration: iteration.map(|(_, o)| o).map_err(|e| e.to_string()),
    })
}

/// Random admissible cylinders with level and step read off the coarse field.
pub fn audit_cylinders(u: &GridField, params: &ProblemParams, count: usize, seed: u64) -> Result<Vec<AuditCylinder>> {
    let g = u.grid();
    let p = params.p();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a0d1);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 1000 * count.max(1) {
            return range_err("no admissible audit cylinders found");
        }
        let r = g.radius * rng.gen_range(0.0..0.5f64);
        let dir: Vec<f64> = (0..g.n).map(|_| rng.gen_range(-1.0..1.0f64)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let center = Point::new(&dir.iter().map(|v| v / norm * r).collect::<Vec<_>>());
        let rho = rng.gen_range(0.15..0.35f64) * g.radius;
        let time = rng.gen_range(0.3..0.7f64) * g.horizon;
        let k = g.nearest_time(time);
        let local = u.interpolate(k, &center);
        if !(local > 0.0) {
            continue;
        }
        let level = rng.gen_range(0.0..0.5f64) * local;
        let mut delta = rng.gen_range(0.25..1.0f64) * local;
        // Shrink the height δ^{2−p}ρ^p into the time interval by raising δ.
        let room = time.min(g.horizon - time);
        let height = delta.powf(2.0 - p) * rho.powf(p);
        if height > room {
            delta *= (room / height).powf(1.0 / (2.0 - p)) * 0.999;
        }
        let cyl = Cylinder::new(center, time, rho, delta)?;
        if cyl.check_inside(g, p).is_err() {
            continue;
        }
        out.push(AuditCylinder { cylinder: cyl, level });
    }
    Ok(out)
}

/// A solved suite field with its data.
pub struct SolvedCase {
    pub params: ProblemParams,
    pub measure: RadonMeasure,
    pub field: GridField,
    pub diagnostics: SolveDiagnostics,
}

pub fn solve_case(case: &SuiteCase, level: usize, cfg: &SuiteConfig) -> Result<SolvedCase> {
    let params = make_params(case.n, case.p, cfg.eps_reg, None, None)?;
    let measure = case.measure.build(case.n, cfg.radius)?;
    let grid = cfg.grid(case.n, level)?;
    let sol = solve_ibvp_with(&measure, &params, &grid, &cfg.solver)?;
    Ok(SolvedCase {
        params,
        measure,
        field: sol.field,
        diagnostics: sol.diagnostics,
    })
}

/// Every per-field check on a solved case.
pub fn check_field(
    case: &SuiteCase,
    level: usize,
    solved: &SolvedCase,
    samples: &[SamplePoint],
    cylinders: &[AuditCylinder],
    cfg: &SuiteConfig,
) -> Result<FieldReport> {
    let (u, m, params) = (&solved.field, &solved.measure, &solved.params);
    let grid = *u.grid();
    let proposition = check_proposition(u, m, params, cfg.wolff_tol)?;
    let coarse = cfg.grid(case.n, 0)?;
    let corollary = check_corollary(m, params, cfg.radius, &coarse, None, cfg.wolff_tol)?;
    let sample_reports: Vec<Result<SampleOutcome>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| sample_outcome(u, m, params, i, s, cfg))
        .collect();
    let samples = sample_reports.into_iter().collect::<Result<Vec<_>>>()?;
    let mut audits = Vec::with_capacity(cylinders.len());
    for c in cylinders {
        let cut = CutoffPair::new(&grid, &c.cylinder, params)?;
        let e = energy_audit(u, &c.cylinder, c.level, c.cylinder.delta, &cut, m, params)?;
        audits.push(AuditOutcome {
            cylinder: *c,
            lhs: e.lhs,
            rhs_interior: e.rhs_interior,
            rhs_measure: e.rhs_measure,
            gamma_emp: e.gamma_emp(),
        });
    }
    Ok(FieldReport {
        case: *case,
        level,
        grid,
        solve: solved.diagnostics.clone(),
        proposition,
        corollary_bounded: corollary.bounded,
        samples,
        audits,
    })
}

/// Sample points (shared by all levels) for the case at position `index`.
pub fn case_samples(case: &SuiteCase, index: usize, cfg: &SuiteConfig) -> Result<Vec<SamplePoint>> {
    let coarse = cfg.grid(case.n, 0)?;
    select_sample_points(&coarse, cfg.samples, cfg.margin, cfg.seed.wrapping_add(index as u64))
}

/// Runs every case on every grid level. `progress` sees each finished field.
pub fn run_suite(cfg: &SuiteConfig, mut progress: impl FnMut(&FieldReport)) -> Result<SuiteReport> {
    if cfg.levels == 0 && !cfg.cases.is_empty() {
        return range_err("suite needs at least one grid level");
    }
    let mut fields = Vec::new();
    for (ci, case) in cfg.cases.iter().enumerate() {
        let samples = case_samples(case, ci, cfg)?;
        let mut cylinders = Vec::new();
        for level in 0..cfg.levels {
            let solved = solve_case(case, level, cfg)?;
            if level == 0 && cfg.audit_cylinders > 0 {
                cylinders = audit_cylinders(&solved.field, &solved.params, cfg.audit_cylinders, cfg.seed.wrapping_add(ci as u64))?;
            }
            let rep = check_field(case, level, &solved, &samples, &cylinders, cfg)?;
            progress(&rep);
            fields.push(rep);
        }
    }
    Ok(SuiteReport {
        config: cfg.clone(),
        fields,
    })
}
