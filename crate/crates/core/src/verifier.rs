//! End-to-end checks of the pointwise estimates, the local boundedness
//! criterion and the global bounds, with empirical constants.

use crate::error::{range_err, Result};
use crate::functionals::BallLattice;
use crate::geometry::Point;
use crate::grid::{GridField, GridSpec};
use crate::km_iteration::{radius_bound, windowed_integral};
use crate::measure::RadonMeasure;
use crate::params::ProblemParams;
use crate::solver::{mass_history, sup_norm_on_window};
use crate::wolff::{wolff_potential, wolff_sup_over_ball, WolffExponents};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    ThmI,
    ThmIi,
    PropCaseI,
    PropCaseIi,
    MassBound,
}

impl EstimateKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::ThmI => "thm_i",
            Self::ThmIi => "thm_ii",
            Self::PropCaseI => "prop_case_i",
            Self::PropCaseIi => "prop_case_ii",
            Self::MassBound => "mass_bound",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhsTerm {
    pub name: String,
    pub value: f64,
}

fn term(name: &str, value: f64) -> RhsTerm {
    RhsTerm {
        name: name.to_string(),
        value,
    }
}

/// lhs / Σ terms; zero when a term is +∞ or lhs vanishes, +∞ when only the
/// right side vanishes.
pub fn gamma_ratio(lhs: f64, terms: &[RhsTerm]) -> f64 {
    if terms.iter().any(|t| t.value.is_infinite()) || lhs == 0.0 {
        return 0.0;
    }
    let rhs: f64 = terms.iter().map(|t| t.value).sum();
    if rhs > 0.0 {
        lhs / rhs
    } else {
        f64::INFINITY
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusEstimate {
    pub radius: f64,
    pub terms: Vec<RhsTerm>,
    pub gamma_emp: f64,
    /// Same ratio with the R² term dropped.
    pub gamma_without_r2: f64,
    /// Ratio with the space-time average taken over t0 ∓ B^{2−p}R^β.
    pub gamma_windowed: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub kind: EstimateKind,
    pub lhs: f64,
    /// Terms at the radius attaining the largest ratio.
    pub rhs_terms: Vec<RhsTerm>,
    /// Largest ratio over the radius sweep.
    pub gamma_emp: f64,
    pub gamma_without_r2: f64,
    /// Some right-hand term was +∞.
    pub divergent: bool,
    pub radii: Vec<RadiusEstimate>,
    pub point: Option<Point>,
    pub time: Option<f64>,
    pub grid: GridSpec,
}

impl EstimateReport {
    fn assemble(kind: EstimateKind, lhs: f64, radii: Vec<RadiusEstimate>, point: Option<Point>, time: Option<f64>, grid: GridSpec) -> Self {
        let best = radii
            .iter()
            .enumerate()
            .fold(None::<usize>, |b, (i, r)| match b {
                Some(j) if radii[j].gamma_emp >= r.gamma_emp => Some(j),
                _ => Some(i),
            })
            .expect("at least one radius");
        EstimateReport {
            kind,
            lhs,
            rhs_terms: radii[best].terms.clone(),
            gamma_emp: radii[best].gamma_emp,
            gamma_without_r2: radii.iter().map(|r| r.gamma_without_r2).fold(0.0, f64::max),
            divergent: radii.iter().any(|r| r.terms.iter().any(|t| t.value.is_infinite())),
            radii,
            point,
            time,
            grid,
        }
    }
}

/// A node of the space-time grid used as a base point (x0, t0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub x: Point,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub wolff_tol: f64,
    /// B for the windowed variant of the space-time average.
    pub window_scale: Option<f64>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            wolff_tol: 1e-8,
            window_scale: None,
        }
    }
}

/// Nodal value of u at the node nearest to the sample.
pub fn nodal_value(u: &GridField, s: &SamplePoint) -> Result<f64> {
    let g = u.grid();
    match g.nearest_node(&s.x) {
        Some(node) if s.t >= 0.0 && s.t <= g.horizon => Ok(u.value(g.nearest_time(s.t), node)),
        _ => range_err("sample point lies outside the grid"),
    }
}

/// Half of min{1, t0^{1/β}, (T−t0)^{1/β}, R − |x0|}.
pub fn theorem_radius(grid: &GridSpec, params: &ProblemParams, s: &SamplePoint) -> f64 {
    0.5 * radius_bound(grid, params, &s.x, s.t)
}

/// r0·2^{−i}, i = 0..count.
pub fn dyadic_radii(r0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| r0 * 0.5f64.powi(i as i32)).collect()
}

fn check_radii(u: &GridField, s: &SamplePoint, params: &ProblemParams, radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return range_err("radius list is empty");
    }
    let bound = theorem_radius(u.grid(), params, s);
    match radii.iter().find(|&&r| !(r > 0.0 && r <= bound * (1.0 + 1e-12))) {
        Some(r) => range_err(format!("radius {r} outside (0, {bound}]")),
        None => Ok(()),
    }
}

fn theorem_check(
    kind: EstimateKind,
    u: &GridField,
    m: &RadonMeasure,
    params: &ProblemParams,
    s: &SamplePoint,
    radii: &[f64],
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    check_radii(u, s, params, radii)?;
    let g = u.grid();
    let lhs = nodal_value(u, s)?;
    let (n, p, beta) = (params.n() as f64, params.p(), params.beta());
    let exps = WolffExponents::from(params);
    let mut out = Vec::with_capacity(radii.len());
    for &r in radii {
        let w = wolff_potential(m, exps, &s.x, 2.0 * r, opts.wolff_tol)?.value;
        let (middle, windowed) = match kind {
            EstimateKind::ThmI => {
                let avg = |lo: f64, hi: f64| (r.powf(-(p + n)) * windowed_integral(u, &s.x, r, lo, hi)).powf(1.0 / (3.0 - p));
                let win = opts.window_scale.map(|b| {
                    let half = b.powf(2.0 - p) * r.powf(beta);
                    avg(s.t - half, s.t + half)
                });
                (term("space_time_average", avg(0.0, g.horizon)), win)
            }
            _ => (term("sup_time_l1", r.powf(-n) * sup_positive_l1(u, &s.x, r)), None),
        };
        let terms = vec![term("radius_sq", r * r), middle.clone(), term("wolff_2r", w)];
        let gamma_windowed = windowed.map(|v| gamma_ratio(lhs, &[term("radius_sq", r * r), term("windowed_average", v), term("wolff_2r", w)]));
        out.push(RadiusEstimate {
            radius: r,
            gamma_emp: gamma_ratio(lhs, &terms),
            gamma_without_r2: gamma_ratio(lhs, &terms[1..]),
            gamma_windowed,
            terms,
        });
    }
    Ok(EstimateReport::assemble(kind, lhs, out, Some(s.x), Some(s.t), *g))
}

/// sup over time levels of ∫_{B_r(x)} u_+.
pub fn sup_positive_l1(u: &GridField, x: &Point, r: f64) -> f64 {
    let lat = BallLattice::new(u.grid(), x, r);
    (0..=u.grid().nt)
        .map(|k| lat.sample(u, k).iter().map(|v| v.max(0.0)).sum::<f64>() * lat.weight)
        .fold(0.0, f64::max)
}

/// u(x0,t0) against R² + (R^{−(p+n)}∬_{B_R×(0,T)} u_+)^{1/(3−p)} + W(x0,2R).
pub fn check_theorem_i(
    u: &GridField,
    m: &RadonMeasure,
    params: &ProblemParams,
    s: &SamplePoint,
    radii: &[f64],
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    theorem_check(EstimateKind::ThmI, u, m, params, s, radii, opts)
}

/// u(x0,t0) against R² + R^{−n} sup_t ∫_{B_R} u_+ + W(x0,2R).
pub fn check_theorem_ii(
    u: &GridField,
    m: &RadonMeasure,
    params: &ProblemParams,
    s: &SamplePoint,
    radii: &[f64],
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    theorem_check(EstimateKind::ThmIi, u, m, params, s, radii, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorollaryReport {
    pub bounded: bool,
    pub sup_wolff: f64,
    pub argmax: Option<Point>,
    /// max u over nodes at least 4 cells inside the domain, when a field is given.
    pub field_interior_sup: Option<f64>,
}

pub fn check_corollary(
    m: &RadonMeasure,
    params: &ProblemParams,
    radius: f64,
    sample_grid: &GridSpec,
    field: Option<&GridField>,
    wolff_tol: f64,
) -> Result<CorollaryReport> {
    let sup = wolff_sup_over_ball(m, WolffExponents::from(params), radius, sample_grid, wolff_tol)?;
    let bounded = sup.value.is_finite();
    let field_interior_sup = match field {
        Some(u) if bounded => {
            let g = u.grid();
            let limit = g.radius - 4.0 * g.h();
            let inner: Vec<usize> = (0..g.node_count()).filter(|&i| g.node_point(i).norm() <= limit).collect();
            Some(
                (0..=g.nt)
                    .flat_map(|k| inner.iter().map(move |&i| u.value(k, i)))
                    .fold(0.0, f64::max),
            )
        }
        _ => None,
    };
    Ok(CorollaryReport {
        bounded,
        sup_wolff: sup.value,
        argmax: sup.argmax,
        field_interior_sup,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    LongTime,
    ShortTime,
}

/// 4^{1/(p−1)} R^{β/(p−1)} μ(B_R)^{(2−p)/(p−1)}
pub fn proposition_threshold(params: &ProblemParams, radius: f64, mass: f64) -> f64 {
    let (p, beta) = (params.p(), params.beta());
    4f64.powf(1.0 / (p - 1.0)) * radius.powf(beta / (p - 1.0)) * mass.powf((2.0 - p) / (p - 1.0))
}

pub fn proposition_regime(params: &ProblemParams, radius: f64, mass: f64, horizon: f64) -> Regime {
    if horizon >= proposition_threshold(params, radius, mass) {
        Regime::LongTime
    } else {
        Regime::ShortTime
    }
}

/// min{1, (1/4)^{1/β} R^{−1} T^{(p−1)/β} μ(B_R)^{(p−2)/β}}
pub fn covering_sigma(params: &ProblemParams, radius: f64, mass: f64, horizon: f64) -> f64 {
    let (p, beta) = (params.p(), params.beta());
    if mass == 0.0 {
        return 1.0;
    }
    let s = 0.25f64.powf(1.0 / beta) / radius * horizon.powf((p - 1.0) / beta) * mass.powf((p - 2.0) / beta);
    s.min(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropositionReport {
    pub regime: Regime,
    pub threshold: f64,
    pub sigma: f64,
    pub ball_mass: f64,
    /// sup over B_R of W(·, 2R) on the grid nodes.
    pub sup_wolff: f64,
    pub estimate: EstimateReport,
    /// sup_t Σ|u|·h^n against T·μ(B_R); passes when gamma_emp ≤ 1.05.
    pub mass: EstimateReport,
}

impl PropositionReport {
    pub fn mass_bound_holds(&self) -> bool {
        self.mass.gamma_emp <= crate::suite::MASS_RATIO_BOUND
    }
}

/// Global bounds for a field solved on B_R × (0, T).
pub fn check_proposition(
    u: &GridField,
    m: &RadonMeasure,
    params: &ProblemParams,
    wolff_tol: f64,
) -> Result<PropositionReport> {
    let g = u.grid();
    let (n, p, beta) = (params.n() as f64, params.p(), params.beta());
    let (r, t) = (g.radius, g.horizon);
    let mass = m.ball_mass(&Point::origin(g.n), r);
    let regime = proposition_regime(params, r, mass, t);
    let sup_w = wolff_sup_over_ball(m, WolffExponents::from(params), 2.0 * r, g, wolff_tol)?.value;
    let lhs = sup_norm_on_window(u, 0.25 * t, 0.75 * t);
    let (kind, first) = match regime {
        Regime::LongTime => (EstimateKind::PropCaseI, term("time_scale", (t / r.powf(beta)).powf(1.0 / (2.0 - p)))),
        Regime::ShortTime => (
            EstimateKind::PropCaseIi,
            term(
                "short_time",
                if sup_w.is_infinite() {
                    f64::INFINITY
                } else {
                    (r.powf(p) / t).powf((n - p) / beta) * sup_w.powf(p * (p - 1.0) / beta)
                },
            ),
        ),
    };
    let terms = vec![first, term("radius_sq", r * r), term("sup_wolff_2r", sup_w)];
    let estimate = EstimateReport::assemble(
        kind,
        lhs,
        vec![RadiusEstimate {
            radius: r,
            gamma_emp: gamma_ratio(lhs, &terms),
            gamma_without_r2: gamma_ratio(lhs, &[terms[0].clone(), terms[2].clone()]),
            gamma_windowed: None,
            terms,
        }],
        None,
        None,
        *g,
    );
    let mass_lhs = mass_history(u).into_iter().map(|(_, v)| v).fold(0.0, f64::max);
    let mass_terms = vec![term("horizon_times_mass", t * mass)];
    let mass_report = EstimateReport::assemble(
        EstimateKind::MassBound,
        mass_lhs,
        vec![RadiusEstimate {
            radius: r,
            gamma_emp: gamma_ratio(mass_lhs, &mass_terms),
            gamma_without_r2: gamma_ratio(mass_lhs, &mass_terms),
            gamma_windowed: None,
            terms: mass_terms,
        }],
        None,
        None,
        *g,
    );
    Ok(PropositionReport {
        regime,
        threshold: proposition_threshold(params, r, mass),
        sigma: covering_sigma(params, r, mass, t),
        ball_mass: mass,
        sup_wolff: sup_w,
        estimate,
        mass: mass_report,
    })
}

/// `count` distinct nodes of `grid`, at least `margin` cells inside the
/// domain, at time levels in [T/4, 3T/4], drawn with a seeded ChaCha8.
pub fn select_sample_points(grid: &GridSpec, count: usize, margin: f64, seed: u64) -> Result<Vec<SamplePoint>> {
    let limit = grid.radius - margin * grid.h();
    let nodes: Vec<usize> = (0..grid.node_count())
        .filter(|&i| grid.node_point(i).norm() <= limit + 1e-12)
        .collect();
    let times: Vec<usize> = (0..=grid.nt)
        .filter(|&k| {
            let t = grid.time(k);
            t >= 0.25 * grid.horizon - 1e-12 && t <= 0.75 * grid.horizon + 1e-12
        })
        .collect();
    let total = nodes.len() * times.len();
    if total < count {
        return range_err(format!("grid offers {total} admissible samples, {count} requested"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, total, count).into_vec();
    picks.sort_unstable();
    Ok(picks
        .into_iter()
        .map(|i| SamplePoint {
            x: grid.node_point(nodes[i / times.len()]),
            t: grid.time(times[i % times.len()]),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::make_params;

    fn grid1() -> GridSpec {
        GridSpec::new(1, 65, 64, 1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_field_gives_zero_ratios() {
        let pp = make_params(1, 1.5, 1e-6, None, None).unwrap();
        let g = grid1();
        let u = GridField::zeros(g);
        let m = RadonMeasure::dirac(Point::new(&[0.25]), 1.0, 1.0).unwrap();
        let s = SamplePoint {
            x: Point::new(&[0.0]),
            t: 0.5,
        };
        let radii = dyadic_radii(theorem_radius(&g, &pp, &s), 5);
        for rep in [
            check_theorem_i(&u, &m, &pp, &s, &radii, &EstimateOptions::default()).unwrap(),
            check_theorem_ii(&u, &m, &pp, &s, &radii, &EstimateOptions::default()).unwrap(),
        ] {
            assert_eq!(rep.lhs, 0.0);
            assert!(rep.radii.iter().all(|r| r.gamma_emp == 0.0));
        }
    }

    #[test]
    fn average_term_scales_with_field() {
        let pp = make_params(1, 1.5, 1e-6, None, None).unwrap();
        let g = grid1();
        let u = GridField::from_fn(g, |x, t| t * (1.0 - x.norm() * x.norm())).unwrap();
        let m = RadonMeasure::empty(1, 1.0).unwrap();
        let s = SamplePoint {
            x: Point::new(&[0.125]),
            t: 0.5,
        };
        let radii = [0.2];
        let a = check_theorem_i(&u, &m, &pp, &s, &radii, &EstimateOptions::default()).unwrap();
        let b = check_theorem_i(&u.scaled(3.0), &m, &pp, &s, &radii, &EstimateOptions::default()).unwrap();
        let ratio = b.radii[0].terms[1].value / a.radii[0].terms[1].value;
        assert!((ratio / 3f64.powf(1.0 / 1.5) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn constant_field_sup_term() {
        let pp = make_params(2, 1.8, 1e-6, None, None).unwrap();
        let g = GridSpec::new(2, 33, 16, 1.0, 1.0).unwrap();
        let c = 0.7;
        let u = GridField::from_fn(g, |_, _| c).unwrap();
        let m = RadonMeasure::empty(2, 1.0).unwrap();
        let s = SamplePoint {
            x: Point::new(&[0.0, 0.0]),
            t: 0.5,
        };
        let r = 0.25;
        let rep = check_theorem_ii(&u, &m, &pp, &s, &[r], &EstimateOptions::default()).unwrap();
        let mid = rep.radii[0].terms[1].value;
        assert!((mid / (c * std::f64::consts::PI) - 1.0).abs() < 1e-12, "{mid}");
        assert!(rep.gamma_emp < 1.0 / std::f64::consts::PI);
    }

    #[test]
    fn corollary_cases() {
        let pp = make_params(2, 1.6, 1e-6, None, None).unwrap();
        let g = GridSpec::new(2, 9, 4, 1.0, 1.0).unwrap();
        let zero = RadonMeasure::empty(2, 1.0).unwrap();
        assert!(check_corollary(&zero, &pp, 0.5, &g, None, 1e-8).unwrap().bounded);
        let uni = RadonMeasure::uniform(2, 0.5, 1.0).unwrap();
        assert!(check_corollary(&uni, &pp, 0.5, &g, None, 1e-8).unwrap().bounded);
        let dirac = RadonMeasure::dirac(Point::origin(2), 1.0, 1.0).unwrap();
        assert!(!check_corollary(&dirac, &pp, 0.5, &g, None, 1e-8).unwrap().bounded);
    }

    #[test]
    fn regime_threshold_and_sigma() {
        let pp = make_params(1, 1.5, 1e-6, None, None).unwrap();
        let ts = proposition_threshold(&pp, 1.0, 0.05);
        assert!((ts - 0.8).abs() < 1e-14);
        assert_eq!(proposition_regime(&pp, 1.0, 0.05, 1.01 * ts), Regime::LongTime);
        assert_eq!(proposition_regime(&pp, 1.0, 0.05, 0.99 * ts), Regime::ShortTime);
        assert_eq!(proposition_regime(&pp, 1.0, 0.0, 1e-9), Regime::LongTime);
        // (1/4)·T^{1/2}·μ^{−1/2} with β = 1
        let s = covering_sigma(&pp, 1.0, 0.05, 0.5);
        assert!((s - 0.25 * (0.5f64 / 0.05).sqrt()).abs() < 1e-14);
        assert_eq!(covering_sigma(&pp, 1.0, 0.05, 100.0), 1.0);
    }

    #[test]
    fn samples_are_seeded_nodes() {
        let g = GridSpec::new(2, 17, 16, 1.0, 1.0).unwrap();
        let a = select_sample_points(&g, 25, 4.0, 7).unwrap();
        assert_eq!(a, select_sample_points(&g, 25, 4.0, 7).unwrap());
        for s in &a {
            assert!(s.x.norm() <= 1.0 - 4.0 * g.h() + 1e-12);
            assert!(s.t >= 0.25 && s.t <= 0.75);
            let node = g.nearest_node(&s.x).unwrap();
            assert_eq!(g.node_point(node), s.x);
        }
    }
}
