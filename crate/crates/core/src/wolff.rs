//! Truncated Wolff potential W(x, R) = ∫₀^R (μ(B_r(x)) r^{p−n})^{1/(p−1)} dr/r.
//!
//! The integral is taken in t = log r. Between consecutive radii at which
//! r ↦ μ(B_r(x)) jumps or kinks it is smooth and adaptive Simpson applies.
//! Below the smallest such radius the integrand is a smooth power-like
//! function and is summed octave by octave, either closing with an analytic
//! tail or being declared divergent.

use crate::error::{range_err, Error, Result};
use crate::geometry::Point;
use crate::grid::GridSpec;
use crate::measure::RadonMeasure;
use crate::params::ProblemParams;
use crate::quadrature::{adaptive_simpson, gauss};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_BUDGET: usize = 1_000_000;

/// Minimum excess of the inner log-log decay over −1 before it counts as
/// divergent.
const SLOPE_MARGIN: f64 = 0.05;
const DIVERGENCE_OCTAVES: usize = 8;
const MAX_OCTAVES: usize = 200;
/// Segment ends are pulled inward by this much in log r so that jumps of
/// μ(B_r) at the ends are seen as one-sided limits.
const END_NUDGE: f64 = 1e-12;

/// The two exponents the potential depends on. Unlike [`ProblemParams`]
/// this only requires p > 1, so potentials outside the parabolic range can
/// be evaluated too.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WolffExponents {
    pub n: usize,
    pub p: f64,
}

impl WolffExponents {
    pub fn new(n: usize, p: f64) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return range_err(format!("dimension {n} unsupported"));
        }
        if !(p > 1.0 && p.is_finite()) {
            return range_err(format!("Wolff exponent p = {p} must exceed 1"));
        }
        Ok(Self { n, p })
    }
}

impl From<&ProblemParams> for WolffExponents {
    fn from(pp: &ProblemParams) -> Self {
        Self {
            n: pp.n(),
            p: pp.p(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WolffProfile {
    pub x: Point,
    pub radius: f64,
    /// +∞ when the integral diverges at r → 0.
    pub value: f64,
    pub divergent: bool,
    /// Smallest radius at which the integrand was sampled.
    pub inner_cutoff: f64,
    pub error_estimate: f64,
    /// Last measured log-log slope of the dr-integrand near r = 0.
    pub inner_slope: Option<f64>,
    pub intervals: usize,
}

struct Integrand<'a> {
    m: &'a RadonMeasure,
    x: Point,
    n: f64,
    p: f64,
}

impl Integrand<'_> {
    /// (μ(B_r) r^{p−n})^{1/(p−1)} at r = e^t.
    fn at(&self, t: f64) -> f64 {
        let r = t.exp();
        let mass = self.m.ball_mass(&self.x, r);
        if mass <= 0.0 {
            return 0.0;
        }
        ((mass.ln() + (self.p - self.n) * t) / (self.p - 1.0)).exp()
    }

    fn on(&self, ta: f64, tb: f64) -> impl Fn(f64) -> f64 + '_ {
        let eta = END_NUDGE * (tb - ta).min(1.0);
        move |t: f64| self.at(t.clamp(ta + eta, tb - eta))
    }
}

pub fn wolff_potential(
    m: &RadonMeasure,
    exps: WolffExponents,
    x: &Point,
    radius: f64,
    tol: f64,
) -> Result<WolffProfile> {
    wolff_potential_with_budget(m, exps, x, radius, tol, DEFAULT_BUDGET)
}

pub fn wolff_potential_with_budget(
    m: &RadonMeasure,
    exps: WolffExponents,
    x: &Point,
    radius: f64,
    tol: f64,
    budget: usize,
) -> Result<WolffProfile> {
    if !(radius > 0.0 && radius.is_finite()) {
        return range_err(format!("Wolff radius {radius} must be positive"));
    }
    if !(tol > 0.0) {
        return range_err(format!("tolerance {tol} must be positive"));
    }
    if x.dim() != m.dim() || exps.n != m.dim() {
        return range_err("dimension mismatch between point, measure and exponents");
    }
    let f = Integrand {
        m,
        x: *x,
        n: exps.n as f64,
        p: exps.p,
    };
    let mut profile = WolffProfile {
        x: *x,
        radius,
        value: 0.0,
        divergent: false,
        inner_cutoff: radius,
        error_estimate: 0.0,
        inner_slope: None,
        intervals: 0,
    };
    if m.ball_mass(x, radius) <= 0.0 {
        return Ok(profile);
    }

    let mut knots: Vec<f64> = m
        .mass_breakpoints(x)
        .into_iter()
        .filter(|&r| r < radius * (1.0 - 1e-13))
        .map(f64::ln)
        .collect();
    let t_top = radius.ln();
    let t_inner = knots.first().copied().unwrap_or(t_top);
    knots.push(t_top);
    let outer: Vec<(f64, f64)> = knots
        .windows(2)
        .map(|w| (w[0], w[1]))
        .filter(|(a, b)| b > a)
        .collect();
    let outer_len: f64 = outer.iter().map(|(a, b)| b - a).sum();

    let coarse: f64 = outer.iter().map(|&(a, b)| gauss(16, a, b, f.on(a, b))).sum();
    let inner_coarse = gauss(16, t_inner - std::f64::consts::LN_2, t_inner, f.on(t_inner - std::f64::consts::LN_2, t_inner));
    let scale = coarse.max(inner_coarse);

    let mut attempt_scale = scale;
    for _ in 0..2 {
        let mut value = 0.0;
        let mut error = 0.0;
        let mut intervals = 0usize;
        let mut converged = true;
        for &(a, b) in &outer {
            let share = 0.5 * tol * attempt_scale * (b - a) / outer_len;
            let r = adaptive_simpson(f.on(a, b), a, b, share, budget.saturating_sub(intervals).max(1));
            value += r.value;
            error += r.error;
            intervals += r.intervals;
            converged &= r.converged;
        }

        let inner = inner_octaves(&f, t_inner, tol, attempt_scale, value, budget.saturating_sub(intervals).max(1))?;
        intervals += inner.intervals;
        profile.inner_cutoff = inner.cutoff;
        profile.inner_slope = inner.slope;
        profile.intervals = intervals;
        if inner.divergent {
            profile.value = f64::INFINITY;
            profile.divergent = true;
            profile.error_estimate = 0.0;
            return Ok(profile);
        }
        value += inner.value;
        error += inner.error;
        converged &= inner.converged;
        profile.value = value;
        profile.error_estimate = error;
        if error <= tol * value {
            return Ok(profile);
        }
        if !converged || intervals >= budget {
            return Err(Error::Quadrature {
                tol,
                estimate: error / value.max(f64::MIN_POSITIVE),
                intervals,
            });
        }
        attempt_scale = value;
    }
    Err(Error::Quadrature {
        tol,
        estimate: profile.error_estimate / profile.value.max(f64::MIN_POSITIVE),
        intervals: profile.intervals,
    })
}

struct InnerSum {
    value: f64,
    error: f64,
    intervals: usize,
    converged: bool,
    divergent: bool,
    cutoff: f64,
    slope: Option<f64>,
}

fn inner_octaves(
    f: &Integrand<'_>,
    t_top: f64,
    tol: f64,
    scale: f64,
    outer_value: f64,
    budget: usize,
) -> Result<InnerSum> {
    let ln2 = std::f64::consts::LN_2;
    let mut out = InnerSum {
        value: 0.0,
        error: 0.0,
        intervals: 0,
        converged: true,
        divergent: false,
        cutoff: t_top.exp(),
        slope: None,
    };
    let mut steep_run = 0usize;
    let mut prev_octave = 0.0;
    let eta = END_NUDGE;
    // log of the dr-integrand g(r) = F(log r)/r
    let log_g = |t: f64| {
        let v = f.at(t);
        if v > 0.0 {
            Some(v.ln() - t)
        } else {
            None
        }
    };
    let mut g_hi = log_g(t_top - eta);
    for k in 0..MAX_OCTAVES {
        let b = t_top - k as f64 * ln2;
        let a = b - ln2;
        out.cutoff = a.exp();
        let g_lo = log_g(a + eta);
        let (Some(lg_hi), Some(lg_lo)) = (g_hi, g_lo) else {
            // μ(B_r) vanishes at the bottom of this octave, hence below it.
            if g_hi.is_some() {
                let r = adaptive_simpson(f.on(a, b), a, b, 0.25 * tol * scale.max(outer_value), budget);
                out.value += r.value;
                out.error += r.error;
                out.intervals += r.intervals;
                out.converged &= r.converged;
            }
            return Ok(out);
        };
        let slope = (lg_hi - lg_lo) / (b - a - 2.0 * eta);
        out.slope = Some(slope);

        let running = out.value.max(outer_value).max(scale);
        let share = 0.25 * tol * running * 0.5f64.powi((k + 1).min(1000) as i32);
        let r = adaptive_simpson(f.on(a, b), a, b, share, budget.saturating_sub(out.intervals).max(1));
        out.intervals += r.intervals;
        out.converged &= r.converged;
        out.value += r.value;
        out.error += r.error;

        if slope <= -1.0 - SLOPE_MARGIN && r.value > prev_octave {
            steep_run += 1;
            if steep_run >= DIVERGENCE_OCTAVES {
                out.divergent = true;
                return Ok(out);
            }
        } else {
            steep_run = 0;
        }
        prev_octave = r.value;

        if slope > -1.0 + SLOPE_MARGIN {
            // ∫₀^{r_a} C r^σ dr = r_a g(r_a)/(σ+1)
            let tail = (lg_lo + a).exp() / (slope + 1.0);
            let total = out.value + outer_value;
            if tail <= 1e-3 * tol * total {
                out.value += tail;
                out.error += tail;
                return Ok(out);
            }
        }
        g_hi = g_lo;
    }
    Err(Error::Quadrature {
        tol,
        estimate: f64::NAN,
        intervals: out.intervals,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WolffSup {
    /// Maximum over samples, +∞ if any sample diverges.
    pub value: f64,
    pub argmax: Option<Point>,
    pub samples: usize,
}

/// Maximum of W(·, radius) over the active nodes of a sample grid.
pub fn wolff_sup_over_ball(
    m: &RadonMeasure,
    exps: WolffExponents,
    radius: f64,
    sample_grid: &GridSpec,
    tol: f64,
) -> Result<WolffSup> {
    if sample_grid.n != m.dim() {
        return range_err("sample grid dimension differs from the measure");
    }
    if sample_grid.radius < m.domain_radius() * (1.0 - 1e-12) {
        return range_err("sample grid does not cover the domain ball");
    }
    let nodes: Vec<usize> = (0..sample_grid.node_count())
        .filter(|&i| sample_grid.is_active(i))
        .collect();
    let values: Vec<Result<(Point, f64)>> = nodes
        .par_iter()
        .map(|&i| {
            let x = sample_grid.node_point(i);
            wolff_potential(m, exps, &x, radius, tol).map(|w| (x, w.value))
        })
        .collect();
    let mut best = WolffSup {
        value: 0.0,
        argmax: None,
        samples: nodes.len(),
    };
    for v in values {
        let (x, w) = v?;
        if best.argmax.is_none() || w > best.value {
            best.value = w;
            best.argmax = Some(x);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exps(n: usize, p: f64) -> WolffExponents {
        WolffExponents::new(n, p).unwrap()
    }

    #[test]
    fn empty_measure_is_zero() {
        let m = RadonMeasure::empty(2, 1.0).unwrap();
        let w = wolff_potential(&m, exps(2, 1.5), &Point::origin(2), 0.5, 1e-8).unwrap();
        assert_eq!(w.value, 0.0);
    }

    #[test]
    fn dirac_off_center_closed_form() {
        let (n, p, mass): (usize, f64, f64) = (2, 1.5, 0.7);
        let m = RadonMeasure::dirac(Point::new(&[0.1, 0.0]), mass, 1.0).unwrap();
        let x = Point::new(&[-0.2, 0.1]);
        let d = x.dist(&Point::new(&[0.1, 0.0]));
        let big: f64 = 0.8;
        let e = (n as f64 - p) / (p - 1.0);
        let want = mass.powf(1.0 / (p - 1.0)) / e * (d.powf(-e) - big.powf(-e));
        let w = wolff_potential(&m, exps(n, p), &x, big, 1e-10).unwrap();
        assert!((w.value - want).abs() <= 1e-9 * want, "{} vs {want}", w.value);
    }

    #[test]
    fn dirac_at_point() {
        let m = RadonMeasure::dirac(Point::origin(2), 1.0, 1.0).unwrap();
        let w = wolff_potential(&m, exps(2, 1.5), &Point::origin(2), 0.5, 1e-8).unwrap();
        assert!(w.divergent && w.value.is_infinite());
        let want = -(2.0 - 1.5) / 0.5 - 1.0;
        assert!((w.inner_slope.unwrap() - want).abs() < 1e-6);
        // finite in one dimension: W = m^{1/(p−1)} R
        let m = RadonMeasure::dirac(Point::origin(1), 2.0, 1.0).unwrap();
        let w = wolff_potential(&m, exps(1, 1.5), &Point::origin(1), 0.5, 1e-9).unwrap();
        assert!((w.value - 4.0 * 0.5).abs() < 1e-8 * 2.0, "{}", w.value);
    }

    #[test]
    fn uniform_closed_form() {
        let (c, p): (f64, f64) = (0.8, 1.5);
        let m = RadonMeasure::uniform(2, c, 1.0).unwrap();
        let big: f64 = 0.3;
        let want = (c * std::f64::consts::PI).powf(1.0 / (p - 1.0)) * (p - 1.0) / p
            * big.powf(p / (p - 1.0));
        let w = wolff_potential(&m, exps(2, p), &Point::new(&[0.2, 0.3]), big, 1e-10).unwrap();
        assert!((w.value - want).abs() <= 1e-9 * want);
    }

    #[test]
    fn uniform_sup_is_interior_value() {
        let m = RadonMeasure::uniform(2, 1.0, 1.0).unwrap();
        let g = GridSpec::new(2, 9, 1, 1.0, 1.0).unwrap();
        let s = wolff_sup_over_ball(&m, exps(2, 1.6), 0.2, &g, 1e-9).unwrap();
        let centre = wolff_potential(&m, exps(2, 1.6), &Point::origin(2), 0.2, 1e-9).unwrap();
        assert!((s.value - centre.value).abs() <= 1e-8 * centre.value);
    }

    #[test]
    fn atom_on_sample_node_diverges() {
        let m = RadonMeasure::dirac(Point::new(&[0.25, 0.0]), 1.0, 1.0).unwrap();
        let g = GridSpec::new(2, 9, 1, 1.0, 1.0).unwrap();
        let s = wolff_sup_over_ball(&m, exps(2, 1.6), 0.2, &g, 1e-8).unwrap();
        assert!(s.value.is_infinite());
    }
}
