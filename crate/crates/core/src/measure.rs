//! Finite positive measures built from atoms, radial piecewise-polynomial
//! densities and a uniform density, with exact ball-mass queries.

use crate::error::{range_err, Error, Result};
use crate::geometry::{ball_volume, lens_volume, sphere_measure, Point};
use crate::grid::{GridSpec, SpatialField};
use crate::quadrature::gauss;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: Point,
    pub mass: f64,
}

/// Radial density ρ(s) = Σ_j coefficients\[i\]\[j\]·s^j on
/// \[breakpoints\[i\], breakpoints\[i+1\]), zero beyond the last breakpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub breakpoints: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
}

impl RadialProfile {
    /// Constant density `c` on the shell a ≤ s < b.
    pub fn shell(a: f64, b: f64, c: f64) -> Self {
        if a > 0.0 {
            Self {
                breakpoints: vec![0.0, a, b],
                coefficients: vec![vec![0.0], vec![c]],
            }
        } else {
            Self {
                breakpoints: vec![0.0, b],
                coefficients: vec![vec![c]],
            }
        }
    }

    pub fn support(&self) -> f64 {
        *self.breakpoints.last().unwrap_or(&0.0)
    }

    pub fn density(&self, s: f64) -> f64 {
        let b = &self.breakpoints;
        if b.len() < 2 || s < b[0] || s >= b[b.len() - 1] {
            return 0.0;
        }
        let i = b.partition_point(|&x| x <= s) - 1;
        horner(&self.coefficients[i], s)
    }

    fn validate(&self) -> Result<()> {
        let b = &self.breakpoints;
        if b.len() < 2 || self.coefficients.len() != b.len() - 1 {
            return range_err("radial profile needs k+1 breakpoints for k pieces");
        }
        if b[0] < 0.0 || b.iter().any(|x| !x.is_finite()) || b.windows(2).any(|w| w[1] <= w[0]) {
            return range_err("radial breakpoints must be finite, nonnegative and increasing");
        }
        for (i, c) in self.coefficients.iter().enumerate() {
            if c.is_empty() || c.iter().any(|x| !x.is_finite()) {
                return range_err(format!("radial piece {i} has no finite coefficients"));
            }
            let (a, e) = (b[i], b[i + 1]);
            let scale = c.iter().map(|x| x.abs()).fold(0.0, f64::max);
            for k in 0..=128 {
                let s = a + (e - a) * k as f64 / 128.0;
                if horner(c, s) < -1e-12 * scale.max(1.0) {
                    return range_err(format!("radial piece {i} is negative at s = {s}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialComponent {
    pub center: Point,
    pub profile: RadialProfile,
}

/// Plain description of a measure, as read from configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub dim: usize,
    pub domain_radius: f64,
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub radial: Vec<RadialComponent>,
    #[serde(default)]
    pub uniform_density: f64,
}

/// Positive finite measure on B_D(0) ⊂ R^n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureSpec", into = "MeasureSpec")]
pub struct RadonMeasure {
    dim: usize,
    domain_radius: f64,
    atoms: Vec<Atom>,
    radial: Vec<RadialComponent>,
    uniform_density: f64,
}

impl TryFrom<MeasureSpec> for RadonMeasure {
    type Error = Error;

    fn try_from(spec: MeasureSpec) -> Result<Self> {
        let mut m = RadonMeasure::empty(spec.dim, spec.domain_radius)?;
        for a in spec.atoms {
            m = m.with_atom(a.location, a.mass)?;
        }
        for c in spec.radial {
            m = m.with_radial(c.center, c.profile)?;
        }
        m.with_uniform(spec.uniform_density)
    }
}

impl From<RadonMeasure> for MeasureSpec {
    fn from(m: RadonMeasure) -> Self {
        MeasureSpec {
            dim: m.dim,
            domain_radius: m.domain_radius,
            atoms: m.atoms,
            radial: m.radial,
            uniform_density: m.uniform_density,
        }
    }
}

impl RadonMeasure {
    pub fn empty(dim: usize, domain_radius: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return range_err(format!("measure dimension {dim} unsupported"));
        }
        if !(domain_radius > 0.0 && domain_radius.is_finite()) {
            return range_err(format!("domain radius {domain_radius} must be positive"));
        }
        Ok(Self {
            dim,
            domain_radius,
            atoms: Vec::new(),
            radial: Vec::new(),
            uniform_density: 0.0,
        })
    }

    pub fn dirac(location: Point, mass: f64, domain_radius: f64) -> Result<Self> {
        Self::empty(location.dim(), domain_radius)?.with_atom(location, mass)
    }

    pub fn uniform(dim: usize, density: f64, domain_radius: f64) -> Result<Self> {
        Self::empty(dim, domain_radius)?.with_uniform(density)
    }

    pub fn with_atom(mut self, location: Point, mass: f64) -> Result<Self> {
        if location.dim() != self.dim {
            return range_err("atom dimension differs from the measure");
        }
        if !(mass >= 0.0 && mass.is_finite()) {
            return range_err(format!("atom mass {mass} must be finite and nonnegative"));
        }
        if location.norm() >= self.domain_radius {
            return range_err("atom must lie strictly inside the domain ball");
        }
        self.atoms.push(Atom { location, mass });
        Ok(self)
    }

    pub fn with_radial(mut self, center: Point, profile: RadialProfile) -> Result<Self> {
        if center.dim() != self.dim {
            return range_err("radial center dimension differs from the measure");
        }
        profile.validate()?;
        if center.norm() + profile.support() > self.domain_radius * (1.0 + 1e-12) {
            return range_err("radial component support leaves the domain ball");
        }
        self.radial.push(RadialComponent { center, profile });
        Ok(self)
    }

    pub fn with_uniform(mut self, density: f64) -> Result<Self> {
        if !(density >= 0.0 && density.is_finite()) {
            return range_err(format!("uniform density {density} must be finite and nonnegative"));
        }
        self.uniform_density = density;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }
    pub fn radial(&self) -> &[RadialComponent] {
        &self.radial
    }
    pub fn uniform_density(&self) -> f64 {
        self.uniform_density
    }

    pub fn is_zero(&self) -> bool {
        self.total_mass() == 0.0
    }

    /// s·μ
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s >= 0.0 && s.is_finite()) {
            return range_err(format!("scale {s} must be finite and nonnegative"));
        }
        let mut out = self.clone();
        for a in &mut out.atoms {
            a.mass *= s;
        }
        for c in &mut out.radial {
            for piece in &mut c.profile.coefficients {
                for v in piece.iter_mut() {
                    *v *= s;
                }
            }
        }
        out.uniform_density *= s;
        Ok(out)
    }

    /// Each atom, radial component and the uniform part as its own measure.
    pub fn components(&self) -> Vec<RadonMeasure> {
        let base = Self {
            atoms: Vec::new(),
            radial: Vec::new(),
            uniform_density: 0.0,
            ..self.clone()
        };
        let mut out = Vec::new();
        for a in &self.atoms {
            let mut m = base.clone();
            m.atoms.push(a.clone());
            out.push(m);
        }
        for c in &self.radial {
            let mut m = base.clone();
            m.radial.push(c.clone());
            out.push(m);
        }
        if self.uniform_density > 0.0 {
            let mut m = base;
            m.uniform_density = self.uniform_density;
            out.push(m);
        }
        out
    }

    /// μ(B_r(x)) over the open ball.
    pub fn ball_mass(&self, x: &Point, r: f64) -> f64 {
        if !(r > 0.0) {
            return 0.0;
        }
        let mut total = 0.0;
        for a in &self.atoms {
            if a.location.dist(x) < r {
                total += a.mass;
            }
        }
        for c in &self.radial {
            total += radial_ball_mass(self.dim, &c.profile, c.center.dist(x), r);
        }
        if self.uniform_density > 0.0 {
            total += self.uniform_density * lens_volume(self.dim, x.norm(), r, self.domain_radius);
        }
        total
    }

    pub fn total_mass(&self) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|a| a.mass).sum();
        let radial: f64 = self
            .radial
            .iter()
            .map(|c| radial_total_mass(self.dim, &c.profile))
            .sum();
        atoms + radial + self.uniform_density * ball_volume(self.dim, self.domain_radius)
    }

    /// Radii at which r ↦ μ(B_r(x)) jumps or loses smoothness.
    pub fn mass_breakpoints(&self, x: &Point) -> Vec<f64> {
        let mut out = Vec::new();
        for a in &self.atoms {
            out.push(a.location.dist(x));
        }
        for c in &self.radial {
            let d = c.center.dist(x);
            for &b in &c.profile.breakpoints {
                out.push((d - b).abs());
                out.push(d + b);
            }
        }
        if self.uniform_density > 0.0 {
            let a = x.norm();
            out.push((self.domain_radius - a).abs());
            out.push(self.domain_radius + a);
        }
        out.retain(|r| *r > 0.0 && r.is_finite());
        out.sort_by(|a, b| a.total_cmp(b));
        out.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs());
        out
    }

    /// Smallest distance from x to an atom, if any.
    pub fn nearest_atom_distance(&self, x: &Point) -> Option<f64> {
        self.atoms
            .iter()
            .filter(|a| a.mass > 0.0)
            .map(|a| a.location.dist(x))
            .min_by(|a, b| a.total_cmp(b))
    }

    /// Nonnegative grid density with Σ f·h^n equal to the total mass.
    /// Atoms are spread by the bump (1 − |x−a|²/w²)³ of width w, and every
    /// component is renormalized on the active nodes.
    pub fn mollify_to_grid(&self, grid: &GridSpec, width: f64) -> Result<SpatialField> {
        grid.validate()?;
        if grid.n != self.dim {
            return Err(Error::Grid(format!(
                "grid dimension {} differs from measure dimension {}",
                grid.n, self.dim
            )));
        }
        if self.domain_radius > grid.radius * (1.0 + 1e-12) {
            return Err(Error::Grid(format!(
                "measure support radius {} exceeds grid radius {}",
                self.domain_radius, grid.radius
            )));
        }
        let h = grid.h();
        if !(width >= h * (1.0 - 1e-12)) {
            return range_err(format!("mollification width {width} below grid spacing {h}"));
        }
        let vol = grid.cell_volume();
        let nn = grid.node_count();
        let active = grid.active_mask();
        let pts: Vec<Point> = (0..nn).map(|i| grid.node_point(i)).collect();
        let mut f = vec![0.0; nn];

        let spread = |f: &mut [f64], center: &Point, w: f64, mass: f64| -> Result<()> {
            let b: Vec<f64> = pts
                .iter()
                .zip(&active)
                .map(|(x, &act)| {
                    let t = x.dist(center) / w;
                    if act && t < 1.0 {
                        (1.0 - t * t).powi(3)
                    } else {
                        0.0
                    }
                })
                .collect();
            let s: f64 = b.iter().sum::<f64>() * vol;
            if !(s > 0.0) {
                return Err(Error::Grid(format!(
                    "no active node within {w} of {:?}",
                    center.coords()
                )));
            }
            for (fi, bi) in f.iter_mut().zip(&b) {
                *fi += mass * bi / s;
            }
            Ok(())
        };

        for a in &self.atoms {
            if a.mass > 0.0 {
                spread(&mut f, &a.location, width, a.mass)?;
            }
        }
        for c in &self.radial {
            let exact = radial_total_mass(self.dim, &c.profile);
            if exact <= 0.0 {
                continue;
            }
            let vals: Vec<f64> = pts
                .iter()
                .zip(&active)
                .map(|(x, &act)| if act { c.profile.density(x.dist(&c.center)) } else { 0.0 })
                .collect();
            let s: f64 = vals.iter().sum::<f64>() * vol;
            if s > 0.0 {
                let scale = exact / s;
                for (fi, v) in f.iter_mut().zip(&vals) {
                    *fi += v * scale;
                }
            } else {
                spread(&mut f, &c.center, width.max(c.profile.support()), exact)?;
            }
        }
        if self.uniform_density > 0.0 {
            let c = self.uniform_density;
            let d = self.domain_radius;
            let target = c * ball_volume(self.dim, d);
            let mut interior = Vec::new();
            let mut layer = Vec::new();
            for i in 0..nn {
                if !active[i] {
                    continue;
                }
                let r = pts[i].norm();
                if r < d - 2.0 * h {
                    interior.push(i);
                } else if r < d {
                    layer.push(i);
                }
            }
            let inner = c * interior.len() as f64 * vol;
            let outer = c * layer.len() as f64 * vol;
            let layer_scale = if outer > 0.0 { (target - inner) / outer } else { -1.0 };
            if layer_scale >= 0.0 {
                for &i in &interior {
                    f[i] += c;
                }
                for &i in &layer {
                    f[i] += c * layer_scale;
                }
            } else if inner + outer > 0.0 {
                let scale = target / (inner + outer);
                for &i in interior.iter().chain(&layer) {
                    f[i] += c * scale;
                }
            } else {
                spread(&mut f, &Point::origin(self.dim), width.max(d), target)?;
            }
        }
        Ok(SpatialField {
            grid: *grid,
            values: f,
        })
    }
}

fn horner(c: &[f64], s: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * s + v)
}

fn radial_total_mass(n: usize, profile: &RadialProfile) -> f64 {
    let b = &profile.breakpoints;
    (0..profile.coefficients.len())
        .map(|i| {
            let c = &profile.coefficients[i];
            gauss(16, b[i], b[i + 1], |s| horner(c, s) * sphere_measure(n, s))
        })
        .sum()
}

/// Mass of a radial component inside B_r(x) where d = |x − center|, by
/// integrating the density against the measure of the sphere of radius s
/// that falls inside the ball.
fn radial_ball_mass(n: usize, profile: &RadialProfile, d: f64, r: f64) -> f64 {
    let b = &profile.breakpoints;
    let mut total = 0.0;
    // Spheres with s < r − d lie entirely inside; spheres with
    // |r − d| < s < r + d are cut.
    let full_end = r - d;
    let (cut_lo, cut_hi) = ((r - d).abs(), r + d);
    for (i, c) in profile.coefficients.iter().enumerate() {
        let (s0, s1) = (b[i], b[i + 1]);
        let (a, e) = (s0, s1.min(full_end));
        if e > a {
            total += gauss(16, a, e, |s| horner(c, s) * sphere_measure(n, s));
        }
        if d == 0.0 {
            continue;
        }
        let (a, e) = (s0.max(cut_lo), s1.min(cut_hi));
        if e <= a {
            continue;
        }
        total += match n {
            1 => gauss(16, a, e, |s| horner(c, s)),
            3 => gauss(16, a, e, |s| {
                horner(c, s) * std::f64::consts::PI * s * (r - s + d) * (r + s - d) / d
            }),
            _ => {
                // s = a + (e − a)(1 − cos φ)/2 absorbs the square-root
                // behaviour of the arc length at both ends.
                let half = 0.5 * (e - a);
                let arc = |phi: f64| {
                    let s = a + half * (1.0 - phi.cos());
                    if s <= 0.0 {
                        return 0.0;
                    }
                    let w = (((s - r) * (s + r)) + d * d) / (2.0 * s * d);
                    horner(c, s) * 2.0 * s * w.clamp(-1.0, 1.0).acos() * half * phi.sin()
                };
                let mid = 0.5 * std::f64::consts::PI;
                gauss(32, 0.0, mid, arc) + gauss(32, mid, std::f64::consts::PI, arc)
            }
        };
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> RadialProfile {
        RadialProfile {
            breakpoints: vec![0.0, 0.2, 0.5],
            coefficients: vec![vec![2.0, -1.0], vec![1.0, 0.0, -1.0]],
        }
    }

    #[test]
    fn atom_open_ball() {
        let m = RadonMeasure::dirac(Point::origin(2), 3.0, 1.0).unwrap();
        assert_eq!(m.ball_mass(&Point::origin(2), 0.1), 3.0);
        let m = RadonMeasure::dirac(Point::new(&[0.5, 0.0]), 3.0, 1.0).unwrap();
        assert_eq!(m.ball_mass(&Point::origin(2), 0.5), 0.0);
        assert_eq!(m.ball_mass(&Point::origin(2), 0.5 + 1e-12), 3.0);
    }

    #[test]
    fn uniform_disk_mass() {
        let m = RadonMeasure::uniform(2, 2.0, 1.0).unwrap();
        let v = m.ball_mass(&Point::new(&[0.2, -0.1]), 0.3);
        assert!((v - 0.56548667764616278).abs() < 1e-15);
    }

    #[test]
    fn total_mass_cases() {
        assert_eq!(RadonMeasure::empty(2, 1.0).unwrap().total_mass(), 0.0);
        let m = RadonMeasure::empty(2, 1.0)
            .unwrap()
            .with_atom(Point::new(&[0.1, 0.1]), 1.0)
            .unwrap()
            .with_atom(Point::new(&[-0.3, 0.0]), 2.0)
            .unwrap();
        assert_eq!(m.total_mass(), 3.0);
        assert_eq!(RadonMeasure::uniform(1, 1.0, 1.0).unwrap().total_mass(), 2.0);
    }

    #[test]
    fn radial_off_center_matches_reference() {
        // References from independent high-precision cubature.
        let m2 = RadonMeasure::empty(2, 1.0)
            .unwrap()
            .with_radial(Point::new(&[0.2, 0.1]), profile())
            .unwrap();
        let v2 = m2.ball_mass(&Point::new(&[-0.05, 0.0]), 0.35);
        assert!((v2 - 0.36741125541165).abs() < 1e-12, "{v2}");
        let m3 = RadonMeasure::empty(3, 1.0)
            .unwrap()
            .with_radial(Point::new(&[0.2, 0.1, 0.0]), profile())
            .unwrap();
        let v3 = m3.ball_mass(&Point::new(&[-0.05, 0.0, 0.1]), 0.35);
        assert!((v3 - 0.145981959888029).abs() < 1e-12, "{v3}");
    }

    #[test]
    fn radial_centered_and_full() {
        for n in 1..=3 {
            let m = RadonMeasure::empty(n, 1.0)
                .unwrap()
                .with_radial(Point::origin(n), profile())
                .unwrap();
            let total = m.total_mass();
            let x = Point::origin(n);
            assert!((m.ball_mass(&x, 0.5) - total).abs() < 1e-14 * total);
            assert!((m.ball_mass(&x, 2.0) - total).abs() < 1e-14 * total);
            let far = Point::new(&vec![0.3; n]);
            assert!((m.ball_mass(&far, 1.5) - total).abs() < 1e-12 * total);
        }
    }

    #[test]
    fn rejects_invalid_components() {
        let m = RadonMeasure::empty(2, 1.0).unwrap();
        assert!(m.clone().with_atom(Point::new(&[1.0, 0.0]), 1.0).is_err());
        assert!(m.clone().with_atom(Point::new(&[0.0, 0.0]), -1.0).is_err());
        assert!(m.clone().with_uniform(-1.0).is_err());
        let bad = RadialProfile {
            breakpoints: vec![0.0, 0.5],
            coefficients: vec![vec![-1.0]],
        };
        assert!(m.clone().with_radial(Point::origin(2), bad).is_err());
        assert!(m
            .with_radial(Point::new(&[0.6, 0.0]), RadialProfile::shell(0.0, 0.5, 1.0))
            .is_err());
    }

    #[test]
    fn mollified_uniform_is_constant_inside() {
        let g = GridSpec::new(2, 33, 1, 1.0, 1.0).unwrap();
        let m = RadonMeasure::uniform(2, 0.7, 1.0).unwrap();
        let f = m.mollify_to_grid(&g, 2.0 * g.h()).unwrap();
        assert!((f.integral() - m.total_mass()).abs() < 1e-12 * m.total_mass());
        for i in 0..g.node_count() {
            if g.node_point(i).norm() < 1.0 - 2.0 * g.h() {
                assert_eq!(f.values[i], 0.7);
            }
        }
    }

    #[test]
    fn mollify_rejects_large_support() {
        let g = GridSpec::new(1, 33, 1, 1.0, 1.0).unwrap();
        let m = RadonMeasure::uniform(1, 1.0, 2.0).unwrap();
        assert!(matches!(m.mollify_to_grid(&g, 2.0 * g.h()), Err(Error::Grid(_))));
        let m = RadonMeasure::empty(1, 1.0).unwrap();
        let f = m.mollify_to_grid(&g, 2.0 * g.h()).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }
}
