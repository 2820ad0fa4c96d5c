//! Level-set functionals on discrete fields: G, ψ, intrinsic cylinders,
//! cutoffs, the slot functionals A* and the energy inequality audit.
//!
//! Fields are read as the spatial multilinear interpolant, piecewise
//! constant in time on the cells [t_k − dt/2, t_k + dt/2] ∩ [0, T]. Space
//! integrals over B_ρ(y) use a lattice centered at y with spacing
//! min(h, ρ/8); time integrals of the cutoff powers are exact per cell.

use crate::error::{range_err, Error, Result};
use crate::geometry::{ball_volume, Point};
use crate::grid::{GridField, GridSpec};
use crate::measure::RadonMeasure;
use crate::params::ProblemParams;
use crate::quadrature::gauss;
use serde::{Deserialize, Serialize};

/// G(v) = v for v > 1, v^{2−2λ} otherwise.
pub fn g_function(v: f64, lambda: f64) -> f64 {
    if v > 1.0 {
        v
    } else if v > 0.0 {
        v.powf(2.0 - 2.0 * lambda)
    } else {
        0.0
    }
}

/// ψ(a) = ∫₀^a (1+z)^{−(1−λ)/p} z^{−2λ/p} dz.
///
/// With q = 1 − 2λ/p and w = z^q the integrand becomes
/// (1/q)(1 + w^{1/q})^{−(1−λ)/p}, bounded on [0, a^q]. Panels shrink by a
/// factor 4 toward w = 0, where w^{1/q} limits smoothness, and each carries
/// a 16-point Gauss rule.
pub fn psi_scaled(a: f64, params: &ProblemParams) -> f64 {
    if !(a > 0.0) {
        return 0.0;
    }
    let (p, lam) = (params.p(), params.lambda());
    let q = 1.0 - 2.0 * lam / p;
    let e = -(1.0 - lam) / p;
    let top = a.powf(q);
    let f = |w: f64| (1.0 + w.powf(1.0 / q)).powf(e) / q;
    let panels = 12 + top.max(1.0).log(4.0).ceil() as i32;
    let mut total = gauss(16, 0.0, top * 0.25f64.powi(panels), f);
    for i in (0..panels).rev() {
        total += gauss(16, top * 0.25f64.powi(i + 1), top * 0.25f64.powi(i), f);
    }
    total
}

/// ψ at u_val for level l and step δ; zero when u_val ≤ l.
pub fn psi_transform(u_val: f64, l: f64, delta: f64, params: &ProblemParams) -> f64 {
    if u_val <= l {
        return 0.0;
    }
    psi_scaled((u_val - l) / delta, params)
}

/// Time bump θ̄: 1 on |s| ≤ 2^{1−p}, 0 on |s| ≥ 1, quintic smoothstep between.
pub fn theta_bar(s: f64, p: f64) -> f64 {
    let a = 2f64.powf(1.0 - p);
    let x = s.abs();
    if x <= a {
        1.0
    } else if x >= 1.0 {
        0.0
    } else {
        let t = (x - a) / (1.0 - a);
        1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

/// Largest |θ̄′|, attained at the middle of the transition.
pub fn theta_bar_slope_bound(p: f64) -> f64 {
    1.875 / (1.0 - 2f64.powf(1.0 - p))
}

/// Spatial cutoff: 1 on B_{ρ/2}, 0 outside B_ρ, linear in between with
/// gradient 2/ρ.
pub fn xi_ramp(r: f64, rho: f64) -> f64 {
    (2.0 * (rho - r) / rho).clamp(0.0, 1.0)
}

/// B_ρ(y) × (s − δ^{2−p}ρ^p, s + δ^{2−p}ρ^p)
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: Point,
    pub time: f64,
    pub rho: f64,
    pub delta: f64,
}

impl Cylinder {
    pub fn new(center: Point, time: f64, rho: f64, delta: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite() && delta > 0.0 && delta.is_finite()) {
            return range_err(format!("cylinder needs ρ > 0 and δ > 0, got ρ = {rho}, δ = {delta}"));
        }
        Ok(Self {
            center,
            time,
            rho,
            delta,
        })
    }

    pub fn half_height(&self, p: f64) -> f64 {
        self.delta.powf(2.0 - p) * self.rho.powf(p)
    }

    /// DomainError unless the cylinder lies in B_R × [0, T].
    pub fn check_inside(&self, grid: &GridSpec, p: f64) -> Result<()> {
        if self.center.dim() != grid.n {
            return Err(Error::Domain("cylinder dimension differs from the grid".into()));
        }
        if self.center.norm() + self.rho > grid.radius * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "ball of radius {} at distance {} leaves B_{}",
                self.rho,
                self.center.norm(),
                grid.radius
            )));
        }
        let hh = self.half_height(p);
        let slack = 1e-12 * grid.horizon;
        if self.time - hh < -slack || self.time + hh > grid.horizon + slack {
            return Err(Error::Domain(format!(
                "time span ({}, {}) leaves (0, {})",
                self.time - hh,
                self.time + hh,
                grid.horizon
            )));
        }
        Ok(())
    }
}

/// Quadrature lattice over B_ρ(y).
#[derive(Clone, Debug, PartialEq)]
pub struct BallLattice {
    pub points: Vec<Point>,
    /// |point − y|
    pub radii: Vec<f64>,
    pub spacing: f64,
    pub weight: f64,
}

impl BallLattice {
    pub fn new(grid: &GridSpec, center: &Point, rho: f64) -> Self {
        let h = grid.h();
        let spacing = if rho >= 8.0 * h { h } else { rho / 8.0 };
        let n = grid.n;
        let kmax = (rho / spacing).ceil() as i64;
        let side = (2 * kmax + 1) as usize;
        let mut points = Vec::new();
        let mut radii = Vec::new();
        for c in 0..side.pow(n as u32) {
            let mut rest = c;
            let mut off = [0.0; 3];
            for slot in off.iter_mut().take(n) {
                *slot = ((rest % side) as i64 - kmax) as f64 * spacing;
                rest /= side;
            }
            let r = off.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r < rho {
                points.push(center.offset(&off[..n]));
                radii.push(r);
            }
        }
        // Equal weights summing to |B_ρ| exactly.
        let weight = ball_volume(n, rho) / points.len() as f64;
        Self {
            points,
            radii,
            spacing,
            weight,
        }
    }

    pub fn sample(&self, u: &GridField, k: usize) -> Vec<f64> {
        self.points.iter().map(|x| u.interpolate(k, x)).collect()
    }

    /// |∇u| by central differences of the interpolant with step h.
    pub fn sample_gradient_norm(&self, u: &GridField, k: usize) -> Vec<f64> {
        let g = u.grid();
        let h = g.h();
        self.points
            .iter()
            .map(|x| {
                (0..g.n)
                    .map(|d| {
                        let v = (u.interpolate(k, &x.shifted(d, h)) - u.interpolate(k, &x.shifted(d, -h)))
                            / (2.0 * h);
                        v * v
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

/// θ(t) = θ̄((t − center)/half) with per-cell integrals of its powers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeBump {
    pub center: f64,
    pub half: f64,
    pub p: f64,
}

impl TimeBump {
    pub fn value(&self, t: f64) -> f64 {
        theta_bar((t - self.center) / self.half, self.p)
    }

    /// ∫_lo^hi θ^e dt
    pub fn integral(&self, lo: f64, hi: f64, e: f64) -> f64 {
        if !(hi > lo) {
            return 0.0;
        }
        let a = 2f64.powf(1.0 - self.p) * self.half;
        let c = self.center;
        let cuts = [c - self.half, c - a, c + a, c + self.half];
        let mut knots = vec![lo];
        knots.extend(cuts.iter().copied().filter(|&x| x > lo && x < hi));
        knots.push(hi);
        let mut total = 0.0;
        for w in knots.windows(2) {
            let (x0, x1) = (w[0], w[1]);
            let mid = 0.5 * (x0 + x1) - c;
            if mid.abs() <= a {
                total += x1 - x0;
            } else if mid.abs() < self.half {
                total += gauss(16, x0, x1, |t| self.value(t).powf(e));
            }
        }
        total
    }

    /// sup over [lo, hi] of θ.
    pub fn sup(&self, lo: f64, hi: f64) -> f64 {
        let t = self.center.clamp(lo, hi);
        self.value(t)
    }
}

/// Time cell of level k: [t_k − dt/2, t_k + dt/2] ∩ [0, T].
pub fn time_cell(grid: &GridSpec, k: usize) -> (f64, f64) {
    let dt = grid.dt();
    let t = grid.time(k);
    ((t - 0.5 * dt).max(0.0), (t + 0.5 * dt).min(grid.horizon))
}

/// Range of time cells meeting the open interval (lo, hi).
pub fn cells_touching(grid: &GridSpec, lo: f64, hi: f64) -> (usize, usize) {
    let dt = grid.dt();
    let first = ((lo / dt + 0.5).floor().max(0.0) as usize).min(grid.nt);
    let last = (((hi / dt) + 0.5).ceil() as i64 - 1).clamp(0, grid.nt as i64) as usize;
    (first, last.max(first))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellWeights {
    pub k: usize,
    /// ∫_cell θ^{k−p}
    pub int_kp: f64,
    /// ∫_cell θ^k
    pub int_k: f64,
    /// sup_cell θ^k
    pub sup_k: f64,
}

/// Space cutoff ξ on a ball lattice and time cutoff θ on the field's time
/// levels for one cylinder.
#[derive(Clone, Debug, PartialEq)]
pub struct CutoffPair {
    pub lattice: BallLattice,
    pub xi: Vec<f64>,
    /// θ(t_k) for every time level.
    pub theta: Vec<f64>,
    pub cells: Vec<CellWeights>,
}

impl CutoffPair {
    pub fn new(grid: &GridSpec, cyl: &Cylinder, params: &ProblemParams) -> Result<Self> {
        cyl.check_inside(grid, params.p())?;
        let lattice = BallLattice::new(grid, &cyl.center, cyl.rho);
        let xi = lattice.radii.iter().map(|&r| xi_ramp(r, cyl.rho)).collect();
        let bump = TimeBump {
            center: cyl.time,
            half: cyl.half_height(params.p()),
            p: params.p(),
        };
        let theta = (0..=grid.nt).map(|k| bump.value(grid.time(k))).collect();
        let cells = cell_weights(grid, &bump, params);
        Ok(Self {
            lattice,
            xi,
            theta,
            cells,
        })
    }
}

pub(crate) fn cell_weights(grid: &GridSpec, bump: &TimeBump, params: &ProblemParams) -> Vec<CellWeights> {
    let kexp = params.k();
    let kp = kexp - params.p();
    let (k0, k1) = cells_touching(grid, bump.center - bump.half, bump.center + bump.half);
    (k0..=k1)
        .filter_map(|k| {
            let (lo, hi) = time_cell(grid, k);
            let sup = bump.sup(lo, hi);
            if sup <= 0.0 {
                return None;
            }
            Some(CellWeights {
                k,
                int_kp: bump.integral(lo, hi, kp),
                int_k: bump.integral(lo, hi, kexp),
                sup_k: sup.powf(kexp),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelFunctionalReport {
    pub first_term: f64,
    pub second_term: f64,
    pub a_value: f64,
    pub cylinder: Cylinder,
    /// Base level l_j.
    pub level: f64,
    pub delta: f64,
}

/// A* for the slot described by `cyl` and `cut`, with base level `l_base`
/// and step δ = l − l_base.
pub fn a_star(
    u: &GridField,
    cyl: &Cylinder,
    l_base: f64,
    delta: f64,
    cut: &CutoffPair,
    params: &ProblemParams,
) -> Result<LevelFunctionalReport> {
    cyl.check_inside(u.grid(), params.p())?;
    if !(delta > 0.0) {
        return range_err(format!("step δ = {delta} must be positive"));
    }
    let (n, p, kexp, lam) = (params.n() as i32, params.p(), params.k(), params.lambda());
    let w = cut.lattice.weight;
    let xi_kp: Vec<f64> = cut.xi.iter().map(|x| x.powf(kexp - p) * w).collect();
    let xi_k: Vec<f64> = cut.xi.iter().map(|x| x.powf(kexp) * w).collect();
    let mut first = 0.0;
    let mut second: f64 = 0.0;
    for c in &cut.cells {
        let vals = cut.lattice.sample(u, c.k);
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for (q, &v) in vals.iter().enumerate() {
            if v > l_base {
                let z = (v - l_base) / delta;
                s1 += z * xi_kp[q];
                s2 += g_function(z, lam) * xi_k[q];
            }
        }
        first += s1 * c.int_kp;
        second = second.max(s2 * c.sup_k);
    }
    let first_term = delta.powf(p - 2.0) * cyl.rho.powi(-n) * cyl.rho.powf(-p) * first;
    let second_term = cyl.rho.powi(-n) * second;
    Ok(LevelFunctionalReport {
        first_term,
        second_term,
        a_value: first_term + second_term,
        cylinder: *cyl,
        level: l_base,
        delta,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyAudit {
    pub lhs: f64,
    pub rhs_interior: f64,
    pub rhs_measure: f64,
}

impl EnergyAudit {
    /// lhs / (rhs_interior + rhs_measure); zero when both sides vanish.
    pub fn gamma_emp(&self) -> f64 {
        let rhs = self.rhs_interior + self.rhs_measure;
        if self.lhs == 0.0 {
            0.0
        } else {
            self.lhs / rhs
        }
    }
}

/// Both sides of the energy inequality for the space-time cutoff ξ(x)θ(t).
pub fn energy_audit(
    u: &GridField,
    cyl: &Cylinder,
    l: f64,
    delta: f64,
    cut: &CutoffPair,
    m: &RadonMeasure,
    params: &ProblemParams,
) -> Result<EnergyAudit> {
    cyl.check_inside(u.grid(), params.p())?;
    if !(delta > 0.0) {
        return range_err(format!("step δ = {delta} must be positive"));
    }
    let (p, kexp, lam) = (params.p(), params.k(), params.lambda());
    let w = cut.lattice.weight;
    let xi_kp: Vec<f64> = cut.xi.iter().map(|x| x.powf(kexp - p) * w).collect();
    let xi_k: Vec<f64> = cut.xi.iter().map(|x| x.powf(kexp) * w).collect();
    let e_int = 2.0 * lam * (p - 1.0);
    let mut sup_term: f64 = 0.0;
    let mut grad_term = 0.0;
    let mut interior = 0.0;
    for c in &cut.cells {
        let vals = cut.lattice.sample(u, c.k);
        if !vals.iter().any(|&v| v > l) {
            continue;
        }
        let grads = cut.lattice.sample_gradient_norm(u, c.k);
        let mut s_g = 0.0;
        let mut s_psi = 0.0;
        let mut s_int = 0.0;
        for (q, &v) in vals.iter().enumerate() {
            if v <= l {
                continue;
            }
            let z = ((v - l) / delta).max(1e-12);
            s_g += g_function(z, lam) * xi_k[q];
            // |∇ψ|^p = δ^{−p}(1+z)^{−(1−λ)} z^{−2λ} |∇u|^p
            s_psi += delta.powf(-p) * (1.0 + z).powf(lam - 1.0) * z.powf(-2.0 * lam) * grads[q].powf(p) * xi_k[q];
            s_int += (1.0 + z).powf(1.0 - e_int) * z.powf(e_int) * xi_kp[q];
        }
        sup_term = sup_term.max(s_g * c.sup_k);
        grad_term += s_psi * c.int_k;
        interior += s_int * c.int_kp;
    }
    let rho = cyl.rho;
    Ok(EnergyAudit {
        lhs: sup_term + delta.powf(p - 2.0) * grad_term,
        rhs_interior: delta.powf(p - 2.0) * rho.powf(-p) * interior,
        rhs_measure: rho.powf(p) * delta.powf(1.0 - p) * m.ball_mass(&cyl.center, rho),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::make_params;

    #[test]
    fn g_function_values() {
        assert_eq!(g_function(1.0, 0.3), 1.0);
        assert_eq!(g_function(2.0, 0.3), 2.0);
        assert!((g_function(0.25, 0.25) - 0.125).abs() < 1e-15);
        let mut prev = 0.0;
        for i in 0..1000 {
            let v = i as f64 * 0.003;
            let g = g_function(v, 0.2);
            assert!(g >= prev);
            prev = g;
        }
    }

    #[test]
    fn psi_matches_reference_table() {
        // (λ, p, a, ψ(a)) from an independent 30-digit quadrature.
        let table: [(f64, f64, [(f64, f64); 6]); 3] = [
            (0.125, 1.8, [
                (1e-3, 0.0030304688868275596),
                (0.25, 0.33425281787721042),
                (1.0, 0.97989497012448263),
                (2.0, 1.5911515775495938),
                (10.0, 4.1895906673285069),
                (1000.0, 33.257444333960257),
            ]),
            (0.1, 1.5, [
                (1e-3, 0.0028975235261532846),
                (0.25, 0.32557639680270834),
                (1.0, 0.93631216171654021),
                (2.0, 1.489214047161862),
                (10.0, 3.6274530629003667),
                (1000.0, 20.217742833163414),
            ]),
            (0.05, 1.2, [
                (1e-3, 0.0019392070999727695),
                (0.25, 0.28079160972331807),
                (1.0, 0.82392502833200227),
                (2.0, 1.2980397835552463),
                (10.0, 2.9445482784102959),
                (1000.0, 11.133616982998835),
            ]),
        ];
        for (lam, p, rows) in table {
            let pp = make_params(1, p, 1e-6, Some(lam), None).unwrap();
            for (a, want) in rows {
                let got = psi_scaled(a, &pp);
                assert!((got - want).abs() <= 1e-10 * want, "λ={lam} p={p} a={a}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn psi_depends_on_ratio_only() {
        let pp = make_params(2, 1.7, 1e-6, None, None).unwrap();
        for &(a, l, d) in &[(0.3, 1.0, 0.5), (7.0, -2.0, 3.0), (0.01, 0.25, 0.125)] {
            let lhs = psi_transform(l + a * d, l, d, &pp);
            let rhs = psi_transform(a, 0.0, 1.0, &pp);
            assert!((lhs - rhs).abs() <= 1e-13 * rhs);
        }
        assert_eq!(psi_transform(0.5, 0.5, 1.0, &pp), 0.0);
        assert_eq!(psi_transform(0.2, 0.5, 1.0, &pp), 0.0);
    }

    #[test]
    fn theta_bar_shape() {
        let p = 1.6;
        let a = 2f64.powf(1.0 - p);
        assert_eq!(theta_bar(0.0, p), 1.0);
        assert_eq!(theta_bar(a, p), 1.0);
        assert_eq!(theta_bar(1.0, p), 0.0);
        assert_eq!(theta_bar(-1.5, p), 0.0);
        let bound = theta_bar_slope_bound(p);
        for i in 0..2000 {
            let s = -1.0 + i as f64 * 1e-3;
            let d = (theta_bar(s + 1e-7, p) - theta_bar(s - 1e-7, p)) / 2e-7;
            assert!(d.abs() <= bound * (1.0 + 1e-5));
        }
    }

    #[test]
    fn bump_integrals_exact_on_plateau_and_total() {
        let bump = TimeBump {
            center: 0.5,
            half: 0.2,
            p: 1.5,
        };
        let a = 2f64.powf(-0.5) * 0.2;
        assert!((bump.integral(0.5 - a, 0.5 + a, 3.0) - 2.0 * a).abs() < 1e-15);
        // ∫θ̄ over the transition equals half its length for the symmetric smoothstep.
        let total = bump.integral(0.0, 1.0, 1.0);
        let want = 2.0 * a + (0.2 - a);
        assert!((total - want).abs() < 1e-13);
        let split = bump.integral(0.0, 0.37, 1.0) + bump.integral(0.37, 1.0, 1.0);
        assert!((split - total).abs() < 1e-14);
    }

    #[test]
    fn cylinder_outside_is_domain_error() {
        let pp = make_params(1, 1.5, 1e-6, None, None).unwrap();
        let g = GridSpec::new(1, 33, 32, 1.0, 1.0).unwrap();
        let c = Cylinder::new(Point::new(&[0.8]), 0.5, 0.3, 0.1).unwrap();
        assert!(matches!(CutoffPair::new(&g, &c, &pp), Err(Error::Domain(_))));
        let c = Cylinder::new(Point::new(&[0.0]), 0.05, 0.3, 1.0).unwrap();
        assert!(matches!(CutoffPair::new(&g, &c, &pp), Err(Error::Domain(_))));
    }

    #[test]
    fn empty_level_set_gives_zero() {
        let pp = make_params(2, 1.6, 1e-6, None, None).unwrap();
        let g = GridSpec::new(2, 17, 16, 1.0, 1.0).unwrap();
        let u = GridField::from_fn(g, |_, _| 0.3).unwrap();
        let c = Cylinder::new(Point::origin(2), 0.5, 0.4, 0.2).unwrap();
        let cut = CutoffPair::new(&g, &c, &pp).unwrap();
        let r = a_star(&u, &c, 0.5, 0.2, &cut, &pp).unwrap();
        assert_eq!(r.a_value, 0.0);
        let m = RadonMeasure::dirac(Point::origin(2), 1.0, 1.0).unwrap();
        let e = energy_audit(&u, &c, 0.5, 0.2, &cut, &m, &pp).unwrap();
        assert_eq!((e.lhs, e.rhs_interior), (0.0, 0.0));
        assert!((e.rhs_measure - 0.4f64.powf(1.6) * 0.2f64.powf(-0.6)).abs() < 1e-14);
    }
}
