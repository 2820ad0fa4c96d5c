//! Level/step sequences (l_j, δ_j) on shrinking balls B_{ρ_j}(x₀),
//! ρ_j = 2^{−j}R₀, driven by the slot functionals A*_{j,m}.
//!
//! At level j the step is halved when A*_j(l_j + δ_{j−1}/2) ≤ ϰ; otherwise
//! l_{j+1} solves A*_j(l) = ϰ on (l_j + δ_{j−1}/2, l_j + Bρ_j^{−n}).

use crate::error::{range_err, Error, Result};
use crate::functionals::{cells_touching, g_function, time_cell, BallLattice, TimeBump};
use crate::geometry::Point;
use crate::grid::{GridField, GridSpec};
use crate::measure::RadonMeasure;
use crate::params::ProblemParams;
use crate::wolff::{wolff_potential, WolffExponents};
use serde::{Deserialize, Serialize};

/// Straddling slot runs longer than this are sampled with a stride.
pub const STRADDLE_SAMPLES: u64 = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterationOptions {
    pub kappa: f64,
    /// Starting radius; defaults to half the admissible bound.
    pub r0: Option<f64>,
    pub j_max: usize,
    /// Relative bisection tolerance on the step δ.
    pub root_tol: f64,
    /// Stop once δ_j < stop_ratio·δ_0.
    pub stop_ratio: f64,
    pub scan_points: usize,
    pub wolff_tol: f64,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self {
            kappa: 0.1,
            r0: None,
            j_max: 40,
            root_tol: 1e-9,
            stop_ratio: 1e-6,
            scan_points: 24,
            wolff_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationParams {
    pub kappa: f64,
    pub b: f64,
    pub r0: f64,
    pub x0: Point,
    pub t0: f64,
    pub j_max: usize,
    pub root_tol: f64,
    pub stop_ratio: f64,
    pub scan_points: usize,
    pub wolff_tol: f64,
    /// sup_t ∫_{B_{R0}(x0)} |u| measured on the field.
    pub c_r0: f64,
    /// How often the requested R0 was halved to satisfy the constraints.
    pub r0_halvings: usize,
}

/// sup over time levels of ∫_{B_r(x)} |u| on the ball lattice.
pub fn sup_ball_l1(u: &GridField, x: &Point, r: f64) -> f64 {
    let lat = BallLattice::new(u.grid(), x, r);
    (0..=u.grid().nt)
        .map(|k| lat.sample(u, k).iter().map(|v| v.abs()).sum::<f64>() * lat.weight)
        .fold(0.0, f64::max)
}

/// min{1, t0^{1/β}, (T−t0)^{1/β}, R − |x0|}
pub fn radius_bound(grid: &GridSpec, params: &ProblemParams, x0: &Point, t0: f64) -> f64 {
    let ib = 1.0 / params.beta();
    1f64.min(t0.powf(ib))
        .min((grid.horizon - t0).powf(ib))
        .min(grid.radius - x0.norm())
}

impl IterationParams {
    /// Size B = max(1, 6 c_{R0}/ϰ) from the field and halve R0 until
    /// B^{2−p}(2R0)^β fits in min{t0, T−t0} with room for slot supports.
    pub fn fit(
        u: &GridField,
        params: &ProblemParams,
        x0: &Point,
        t0: f64,
        opts: &IterationOptions,
    ) -> Result<Self> {
        let g = u.grid();
        if !(opts.kappa > 0.0 && opts.kappa < 1.0) {
            return range_err(format!("kappa = {} must lie in (0, 1)", opts.kappa));
        }
        if !(t0 > 0.0 && t0 < g.horizon) {
            return range_err(format!("t0 = {t0} must lie in (0, {})", g.horizon));
        }
        if x0.dim() != g.n || x0.norm() >= g.radius {
            return range_err("x0 must be an interior point of the grid ball");
        }
        if opts.j_max == 0 || opts.scan_points < 2 || !(opts.root_tol > 0.0) {
            return range_err("j_max ≥ 1, scan_points ≥ 2 and root_tol > 0 required");
        }
        let bound = radius_bound(g, params, x0, t0);
        let (p, beta) = (params.p(), params.beta());
        let room = t0.min(g.horizon - t0);
        let mut r0 = opts.r0.unwrap_or(0.5 * bound);
        if !(r0 > 0.0) {
            return range_err(format!("R0 = {r0} must be positive"));
        }
        for halvings in 0..80 {
            if r0 < bound {
                let c = sup_ball_l1(u, x0, r0);
                let b = (6.0 * c / opts.kappa).max(1.0);
                let span = b.powf(2.0 - p) * r0.powf(beta) * 2f64.max(2f64.powf(beta));
                if span <= room {
                    return Ok(Self {
                        kappa: opts.kappa,
                        b,
                        r0,
                        x0: *x0,
                        t0,
                        j_max: opts.j_max,
                        root_tol: opts.root_tol,
                        stop_ratio: opts.stop_ratio,
                        scan_points: opts.scan_points,
                        wolff_tol: opts.wolff_tol,
                        c_r0: c,
                        r0_halvings: halvings,
                    });
                }
            }
            r0 *= 0.5;
        }
        range_err("no admissible R0 found")
    }

    pub fn rho(&self, j: usize) -> f64 {
        self.r0 * 0.5f64.powi(j as i32)
    }

    /// Half-length B^{2−p}ρ_j^β of the interval I_j.
    pub fn interval_half(&self, j: usize, params: &ProblemParams) -> f64 {
        self.b.powf(2.0 - params.p()) * self.rho(j).powf(params.beta())
    }
}

/// Equally spaced slot centers partitioning I_j.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotFamily {
    pub start: f64,
    pub spacing: f64,
    pub count: u64,
}

impl SlotFamily {
    pub fn center(&self, m: u64) -> f64 {
        self.start + (m as f64 + 0.5) * self.spacing
    }

    /// Largest m with center(m) < t (may be negative).
    fn index_below(&self, t: f64) -> i64 {
        ((t - self.start) / self.spacing - 0.5).ceil() as i64 - 1
    }
}

pub fn slot_family(j: usize, delta_prev: f64, iter: &IterationParams, params: &ProblemParams) -> SlotFamily {
    let half = iter.interval_half(j, params);
    let target = 0.375 * delta_prev.powf(2.0 - params.p()) * iter.rho(j).powf(params.p());
    let count = (2.0 * half / target).ceil().clamp(1.0, 1e18) as u64;
    SlotFamily {
        start: iter.t0 - half,
        spacing: 2.0 * half / count as f64,
        count,
    }
}

/// Slot centers τ*_{j,m}. Allocates one entry per slot.
pub fn time_slots(j: usize, delta_prev: f64, iter: &IterationParams, params: &ProblemParams) -> Vec<f64> {
    let fam = slot_family(j, delta_prev, iter, params);
    (0..fam.count).map(|m| fam.center(m)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Halving,
    KappaRoot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    CapReached,
    LevelEscapedDomain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub j: usize,
    pub rho: f64,
    /// l_j
    pub level: f64,
    pub delta_prev: f64,
    /// δ_j = l_{j+1} − l_j
    pub delta: f64,
    pub branch: Branch,
    /// A*_j(l_{j+1})
    pub a_value: f64,
    /// A*_j(l_j + δ_{j−1}/2)
    pub a_half: f64,
    /// A*_j at the right end l_j + Bρ_j^{−n} and its bound 3c_{R0}/B.
    pub right_end_value: f64,
    pub right_end_bound: f64,
    pub slot_count: u64,
    /// M(j) / (B^{2−p}ρ_j^{n(p−2)}δ_{j−1}^{p−2})
    pub slot_count_ratio: f64,
    pub slots_evaluated: u64,
    /// Σ_m θ*^k ≥ 1 at every time level in I_j.
    pub cover_ok: bool,
    /// Scan values were nonincreasing (root branch only).
    pub monotone_scan: Option<bool>,
    /// A*_j just below the returned root (root branch only).
    pub a_below_root: Option<f64>,
    /// (δ_j − δ_{j−1}/2)_+ / (ρ_j² + (μ(B_j)/ρ_j^{n−p})^{1/(p−1)}); levels j ≥ 1.
    pub gamma: Option<f64>,
    pub ball_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationState {
    pub params: IterationParams,
    /// l_0, l_1, …
    pub levels: Vec<f64>,
    /// δ_{−1}, δ_0, δ_1, …
    pub deltas: Vec<f64>,
    pub records: Vec<LevelRecord>,
    pub stop_reason: Option<StopReason>,
}

impl IterationState {
    pub fn new(iter: &IterationParams) -> Self {
        let r2 = iter.r0 * iter.r0;
        Self {
            params: iter.clone(),
            levels: vec![r2],
            deltas: vec![r2],
            records: Vec::new(),
            stop_reason: None,
        }
    }

    pub fn a_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.a_value).collect()
    }

    pub fn slot_counts(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.slot_count).collect()
    }

    /// δ_0, once level 0 has been advanced.
    pub fn delta0(&self) -> Option<f64> {
        self.deltas.get(1).copied()
    }
}

/// Evaluates A*_j(l_j + δ) for one level with the field sampled once.
struct LevelEvaluator<'a> {
    grid: &'a GridSpec,
    params: &'a ProblemParams,
    rho: f64,
    slots: SlotFamily,
    /// Cells k0..=k1 with sampled excess (u − l_j)_+ per lattice point.
    k0: usize,
    excess: Vec<Vec<(f64, f64, f64)>>,
}

impl<'a> LevelEvaluator<'a> {
    fn new(
        u: &'a GridField,
        iter: &IterationParams,
        params: &'a ProblemParams,
        j: usize,
        l_base: f64,
        delta_prev: f64,
    ) -> Self {
        let grid = u.grid();
        let rho = iter.rho(j);
        let slots = slot_family(j, delta_prev, iter, params);
        let reach = 2.0 * iter.interval_half(j, params);
        let (k0, k1) = cells_touching(grid, iter.t0 - reach, iter.t0 + reach);
        let lat = BallLattice::new(grid, &iter.x0, rho);
        let (kexp, p) = (params.k(), params.p());
        let xi: Vec<f64> = lat
            .radii
            .iter()
            .map(|&r| crate::functionals::xi_ramp(r, rho))
            .collect();
        let excess = (k0..=k1)
            .map(|k| {
                lat.sample(u, k)
                    .into_iter()
                    .zip(&xi)
                    .filter(|(v, x)| *v > l_base && **x > 0.0)
                    .map(|(v, x)| (v - l_base, x.powf(kexp - p) * lat.weight, x.powf(kexp) * lat.weight))
                    .collect()
            })
            .collect();
        Self {
            grid,
            params,
            rho,
            slots,
            k0,
            excess,
        }
    }

    /// (max over slots, slots evaluated)
    fn eval(&self, delta: f64) -> (f64, u64) {
        let lam = self.params.lambda();
        let mut active = Vec::new();
        let mut s1 = Vec::new();
        let mut s2 = Vec::new();
        for (i, cell) in self.excess.iter().enumerate() {
            if cell.is_empty() {
                continue;
            }
            let mut a = 0.0;
            let mut b = 0.0;
            for &(e, wkp, wk) in cell {
                let z = e / delta;
                a += z * wkp;
                b += g_function(z, lam) * wk;
            }
            active.push(self.k0 + i);
            s1.push(a);
            s2.push(b);
        }
        if active.is_empty() {
            return (0.0, 0);
        }
        let p = self.params.p();
        let n = self.params.n() as i32;
        let half = delta.powf(2.0 - p) * self.rho.powf(p);
        let c1 = delta.powf(p - 2.0) * self.rho.powi(-n) * self.rho.powf(-p);
        let c2 = self.rho.powi(-n);
        let kexp = self.params.k();
        let dt = self.grid.dt();
        let cell_of = |t: f64| ((t / dt + 0.5).floor().max(0.0) as usize).min(self.grid.nt);
        let cell_hi = |k: usize| (k as f64 + 0.5) * dt;
        let slot_value = |tau: f64| -> f64 {
            let bump = TimeBump { center: tau, half, p };
            let lo = active.partition_point(|&k| k < cell_of(tau - half));
            let hi = active.partition_point(|&k| k <= cell_of(tau + half));
            let mut first = 0.0;
            let mut second: f64 = 0.0;
            for i in lo..hi {
                let (a, b) = time_cell(self.grid, active[i]);
                first += s1[i] * bump.integral(a, b, kexp - p);
                second = second.max(s2[i] * bump.sup(a, b).powf(kexp));
            }
            c1 * first + c2 * second
        };

        let fam = self.slots;
        let count = fam.count as i64;
        let mut best: f64 = 0.0;
        let mut evaluated = 0u64;
        let first_lo = time_cell(self.grid, active[0]).0;
        let mut m = (fam.index_below(first_lo - half)).max(0);
        while m < count {
            let tau = fam.center(m as u64);
            let kl = cell_of(tau - half);
            let kh = cell_of(tau + half);
            let next = active.partition_point(|&k| k < kl);
            if next == active.len() {
                break;
            }
            if active[next] > kh {
                let target = time_cell(self.grid, active[next]).0 - half;
                m = (fam.index_below(target)).max(m + 1);
                continue;
            }
            // Slots keeping the same first and last touched cell.
            let lim = (cell_hi(kl) + half).min(cell_hi(kh) - half);
            let run_end = fam.index_below(lim).clamp(m, count - 1);
            if kl == kh {
                // Support inside one cell: every slot in the run is identical.
                best = best.max(slot_value(tau));
                evaluated += 1;
            } else {
                let len = (run_end - m) as u64;
                let stride = (len / STRADDLE_SAMPLES).max(1) as i64;
                let mut i = m;
                loop {
                    best = best.max(slot_value(fam.center(i as u64)));
                    evaluated += 1;
                    if i == run_end {
                        break;
                    }
                    i = (i + stride).min(run_end);
                }
            }
            m = run_end + 1;
        }
        (best, evaluated)
    }
}

/// A*_j(l_base + δ) = max over the slot family of level j, with slots sized
/// by δ_{j−1} = `delta_prev`. Returns the value and the slots evaluated.
pub fn level_functional(
    u: &GridField,
    iter: &IterationParams,
    params: &ProblemParams,
    j: usize,
    l_base: f64,
    delta_prev: f64,
    delta: f64,
) -> (f64, u64) {
    LevelEvaluator::new(u, iter, params, j, l_base, delta_prev).eval(delta)
}

/// Σ_m θ*^k ≥ 1 at every time level in I_j for the final step δ_j.
fn plateau_cover(grid: &GridSpec, fam: &SlotFamily, half: f64, p: f64, kexp: f64, t0: f64, i_half: f64) -> bool {
    let (k0, k1) = cells_touching(grid, t0 - i_half, t0 + i_half);
    for k in k0..=k1 {
        let t = grid.time(k);
        if t <= t0 - i_half || t >= t0 + i_half {
            continue;
        }
        let near = fam.index_below(t).clamp(0, fam.count as i64 - 1);
        let lo = (near - 32).max(0);
        let hi = (near + 32).min(fam.count as i64 - 1);
        let total: f64 = (lo..=hi)
            .map(|m| {
                TimeBump {
                    center: fam.center(m as u64),
                    half,
                    p,
                }
                .value(t)
                .powf(kexp)
            })
            .sum();
        if total < 1.0 - 1e-12 {
            return false;
        }
    }
    true
}

/// One step of the construction at level j = state.records.len().
pub fn advance_level(
    u: &GridField,
    state: &IterationState,
    iter: &IterationParams,
    params: &ProblemParams,
    m: &RadonMeasure,
) -> Result<IterationState> {
    let j = state.records.len();
    let l_j = *state.levels.last().expect("levels start with l_0");
    let delta_prev = *state.deltas.last().expect("deltas start with δ_{-1}");
    let rho = iter.rho(j);
    let n = params.n() as i32;
    let kappa = iter.kappa;
    let ev = LevelEvaluator::new(u, iter, params, j, l_j, delta_prev);
    let lo = 0.5 * delta_prev;
    let hi = iter.b * rho.powi(-n);
    let (a_half, mut evaluated) = ev.eval(lo);
    let (right_end_value, e) = ev.eval(hi);
    evaluated += e;
    let right_end_bound = 3.0 * iter.c_r0 / iter.b;

    let mut monotone_scan = None;
    let mut a_below_root = None;
    let (branch, delta, a_value) = if a_half <= kappa {
        (Branch::Halving, lo, a_half)
    } else {
        if right_end_value > kappa {
            return Err(Error::RootBracket {
                level: j,
                value: right_end_value,
                kappa,
            });
        }
        let s = iter.scan_points;
        let ratio = hi / lo;
        let mut prev = (lo, a_half);
        let mut bracket = None;
        let mut monotone = true;
        for i in 1..s {
            let d = if i == s - 1 { hi } else { lo * ratio.powf(i as f64 / (s - 1) as f64) };
            let (a, e) = if i == s - 1 { (right_end_value, 0) } else { ev.eval(d) };
            evaluated += e;
            if a > prev.1 * (1.0 + 1e-9) {
                monotone = false;
            }
            if a <= kappa {
                bracket = Some((prev, (d, a)));
                break;
            }
            prev = (d, a);
        }
        monotone_scan = Some(monotone);
        let ((mut d_lo, mut a_lo), (mut d_hi, mut a_hi)) = bracket.expect("right end satisfies the threshold");
        while d_hi / d_lo - 1.0 > iter.root_tol {
            let mid = (d_lo * d_hi).sqrt();
            let (a, e) = ev.eval(mid);
            evaluated += e;
            if a <= kappa {
                d_hi = mid;
                a_hi = a;
            } else {
                d_lo = mid;
                a_lo = a;
            }
        }
        a_below_root = Some(a_lo);
        (Branch::KappaRoot, d_hi, a_hi)
    };

    let p = params.p();
    let fam = ev.slots;
    let cover_ok = plateau_cover(
        u.grid(),
        &fam,
        delta.powf(2.0 - p) * rho.powf(p),
        p,
        params.k(),
        iter.t0,
        iter.interval_half(j, params),
    );
    let ball_mass = m.ball_mass(&iter.x0, rho);
    let gamma = (j >= 1).then(|| {
        let w = (ball_mass * rho.powf(p - n as f64)).powf(1.0 / (p - 1.0));
        (delta - 0.5 * delta_prev).max(0.0) / (rho * rho + w)
    });
    let mut next = state.clone();
    next.levels.push(l_j + delta);
    next.deltas.push(delta);
    next.records.push(LevelRecord {
        j,
        rho,
        level: l_j,
        delta_prev,
        delta,
        branch,
        a_value,
        a_half,
        right_end_value,
        right_end_bound,
        slot_count: fam.count,
        slot_count_ratio: fam.count as f64
            / (iter.b.powf(2.0 - p) * rho.powf(n as f64 * (p - 2.0)) * delta_prev.powf(p - 2.0)),
        slots_evaluated: evaluated,
        cover_ok,
        monotone_scan,
        a_below_root,
        gamma,
        ball_mass,
    });
    Ok(next)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delta0Case {
    Halving,
    KappaRoot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Delta0Report {
    pub case: Delta0Case,
    pub delta0: f64,
    /// (R^{−(p+n)}∬ u_+)^{1/(3−p)} over B_R × (t0 ∓ B^{2−p}R^β)
    pub average_term: f64,
    /// R²
    pub radius_term: f64,
    /// (μ(B_R)/R^{n−p})^{1/(p−1)}
    pub measure_term: f64,
}

/// ∬ u_+ over B_r(x) × (t_lo, t_hi) with u piecewise constant in time.
pub fn windowed_integral(u: &GridField, x: &Point, r: f64, t_lo: f64, t_hi: f64) -> f64 {
    let g = u.grid();
    let lat = BallLattice::new(g, x, r);
    let (k0, k1) = cells_touching(g, t_lo, t_hi);
    let mut total = 0.0;
    for k in k0..=k1 {
        let (a, b) = time_cell(g, k);
        let len = b.min(t_hi) - a.max(t_lo);
        if len <= 0.0 {
            continue;
        }
        let s: f64 = lat.sample(u, k).iter().map(|v| v.max(0.0)).sum();
        total += s * lat.weight * len;
    }
    total
}

pub fn delta0_estimate(
    u: &GridField,
    iter: &IterationParams,
    params: &ProblemParams,
    m: &RadonMeasure,
) -> Result<Delta0Report> {
    let state = advance_level(u, &IterationState::new(iter), iter, params, m)?;
    Ok(delta0_from_state(u, &state, params, m))
}

fn delta0_from_state(u: &GridField, state: &IterationState, params: &ProblemParams, m: &RadonMeasure) -> Delta0Report {
    let iter = &state.params;
    let rec = &state.records[0];
    let (n, p) = (params.n() as f64, params.p());
    let r = iter.r0;
    let half = iter.interval_half(0, params);
    let avg = windowed_integral(u, &iter.x0, r, iter.t0 - half, iter.t0 + half);
    Delta0Report {
        case: match rec.branch {
            Branch::Halving => Delta0Case::Halving,
            Branch::KappaRoot => Delta0Case::KappaRoot,
        },
        delta0: rec.delta,
        average_term: (r.powf(-(p + n)) * avg).powf(1.0 / (3.0 - p)),
        radius_term: r * r,
        measure_term: (m.ball_mass(&iter.x0, r) * r.powf(p - n)).powf(1.0 / (p - 1.0)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub state: IterationState,
    pub delta0: Delta0Report,
    /// Last computed level l_{J+1}.
    pub l_last: f64,
    /// Geometric bound on Σ_{j>J} δ_j (+∞ if the last ratio is ≥ 1).
    pub tail_bound: f64,
    /// l_last + tail_bound
    pub l_limit: f64,
    pub max_gamma: f64,
    pub sum_rho_sq: f64,
    pub wolff_sum: f64,
    /// W(x0, 2R0)
    pub wolff_2r: f64,
    pub bound_rhs: f64,
    /// l_last / (R0² + average term + W(x0, 2R0))
    pub gamma_emp: f64,
    pub u_at_point: f64,
    /// Largest |u − u(x0,t0)| over the neighbouring nodes and time levels.
    pub local_oscillation: f64,
    /// u(x0,t0) ≤ l_limit + 3·local_oscillation
    pub consistent: bool,
}

/// Per-run checks of the construction's invariants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantCheck {
    /// δ_j ≤ Bρ_j^{−n} at every level.
    pub step_bound: bool,
    /// A_j(l_{j+1}) ≤ ϰ at every level.
    pub threshold: bool,
    pub plateau_cover: bool,
    pub levels_increasing: bool,
    /// Converged, or the tail bound is at most 1% of the limit level.
    pub remainder: bool,
    /// Right-end values below 3c_{R0}/B at every level.
    pub right_end: bool,
}

impl InvariantCheck {
    pub fn all(&self) -> bool {
        self.step_bound && self.threshold && self.plateau_cover && self.levels_increasing && self.remainder && self.right_end
    }
}

impl IterationSummary {
    pub fn invariants(&self, params: &ProblemParams) -> InvariantCheck {
        let it = &self.state.params;
        let recs = &self.state.records;
        let n = params.n() as i32;
        InvariantCheck {
            step_bound: recs.iter().all(|r| r.delta <= it.b * r.rho.powi(-n) * (1.0 + 1e-12)),
            threshold: recs.iter().all(|r| r.a_value <= it.kappa),
            plateau_cover: recs.iter().all(|r| r.cover_ok),
            levels_increasing: self.state.levels.windows(2).all(|w| w[1] > w[0]),
            remainder: self.state.stop_reason == Some(StopReason::Converged) || self.tail_bound <= 0.01 * self.l_limit,
            right_end: recs.iter().all(|r| r.right_end_value <= r.right_end_bound * (1.0 + 1e-9)),
        }
    }
}

pub fn run_iteration(
    u: &GridField,
    iter: &IterationParams,
    params: &ProblemParams,
    m: &RadonMeasure,
) -> Result<IterationSummary> {
    let mut state = IterationState::new(iter);
    for _ in 0..iter.j_max {
        state = advance_level(u, &state, iter, params, m)?;
        let d0 = state.deltas[1];
        let last = *state.deltas.last().unwrap();
        if state.records.len() > 1 && last < iter.stop_ratio * d0 {
            state.stop_reason = Some(StopReason::Converged);
            break;
        }
    }
    if state.stop_reason.is_none() {
        state.stop_reason = Some(StopReason::CapReached);
    }
    let delta0 = delta0_from_state(u, &state, params, m);
    let l_last = *state.levels.last().unwrap();
    let k = state.deltas.len();
    let tail_bound = if k >= 3 {
        let r = state.deltas[k - 1] / state.deltas[k - 2];
        if r < 1.0 {
            state.deltas[k - 1] * r / (1.0 - r)
        } else {
            f64::INFINITY
        }
    } else {
        f64::INFINITY
    };
    let (n, p) = (params.n() as f64, params.p());
    let mut sum_rho_sq = 0.0;
    let mut wolff_sum = 0.0;
    let mut max_gamma: f64 = 0.0;
    for rec in state.records.iter().skip(1) {
        sum_rho_sq += rec.rho * rec.rho;
        wolff_sum += (rec.rho.powf(p - n) * rec.ball_mass).powf(1.0 / (p - 1.0));
        max_gamma = max_gamma.max(rec.gamma.unwrap_or(0.0));
    }
    let w2r = wolff_potential(m, WolffExponents::from(params), &iter.x0, 2.0 * iter.r0, iter.wolff_tol)?.value;
    let bound_rhs = iter.r0 * iter.r0 + delta0.average_term + w2r;
    let g = u.grid();
    let kt = g.nearest_time(iter.t0);
    let u0 = u.interpolate(kt, &iter.x0);
    let h = g.h();
    let mut osc: f64 = 0.0;
    for kk in kt.saturating_sub(1)..=(kt + 1).min(g.nt) {
        for corner in 0..3usize.pow(g.n as u32) {
            let mut x = iter.x0;
            let mut c = corner;
            for d in 0..g.n {
                x = x.shifted(d, ((c % 3) as f64 - 1.0) * h);
                c /= 3;
            }
            osc = osc.max((u.interpolate(kk, &x) - u0).abs());
        }
    }
    let l_limit = l_last + tail_bound;
    Ok(IterationSummary {
        delta0,
        l_last,
        tail_bound,
        l_limit,
        max_gamma,
        sum_rho_sq,
        wolff_sum,
        wolff_2r: w2r,
        bound_rhs,
        gamma_emp: if w2r.is_infinite() { 0.0 } else { l_last / bound_rhs },
        u_at_point: u0,
        local_oscillation: osc,
        consistent: u0 <= l_last.max(l_limit.min(f64::MAX)) + 3.0 * osc + 1e-12 * u0.abs(),
        state,
    })
}
