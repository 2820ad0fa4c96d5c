//! Implicit solver for u_t − div((|∇u|² + ε²)^{(p−2)/2} ∇u) = f on B_R × (0, T]
//! with u(·, 0) = 0 and u = 0 off the open ball.
//!
//! Each cube of the grid is split into n! Kuhn simplices. On a simplex whose
//! vertices follow a monotone lattice path v₀ → v₁ → … → v_n, the gradient
//! of the linear interpolant has components (u(v_k) − u(v_{k−1}))/h. A time
//! step minimizes the convex functional
//!
//!   J(u) = Σ_i h^n [(u_i − u_i^old)²/(2 dt) − f_i u_i] + Σ_S |S| Φ(|∇u|_S)
//!
//! with Φ(g) = ((g² + ε²)^{p/2} − ε^p)/p. Its Euler–Lagrange equation is the
//! backward Euler step. Freezing the coefficient gives weighted graph
//! Laplacians (M-matrices), so the fixed-point iterates stay nonnegative.
//! Newton steps with a line search take over once the fixed point
//! iteration slows down.

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec, SpatialField};
use crate::measure::RadonMeasure;
use crate::params::ProblemParams;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Bound on dt·‖residual‖∞ relative to the solution scale.
    pub tol: f64,
    pub max_iterations: usize,
    /// Atom spreading width; defaults to 2h.
    pub mollify_width: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iterations: 400,
            mollify_width: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// Absolute regularization ε used in the flux.
    pub eps_abs: f64,
    pub u_scale: f64,
    pub total_iterations: usize,
    pub newton_steps: usize,
    pub max_step_iterations: usize,
    /// Largest final dt·‖residual‖∞ over all steps.
    pub max_residual: f64,
    /// Largest dt/h²·(|∇u|² + ε²)^{(p−2)/2} seen, a conditioning indicator.
    pub stiffness: f64,
    pub min_value: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub field: GridField,
    pub source: SpatialField,
    pub diagnostics: SolveDiagnostics,
}

pub fn solve_ibvp(m: &RadonMeasure, params: &ProblemParams, grid: &GridSpec) -> Result<GridField> {
    Ok(solve_ibvp_with(m, params, grid, &SolverOptions::default())?.field)
}

pub fn solve_ibvp_with(
    m: &RadonMeasure,
    params: &ProblemParams,
    grid: &GridSpec,
    opts: &SolverOptions,
) -> Result<Solution> {
    grid.validate()?;
    if grid.n != params.n() {
        return Err(Error::Grid(format!(
            "grid dimension {} differs from n = {}",
            grid.n,
            params.n()
        )));
    }
    let width = opts.mollify_width.unwrap_or(2.0 * grid.h());
    let source = m.mollify_to_grid(grid, width)?;
    let mut diag = SolveDiagnostics::default();
    let mut field = GridField::zeros(*grid);
    let total = m.total_mass();
    if total == 0.0 {
        return Ok(Solution {
            field,
            source,
            diagnostics: diag,
        });
    }
    diag.u_scale = grid.horizon * total / grid.domain_volume();
    diag.eps_abs = params.eps_reg() * diag.u_scale / grid.radius;
    let disc = Discretization::new(grid, params.p(), diag.eps_abs);
    let f = &source.values;
    let nn = grid.node_count();
    let mut older: Vec<f64> = vec![0.0; nn];
    let mut old: Vec<f64> = vec![0.0; nn];
    for step in 1..=grid.nt {
        let mut u: Vec<f64> = (0..nn)
            .map(|i| if disc.active[i] { (2.0 * old[i] - older[i]).max(0.0) } else { 0.0 })
            .collect();
        let stats = disc.step(&mut u, &old, f, opts, step)?;
        diag.total_iterations += stats.iterations;
        diag.newton_steps += stats.newton;
        diag.max_step_iterations = diag.max_step_iterations.max(stats.iterations);
        diag.max_residual = diag.max_residual.max(stats.residual);
        diag.stiffness = diag.stiffness.max(stats.stiffness);
        field.slice_mut(step).copy_from_slice(&u);
        older = std::mem::replace(&mut old, u);
    }
    diag.min_value = field.values().iter().copied().fold(f64::INFINITY, f64::min);
    let top = field.values().iter().copied().fold(0.0, f64::max);
    if diag.min_value < -1e-12 * top.max(1.0) {
        return Err(Error::Convergence {
            step: 0,
            residual: diag.min_value,
            iterations: diag.total_iterations,
        });
    }
    if diag.stiffness > 1e12 {
        diag.warnings.push(format!(
            "dt/h² times the flux coefficient reaches {:.3e}; inner systems are near the conditioning limit",
            diag.stiffness
        ));
    }
    Ok(Solution {
        field,
        source,
        diagnostics: diag,
    })
}

/// Maximum of u over nodes with t_lo ≤ t_k ≤ t_hi.
pub fn sup_norm_on_window(u: &GridField, t_lo: f64, t_hi: f64) -> f64 {
    let g = u.grid();
    let eps = 1e-12 * g.horizon;
    (0..=g.nt)
        .filter(|&k| g.time(k) >= t_lo - eps && g.time(k) <= t_hi + eps)
        .flat_map(|k| u.slice(k).iter().copied())
        .fold(0.0, f64::max)
}

/// (t_k, Σ|u|·h^n) for every time level.
pub fn mass_history(u: &GridField) -> Vec<(f64, f64)> {
    let g = u.grid();
    let vol = g.cell_volume();
    (0..=g.nt)
        .map(|k| (g.time(k), u.slice(k).iter().map(|v| v.abs()).sum::<f64>() * vol))
        .collect()
}

struct StepStats {
    iterations: usize,
    newton: usize,
    residual: f64,
    stiffness: f64,
}

struct Discretization {
    n: usize,
    nn: usize,
    h: f64,
    dt: f64,
    /// h^n, the lumped mass per node.
    mass: f64,
    /// h^n / n!, the simplex volume.
    vol: f64,
    p: f64,
    eps2: f64,
    active: Vec<bool>,
    /// Lattice path v₀..v_n of each simplex; unused trailing slots repeat v_n.
    paths: Vec<[usize; 4]>,
    /// Axis of each path step.
    axes: Vec<[usize; 3]>,
    strides: [usize; 3],
}

/// Per-simplex quantities at the current iterate.
#[derive(Clone, Copy)]
struct Local {
    g: [f64; 3],
    a: f64,
    b: f64,
}

fn permutations(n: usize) -> Vec<[usize; 3]> {
    match n {
        1 => vec![[0, 0, 0]],
        2 => vec![[0, 1, 0], [1, 0, 0]],
        _ => vec![
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ],
    }
}

impl Discretization {
    fn new(grid: &GridSpec, p: f64, eps: f64) -> Self {
        let n = grid.n;
        let nn = grid.node_count();
        let h = grid.h();
        let active = grid.active_mask();
        let mut strides = [0; 3];
        for (d, s) in strides.iter_mut().enumerate().take(n) {
            *s = grid.stride(d);
        }
        let perms = permutations(n);
        let mut paths = Vec::new();
        let mut axes = Vec::new();
        let cubes = (grid.nx - 1).pow(n as u32);
        for c in 0..cubes {
            let mut rest = c;
            let mut base = 0;
            for s in strides.iter().take(n) {
                base += (rest % (grid.nx - 1)) * s;
                rest /= grid.nx - 1;
            }
            for perm in &perms {
                let mut path = [base; 4];
                for k in 0..n {
                    path[k + 1] = path[k] + strides[perm[k]];
                }
                for k in n + 1..4 {
                    path[k] = path[n];
                }
                if path[..=n].iter().any(|&v| active[v]) {
                    paths.push(path);
                    axes.push(*perm);
                }
            }
        }
        let fact = (1..=n).product::<usize>() as f64;
        Self {
            n,
            nn,
            h,
            dt: grid.dt(),
            mass: grid.cell_volume(),
            vol: grid.cell_volume() / fact,
            p,
            eps2: eps * eps,
            active,
            paths,
            axes,
            strides,
        }
    }

    fn local(&self, u: &[f64], s: usize) -> Local {
        let path = &self.paths[s];
        let mut g = [0.0; 3];
        let mut q = 0.0;
        for k in 0..self.n {
            g[k] = (u[path[k + 1]] - u[path[k]]) / self.h;
            q += g[k] * g[k];
        }
        let base = q + self.eps2;
        let a = base.powf(0.5 * (self.p - 2.0));
        let b = (self.p - 2.0) * a / base;
        Local { g, a, b }
    }

    fn locals(&self, u: &[f64]) -> Vec<Local> {
        (0..self.paths.len()).map(|s| self.local(u, s)).collect()
    }

    fn objective(&self, u: &[f64], old: &[f64], f: &[f64]) -> f64 {
        let mut j = 0.0;
        for i in 0..self.nn {
            if self.active[i] {
                let d = u[i] - old[i];
                j += self.mass * (0.5 * d * d / self.dt - f[i] * u[i]);
            }
        }
        let ep = self.eps2.powf(0.5 * self.p);
        for s in 0..self.paths.len() {
            let path = &self.paths[s];
            let mut q = 0.0;
            for k in 0..self.n {
                let g = (u[path[k + 1]] - u[path[k]]) / self.h;
                q += g * g;
            }
            // (q+ε²)^{p/2} − ε^p without cancellation for q ≪ ε²
            let t = q / self.eps2;
            let phi = if t < 1e-6 {
                ep * (0.5 * self.p * t) * (1.0 + 0.25 * (self.p - 2.0) * t)
            } else {
                ep * ((0.5 * self.p) * t.ln_1p()).exp_m1()
            };
            j += self.vol * phi / self.p;
        }
        j
    }

    /// ∂J/∂u on active nodes, zero elsewhere.
    fn gradient(&self, u: &[f64], old: &[f64], f: &[f64], locals: &[Local], out: &mut [f64]) {
        for i in 0..self.nn {
            out[i] = if self.active[i] {
                self.mass * ((u[i] - old[i]) / self.dt - f[i])
            } else {
                0.0
            };
        }
        let c = self.vol / self.h;
        for (s, loc) in locals.iter().enumerate() {
            let path = &self.paths[s];
            for k in 0..self.n {
                let t = c * loc.a * loc.g[k];
                out[path[k + 1]] += t;
                out[path[k]] -= t;
            }
        }
        for i in 0..self.nn {
            if !self.active[i] {
                out[i] = 0.0;
            }
        }
    }

    /// Frozen-coefficient edge weights |S|·a_S/h², indexed axis·nn + tail.
    fn edge_weights(&self, locals: &[Local]) -> Vec<f64> {
        let mut w = vec![0.0; self.n * self.nn];
        let c = self.vol / (self.h * self.h);
        for (s, loc) in locals.iter().enumerate() {
            let path = &self.paths[s];
            let axes = &self.axes[s];
            for k in 0..self.n {
                w[axes[k] * self.nn + path[k]] += c * loc.a;
            }
        }
        w
    }

    /// Roundoff level of dt·residual at the current iterate.
    fn residual_floor(&self, u: &[f64], w: &[f64]) -> f64 {
        let mut acc = vec![0.0; self.nn];
        for d in 0..self.n {
            let s = self.strides[d];
            for i in 0..self.nn {
                let we = w[d * self.nn + i];
                if we != 0.0 {
                    let t = we * (u[i].abs() + u[i + s].abs());
                    acc[i] += t;
                    acc[i + s] += t;
                }
            }
        }
        let top = (0..self.nn)
            .filter(|&i| self.active[i])
            .map(|i| acc[i])
            .fold(0.0, f64::max);
        64.0 * f64::EPSILON * self.dt / self.mass * top
    }

    fn step(
        &self,
        u: &mut Vec<f64>,
        old: &[f64],
        f: &[f64],
        opts: &SolverOptions,
        step: usize,
    ) -> Result<StepStats> {
        let mut grad = vec![0.0; self.nn];
        let mut stats = StepStats {
            iterations: 0,
            newton: 0,
            residual: 0.0,
            stiffness: 0.0,
        };
        let f_top = f.iter().copied().fold(0.0, f64::max);
        let mut picard_run = 0usize;
        let mut prev_res = f64::INFINITY;
        // Newton stalls on nearly flat regions where the flux derivative
        // blows up; a burst of fixed point steps gets it moving again.
        let mut best_res = f64::INFINITY;
        let mut stall = 0usize;
        let mut forced_picard = 0usize;
        for iter in 0..=opts.max_iterations {
            let locals = self.locals(u);
            self.gradient(u, old, f, &locals, &mut grad);
            let w = self.edge_weights(&locals);
            let res = grad.iter().map(|g| g.abs()).fold(0.0, f64::max) * self.dt / self.mass;
            let u_top = u.iter().copied().fold(0.0, f64::max);
            let scale = u_top.max(self.dt * f_top).max(f64::MIN_POSITIVE);
            let target = (opts.tol * scale).max(self.residual_floor(u, &w));
            stats.iterations = iter;
            stats.residual = res;
            let a_max = locals.iter().map(|l| l.a).fold(0.0, f64::max);
            stats.stiffness = self.dt / (self.h * self.h) * a_max;
            if res <= target {
                return Ok(stats);
            }
            if iter == opts.max_iterations {
                break;
            }
            // Newton once the fixed point iteration has settled in, or
            // right away in one dimension where the solve is direct.
            if res < 0.9 * best_res {
                best_res = res;
                stall = 0;
            } else {
                stall += 1;
            }
            if stall >= 4 {
                forced_picard = 8;
                stall = 0;
                best_res = res;
            }
            let use_newton =
                forced_picard == 0 && (self.n == 1 || picard_run >= 3 || res < 1e-3 * prev_res.min(scale));
            forced_picard = forced_picard.saturating_sub(1);
            let mut moved = false;
            if use_newton {
                if let Some(s) = self.newton_direction(&locals, &grad) {
                    moved = self.line_search(u, old, f, &grad, &s, res);
                    if moved {
                        stats.newton += 1;
                        picard_run = 0;
                    }
                }
            }
            if !moved {
                self.picard(u, old, f, &w);
                picard_run += 1;
            }
            prev_res = res;
        }
        Err(Error::Convergence {
            step,
            residual: stats.residual,
            iterations: stats.iterations,
        })
    }

    fn line_search(
        &self,
        u: &mut Vec<f64>,
        old: &[f64],
        f: &[f64],
        grad: &[f64],
        s: &[f64],
        res: f64,
    ) -> bool {
        let j0 = self.objective(u, old, f);
        let slope: f64 = grad.iter().zip(s).map(|(g, d)| g * d).sum();
        if !(slope < 0.0) {
            return false;
        }
        let mut trial = vec![0.0; self.nn];
        let mut g_trial = vec![0.0; self.nn];
        let mut alpha = 1.0;
        for _ in 0..30 {
            for i in 0..self.nn {
                trial[i] = u[i] + alpha * s[i];
            }
            let j1 = self.objective(&trial, old, f);
            let ok = if j1 <= j0 + 1e-4 * alpha * slope {
                true
            } else {
                // J differences drown in roundoff near the minimizer; fall
                // back on the residual as merit.
                let locals = self.locals(&trial);
                self.gradient(&trial, old, f, &locals, &mut g_trial);
                let r1 = g_trial.iter().map(|g| g.abs()).fold(0.0, f64::max) * self.dt / self.mass;
                (j1 - j0).abs() <= 1e-13 * j0.abs().max(f64::MIN_POSITIVE) && r1 < (1.0 - 1e-4 * alpha) * res
            };
            if ok {
                std::mem::swap(u, &mut trial);
                return true;
            }
            alpha *= 0.5;
        }
        false
    }

    /// Solve (M/dt + L_w) u = M(old/dt + f) with frozen weights.
    fn picard(&self, u: &mut [f64], old: &[f64], f: &[f64], w: &[f64]) {
        let rhs: Vec<f64> = (0..self.nn)
            .map(|i| if self.active[i] { self.mass * (old[i] / self.dt + f[i]) } else { 0.0 })
            .collect();
        if self.n == 1 {
            let sol = self.tridiagonal(|e| w[e], &rhs);
            u.copy_from_slice(&sol);
            return;
        }
        let mut diag = vec![self.mass / self.dt; self.nn];
        for d in 0..self.n {
            let s = self.strides[d];
            for i in 0..self.nn {
                let we = w[d * self.nn + i];
                if we != 0.0 {
                    diag[i] += we;
                    diag[i + s] += we;
                }
            }
        }
        let apply = |x: &[f64], out: &mut [f64]| {
            for i in 0..self.nn {
                out[i] = self.mass / self.dt * x[i];
            }
            for d in 0..self.n {
                let s = self.strides[d];
                for i in 0..self.nn {
                    let we = w[d * self.nn + i];
                    if we != 0.0 {
                        let t = we * (x[i] - x[i + s]);
                        out[i] += t;
                        out[i + s] -= t;
                    }
                }
            }
        };
        self.pcg(apply, &diag, &rhs, u);
        for v in u.iter_mut() {
            *v = v.max(0.0);
        }
    }

    fn newton_direction(&self, locals: &[Local], grad: &[f64]) -> Option<Vec<f64>> {
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
        if self.n == 1 {
            // One-edge simplices: Hessian weight |S|(a + b g²)/h².
            let c = self.vol / (self.h * self.h);
            let w: Vec<f64> = locals.iter().map(|l| c * (l.a + l.b * l.g[0] * l.g[0])).collect();
            // In 1D simplex s is the edge from node s to s+1.
            let sol = self.tridiagonal(|e| w[e], &rhs);
            return Some(sol);
        }
        let c = self.vol / (self.h * self.h);
        let mut diag = vec![self.mass / self.dt; self.nn];
        for (s, l) in locals.iter().enumerate() {
            let path = &self.paths[s];
            for j in 0..=self.n {
                // coefficient of node v_j in edge k: +1 if k = j, −1 if k = j+1
                let mut e2 = 0.0;
                let mut ge = 0.0;
                if j >= 1 {
                    e2 += 1.0;
                    ge += l.g[j - 1];
                }
                if j < self.n {
                    e2 += 1.0;
                    ge -= l.g[j];
                }
                diag[path[j]] += c * (l.a * e2 + l.b * ge * ge);
            }
        }
        let apply = |x: &[f64], out: &mut [f64]| {
            for i in 0..self.nn {
                out[i] = self.mass / self.dt * x[i];
            }
            for (s, l) in locals.iter().enumerate() {
                let path = &self.paths[s];
                let mut dv = [0.0; 3];
                let mut gd = 0.0;
                for k in 0..self.n {
                    dv[k] = x[path[k + 1]] - x[path[k]];
                    gd += l.g[k] * dv[k];
                }
                for k in 0..self.n {
                    let t = c * (l.a * dv[k] + l.b * gd * l.g[k]);
                    out[path[k + 1]] += t;
                    out[path[k]] -= t;
                }
            }
        };
        let mut sol = vec![0.0; self.nn];
        if self.pcg(apply, &diag, &rhs, &mut sol) {
            Some(sol)
        } else {
            None
        }
    }

    /// 1D system (M/dt + L) x = rhs where edge e joins nodes e and e+1 with
    /// weight w(e); inactive nodes are held at zero.
    fn tridiagonal(&self, w: impl Fn(usize) -> f64, rhs: &[f64]) -> Vec<f64> {
        let nn = self.nn;
        let lo = 1;
        let hi = nn - 2;
        let m = hi - lo + 1;
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut b = vec![0.0; m];
        for r in 0..m {
            let i = lo + r;
            diag[r] = self.mass / self.dt + w(i - 1) + w(i);
            if r + 1 < m {
                upper[r] = -w(i);
            }
            b[r] = rhs[i];
        }
        // Thomas elimination; the matrix is symmetric and diagonally dominant.
        for r in 1..m {
            let factor = upper[r - 1] / diag[r - 1];
            diag[r] -= factor * upper[r - 1];
            b[r] -= factor * b[r - 1];
        }
        let mut x = vec![0.0; nn];
        x[lo + m - 1] = b[m - 1] / diag[m - 1];
        for r in (0..m - 1).rev() {
            x[lo + r] = (b[r] - upper[r] * x[lo + r + 1]) / diag[r];
        }
        x
    }

    /// Jacobi-preconditioned CG on the active nodes; `x` holds the initial
    /// guess. Returns whether the relative tolerance was reached.
    fn pcg(&self, apply: impl Fn(&[f64], &mut [f64]), diag: &[f64], b: &[f64], x: &mut [f64]) -> bool {
        let nn = self.nn;
        let act = &self.active;
        for i in 0..nn {
            if !act[i] {
                x[i] = 0.0;
            }
        }
        let dot = |a: &[f64], c: &[f64]| -> f64 { (0..nn).filter(|&i| act[i]).map(|i| a[i] * c[i]).sum() };
        let mut r = vec![0.0; nn];
        apply(x, &mut r);
        for i in 0..nn {
            r[i] = if act[i] { b[i] - r[i] } else { 0.0 };
        }
        let b_norm = dot(b, b).sqrt();
        if b_norm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return true;
        }
        let mut z: Vec<f64> = (0..nn).map(|i| if act[i] { r[i] / diag[i] } else { 0.0 }).collect();
        let mut d = z.clone();
        let mut rz = dot(&r, &z);
        let mut q = vec![0.0; nn];
        let max_it = 20 * (act.iter().filter(|&&a| a).count()).max(100);
        for _ in 0..max_it {
            if dot(&r, &r).sqrt() <= 1e-13 * b_norm {
                return true;
            }
            apply(&d, &mut q);
            for i in 0..nn {
                if !act[i] {
                    q[i] = 0.0;
                }
            }
            let dq = dot(&d, &q);
            if !(dq > 0.0) {
                return false;
            }
            let alpha = rz / dq;
            for i in 0..nn {
                x[i] += alpha * d[i];
                r[i] -= alpha * q[i];
            }
            for i in 0..nn {
                z[i] = if act[i] { r[i] / diag[i] } else { 0.0 };
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..nn {
                d[i] = z[i] + beta * d[i];
            }
        }
        dot(&r, &r).sqrt() <= 1e-8 * b_norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::params::make_params;

    #[test]
    fn zero_measure_gives_zero() {
        let pp = make_params(1, 1.5, 1e-6, None, None).unwrap();
        let g = GridSpec::new(1, 33, 8, 1.0, 0.5).unwrap();
        let u = solve_ibvp(&RadonMeasure::empty(1, 1.0).unwrap(), &pp, &g).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dirac_1d_positive_and_mass_bounded() {
        let pp = make_params(1, 1.5, 1e-6, None, None).unwrap();
        let g = GridSpec::new(1, 65, 32, 1.0, 1.0).unwrap();
        let m = RadonMeasure::dirac(Point::origin(1), 1.0, 1.0).unwrap();
        let sol = solve_ibvp_with(&m, &pp, &g, &SolverOptions::default()).unwrap();
        assert!(sol.diagnostics.min_value >= -1e-12);
        for (t, mass) in mass_history(&sol.field) {
            assert!(mass <= t * 1.0 * (1.0 + 1e-8) + 1e-14, "t={t} mass={mass}");
        }
        let top = sup_norm_on_window(&sol.field, 0.25, 0.75);
        assert!(top > 0.0);
        assert!(sup_norm_on_window(&sol.field, 0.0, 1.0) >= top);
    }

    #[test]
    fn dirac_2d_positive_and_mass_bounded() {
        let pp = make_params(2, 1.6, 1e-6, None, None).unwrap();
        let g = GridSpec::new(2, 17, 8, 1.0, 1.0).unwrap();
        let m = RadonMeasure::dirac(Point::origin(2), 1.0, 1.0).unwrap();
        let sol = solve_ibvp_with(&m, &pp, &g, &SolverOptions::default()).unwrap();
        assert!(sol.diagnostics.min_value >= -1e-12);
        let last = mass_history(&sol.field).last().unwrap().1;
        assert!(last > 0.0 && last <= 1.0 + 1e-8);
    }

    #[test]
    fn window_and_history_on_constant_field() {
        let g = GridSpec::new(1, 5, 4, 1.0, 1.0).unwrap();
        let f = GridField::from_fn(g, |_, _| 2.5).unwrap();
        assert_eq!(sup_norm_on_window(&f, 0.0, 1.0), 2.5);
        for (_, m) in mass_history(&f) {
            assert!((m - 2.5 * 5.0 * 0.5).abs() < 1e-14);
        }
    }
}
