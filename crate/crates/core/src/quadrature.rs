//! Gauss–Legendre rules and an adaptive Simpson integrator.

use gauss_quad::GaussLegendre;
use std::sync::OnceLock;

/// Cached Gauss–Legendre rule on [−1, 1]; `deg` must be 8, 16 or 32.
pub fn gauss_rule(deg: usize) -> &'static [(f64, f64)] {
    static R8: OnceLock<GaussLegendre> = OnceLock::new();
    static R16: OnceLock<GaussLegendre> = OnceLock::new();
    static R32: OnceLock<GaussLegendre> = OnceLock::new();
    let cell = match deg {
        8 => &R8,
        16 => &R16,
        32 => &R32,
        _ => panic!("no cached Gauss rule of degree {deg}"),
    };
    cell.get_or_init(|| GaussLegendre::new(deg).expect("valid degree"))
        .as_node_weight_pairs()
}

/// ∫_a^b f with a fixed Gauss rule.
pub fn gauss<F: FnMut(f64) -> f64>(deg: usize, a: f64, b: f64, mut f: F) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gauss_rule(deg)
        .iter()
        .map(|&(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

#[derive(Clone, Copy, Debug)]
pub struct SimpsonResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
    pub converged: bool,
}

/// Adaptive Simpson on [a, b] with an absolute tolerance. Intervals are
/// processed depth-first; the tolerance is shared in proportion to length.
/// `budget` caps the number of accepted plus pending intervals.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    budget: usize,
) -> SimpsonResult {
    if !(b > a) {
        return SimpsonResult {
            value: 0.0,
            error: 0.0,
            intervals: 0,
            converged: true,
        };
    }
    struct Seg {
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        depth: u32,
    }
    let width = b - a;
    let mut stack = Vec::new();
    // Four initial panels so a single bump cannot hide between samples.
    let panels = 4;
    let mut prev_x = a;
    let mut prev_f = f(a);
    for i in 1..=panels {
        let x = if i == panels {
            b
        } else {
            a + width * i as f64 / panels as f64
        };
        let fx = f(x);
        let m = 0.5 * (prev_x + x);
        let fm = f(m);
        let whole = (x - prev_x) / 6.0 * (prev_f + 4.0 * fm + fx);
        stack.push(Seg {
            a: prev_x,
            b: x,
            fa: prev_f,
            fm,
            fb: fx,
            whole,
            depth: 0,
        });
        prev_x = x;
        prev_f = fx;
    }
    stack.reverse();
    let mut value = 0.0;
    let mut error = 0.0;
    let mut intervals = 0usize;
    let mut converged = true;
    while let Some(s) = stack.pop() {
        let m = 0.5 * (s.a + s.b);
        let lm = 0.5 * (s.a + m);
        let rm = 0.5 * (m + s.b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - s.a) / 6.0 * (s.fa + 4.0 * flm + s.fm);
        let right = (s.b - m) / 6.0 * (s.fm + 4.0 * frm + s.fb);
        let diff = left + right - s.whole;
        let local_tol = abs_tol * (s.b - s.a) / width;
        let tiny = (s.b - s.a) <= 64.0 * f64::EPSILON * s.a.abs().max(s.b.abs()).max(1.0);
        let out_of_budget = intervals + stack.len() + 2 > budget;
        if diff.abs() <= 15.0 * local_tol || tiny || out_of_budget || s.depth >= 60 {
            if !(diff.abs() <= 15.0 * local_tol) {
                converged = false;
            }
            value += left + right + diff / 15.0;
            error += diff.abs() / 15.0;
            intervals += 1;
        } else {
            stack.push(Seg {
                a: m,
                b: s.b,
                fa: s.fm,
                fm: frm,
                fb: s.fb,
                whole: right,
                depth: s.depth + 1,
            });
            stack.push(Seg {
                a: s.a,
                b: m,
                fa: s.fa,
                fm: flm,
                fb: s.fm,
                whole: left,
                depth: s.depth + 1,
            });
        }
    }
    SimpsonResult {
        value,
        error,
        intervals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_polynomials_exactly() {
        let v = gauss(8, 0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-10);
    }

    #[test]
    fn simpson_smooth_and_kinked() {
        let r = adaptive_simpson(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-12, 100_000);
        assert!(r.converged);
        assert!((r.value - 2.0).abs() < 1e-11);
        let r = adaptive_simpson(|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-12, 100_000);
        assert!((r.value - (0.045 + 0.245)).abs() < 1e-11);
    }

    #[test]
    fn simpson_reports_budget_exhaustion() {
        let r = adaptive_simpson(|x: f64| x.sqrt(), 0.0, 1.0, 1e-15, 8);
        assert!(!r.converged);
    }
}
