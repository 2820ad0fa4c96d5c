//! Validated problem parameters and derived exponents.

use crate::error::{range_err, Result};
use serde::{Deserialize, Serialize};

/// Scalar parameters shared by every module. Construct with [`make_params`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    n: usize,
    p: f64,
    c1: f64,
    c2: f64,
    beta: f64,
    eps_reg: f64,
    lambda: f64,
    k: f64,
}

/// Lower end of the admissible exponent range, 2n/(n+1).
pub fn critical_exponent(n: usize) -> f64 {
    2.0 * n as f64 / (n as f64 + 1.0)
}

/// Strict upper bound min{p−1, (2−p)/(p−1), 1/2} on the auxiliary exponent λ.
pub fn lambda_bound(p: f64) -> f64 {
    (p - 1.0).min((2.0 - p) / (p - 1.0)).min(0.5)
}

pub fn make_params(
    n: usize,
    p: f64,
    eps_reg: f64,
    lambda: Option<f64>,
    k: Option<f64>,
) -> Result<ProblemParams> {
    if !(1..=3).contains(&n) {
        return range_err(format!("dimension n = {n} must be 1, 2 or 3"));
    }
    let p_lo = critical_exponent(n);
    if !(p.is_finite() && p > p_lo && p < 2.0) {
        return range_err(format!("p = {p} outside ({p_lo}, 2) for n = {n}"));
    }
    if !(eps_reg.is_finite() && eps_reg > 0.0) {
        return range_err(format!("eps_reg = {eps_reg} must be positive"));
    }
    let bound = lambda_bound(p);
    let lambda = match lambda {
        None => 0.5 * bound,
        Some(l) if l > 0.0 && l < bound => l,
        Some(l) => return range_err(format!("lambda = {l} outside (0, {bound})")),
    };
    let k = match k {
        None => p + 2.0,
        Some(k) if k.is_finite() && k > p + 1.0 => k,
        Some(k) => return range_err(format!("k = {k} must exceed p + 1 = {}", p + 1.0)),
    };
    Ok(ProblemParams {
        n,
        p,
        c1: 1.0,
        c2: 1.0,
        beta: p + n as f64 * (p - 2.0),
        eps_reg,
        lambda,
        k,
    })
}

impl ProblemParams {
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn c1(&self) -> f64 {
        self.c1
    }
    pub fn c2(&self) -> f64 {
        self.c2
    }
    /// β = p + n(p − 2)
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn eps_reg(&self) -> f64 {
        self.eps_reg
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn k(&self) -> f64 {
        self.k
    }

    /// Bracket exponent p/(p − 1 − λ) relating (u−l)/δ and ψ.
    pub fn rho_lambda(&self) -> f64 {
        self.p / (self.p - 1.0 - self.lambda)
    }

    /// Same parameters with a different regularization.
    pub fn with_eps_reg(&self, eps_reg: f64) -> Result<Self> {
        make_params(self.n, self.p, eps_reg, Some(self.lambda), Some(self.k))
    }

    /// Intrinsic time half-height δ^{2−p} ρ^p.
    pub fn intrinsic_height(&self, rho: f64, delta: f64) -> f64 {
        delta.powf(2.0 - self.p) * rho.powf(self.p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_value() {
        let pp = make_params(2, 1.5, 1e-6, None, None).unwrap();
        assert_eq!(pp.beta(), 0.5);
        assert_eq!(pp.k(), 3.5);
    }

    #[test]
    fn default_lambda_is_half_bound() {
        let pp = make_params(2, 1.8, 1e-6, None, None).unwrap();
        assert!((pp.lambda() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(make_params(1, 1.0, 1e-6, None, None).is_err());
        assert!(make_params(2, 4.0 / 3.0, 1e-6, None, None).is_err());
        assert!(make_params(2, 2.0, 1e-6, None, None).is_err());
        assert!(make_params(1, 1.5, 0.0, None, None).is_err());
        assert!(make_params(1, 1.5, 1e-6, Some(0.5), None).is_err());
        assert!(make_params(1, 1.5, 1e-6, None, Some(2.5)).is_err());
        assert!(make_params(4, 1.9, 1e-6, None, None).is_err());
    }

    #[test]
    fn beta_positive_iff_supercritical() {
        for n in 1..=3 {
            let pc = critical_exponent(n);
            for i in 1..200 {
                let p = 1.0 + i as f64 / 200.0;
                let beta = p + n as f64 * (p - 2.0);
                assert_eq!(beta > 0.0, p > pc, "n={n} p={p}");
                assert_eq!(make_params(n, p, 1e-6, None, None).is_ok(), p > pc);
            }
        }
    }
}
