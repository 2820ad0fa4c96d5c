//! Points in R^n for n ≤ 3 and ball volumes.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const MAX_DIM: usize = 3;

/// A point in R^n, 1 ≤ n ≤ 3. Unused trailing coordinates are zero so that
/// distances can always be taken over all three slots.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point {
    coords: [f64; MAX_DIM],
    dim: usize,
}

impl Point {
    /// Panics unless `1 <= coords.len() <= 3`.
    pub fn new(coords: &[f64]) -> Self {
        Self::try_from(coords.to_vec()).expect("point dimension must be 1, 2 or 3")
    }

    pub fn origin(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} unsupported");
        Self {
            coords: [0.0; MAX_DIM],
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    pub fn coord(&self, axis: usize) -> f64 {
        self.coords[axis]
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.coords
            .iter()
            .zip(other.coords.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `self + s * e_axis`
    pub fn shifted(&self, axis: usize, s: f64) -> Point {
        let mut out = *self;
        out.coords[axis] += s;
        out
    }

    pub fn offset(&self, delta: &[f64]) -> Point {
        let mut out = *self;
        for (c, d) in out.coords.iter_mut().zip(delta) {
            *c += d;
        }
        out
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = String;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        if v.is_empty() || v.len() > MAX_DIM {
            return Err(format!("point must have 1..=3 coordinates, got {}", v.len()));
        }
        if v.iter().any(|c| !c.is_finite()) {
            return Err("point coordinates must be finite".into());
        }
        let mut coords = [0.0; MAX_DIM];
        coords[..v.len()].copy_from_slice(&v);
        Ok(Self {
            coords,
            dim: v.len(),
        })
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.coords().to_vec()
    }
}

/// Volume of the unit ball ω_n.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => panic!("dimension {n} unsupported"),
    }
}

pub fn ball_volume(n: usize, r: f64) -> f64 {
    unit_ball_volume(n) * r.max(0.0).powi(n as i32)
}

/// Surface measure of the sphere of radius `s`; in one dimension the
/// "sphere" is two points and its counting measure is 2.
pub fn sphere_measure(n: usize, s: f64) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI * s,
        3 => 4.0 * PI * s * s,
        _ => panic!("dimension {n} unsupported"),
    }
}

/// vol_n(B_r(x) ∩ B_big(0)) where `a = |x|`.
pub fn lens_volume(n: usize, a: f64, r: f64, big: f64) -> f64 {
    if r <= 0.0 || big <= 0.0 || a >= r + big {
        return 0.0;
    }
    if a + r <= big {
        return ball_volume(n, r);
    }
    if a + big <= r {
        return ball_volume(n, big);
    }
    match n {
        1 => ((a + r).min(big) - (a - r).max(-big)).max(0.0),
        2 => {
            let c1 = ((a * a + r * r - big * big) / (2.0 * a * r)).clamp(-1.0, 1.0);
            let c2 = ((a * a + big * big - r * r) / (2.0 * a * big)).clamp(-1.0, 1.0);
            let k = (-a + r + big) * (a + r - big) * (a - r + big) * (a + r + big);
            r * r * c1.acos() + big * big * c2.acos() - 0.5 * k.max(0.0).sqrt()
        }
        3 => {
            let s = r + big - a;
            PI * s * s * (a * a + 2.0 * a * big - 3.0 * big * big + 2.0 * a * r + 6.0 * big * r
                - 3.0 * r * r)
                / (12.0 * a)
        }
        _ => panic!("dimension {n} unsupported"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_roundtrip_and_distance() {
        let p = Point::new(&[3.0, 4.0]);
        assert_eq!(p.dim(), 2);
        assert_eq!(p.norm(), 5.0);
        let v: Vec<f64> = p.into();
        assert_eq!(v, vec![3.0, 4.0]);
        assert!(Point::try_from(vec![]).is_err());
        assert!(Point::try_from(vec![0.0; 4]).is_err());
    }

    #[test]
    fn lens_limits() {
        for n in 1..=3 {
            assert!((lens_volume(n, 0.0, 0.3, 1.0) - ball_volume(n, 0.3)).abs() < 1e-15);
            assert_eq!(lens_volume(n, 2.0, 0.5, 1.0), 0.0);
            assert!((lens_volume(n, 0.1, 5.0, 1.0) - ball_volume(n, 1.0)).abs() < 1e-15);
        }
        // two unit disks at distance 1: 2π/3 − √3/2
        let want = 2.0 * PI / 3.0 - 3f64.sqrt() / 2.0;
        assert!((lens_volume(2, 1.0, 1.0, 1.0) - want).abs() < 1e-13);
        // two unit balls at distance 1: 5π/12
        assert!((lens_volume(3, 1.0, 1.0, 1.0) - 5.0 * PI / 12.0).abs() < 1e-13);
    }

    #[test]
    fn lens_continuous_at_transitions() {
        for n in 1..=3 {
            let a = 0.4;
            let r_in = 0.6 - 1e-9;
            let r_out = 0.6 + 1e-9;
            let d = lens_volume(n, a, r_out, 1.0) - lens_volume(n, a, r_in, 1.0);
            assert!(d.abs() < 1e-7, "n={n} jump {d}");
        }
    }
}
